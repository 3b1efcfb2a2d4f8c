import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from atpc import AtpcError, ParseError
from atpc.corpus import EmbeddingSegment, SynthConfig, generate_synthetic_corpus, iter_segments
from atpc.distance import dtw_cost_only
from atpc.matrix import (
    AtpcMatrix, build_embedding_set, build_matrix, load_matrix, normalize, pair_distance,
    save_matrix,
)
from atpc.metrics import disparity

from oracles import eq1_double_loop


def segs(symbol, arrays):
    return [EmbeddingSegment(symbol, np.asarray(a, dtype=float).reshape(len(a), -1)) for a in arrays]


@pytest.fixture(scope="module")
def small_corpus():
    return generate_synthetic_corpus(SynthConfig(seed=11, n_chars=5, n_groups=3, n_utts=40, dim=8))


@pytest.fixture(scope="module")
def small_set(small_corpus):
    c = small_corpus
    return build_embedding_set(iter_segments(c.alignments, c.embeddings), sample_cap=10, min_occ=3, seed=1)


# ---------------------------------------------------------------- embedding set

def test_rare_characters_dropped():
    stream = segs("a", [[1], [2]]) + segs("b", [[1], [2], [3]])
    es = build_embedding_set(stream, sample_cap=100, min_occ=3)
    assert "a" not in es and "b" in es
    assert es.occurrences == {"a": 2, "b": 3}


def test_below_cap_all_kept():
    stream = segs("a", [[i] for i in range(50)])
    es = build_embedding_set(stream, sample_cap=100)
    assert [s[0, 0] for s in es.segments["a"]] == list(range(50))


def test_cap_sampling_is_deterministic():
    stream = segs("a", [[i] for i in range(500)])
    one = build_embedding_set(stream, sample_cap=100, seed=4)
    two = build_embedding_set(stream, sample_cap=100, seed=4)
    other = build_embedding_set(stream, sample_cap=100, seed=5)
    picked = [s[0, 0] for s in one.segments["a"]]
    assert len(picked) == 100 and len(set(picked)) == 100
    assert picked == [s[0, 0] for s in two.segments["a"]]
    assert picked != [s[0, 0] for s in other.segments["a"]]
    assert picked == sorted(picked)


def test_sampling_independent_of_other_characters():
    a = segs("a", [[i] for i in range(300)])
    b = segs("b", [[i] for i in range(300)])
    alone = build_embedding_set(a, sample_cap=20, seed=0)
    mixed = build_embedding_set(b + a, sample_cap=20, seed=0)
    assert [s[0, 0] for s in alone.segments["a"]] == [s[0, 0] for s in mixed.segments["a"]]


def test_embedding_set_errors():
    with pytest.raises(AtpcError, match="no segments"):
        build_embedding_set([], sample_cap=10)
    with pytest.raises(AtpcError):
        build_embedding_set(segs("a", [[1]]), sample_cap=0)


# ---------------------------------------------------------------- pair distance and build

def test_pair_distance_identical_singletons():
    es = build_embedding_set(segs("a", [[1, 2]]) + segs("b", [[1, 2]]), sample_cap=5, min_occ=1)
    assert pair_distance(es, "a", "b", "euclidean") == 0.0


def test_pair_distance_hand_mean():
    # a: V1=(0,1), V2=(3); b: W=(0,0,1)
    # d_norm(V1, W): path (0,0),(0,1),(1,2) cost 0 -> 0
    # d_norm(V2, W): single V frame aligned to 3 W frames: (3+3+2)/3 = 8/3
    es = build_embedding_set(segs("a", [[0, 1], [3]]) + segs("b", [[0, 0, 1]]), sample_cap=5, min_occ=1)
    assert pair_distance(es, "a", "b", "euclidean") == pytest.approx((0 + 8 / 3) / 2, abs=1e-12)
    assert pair_distance(es, "b", "a", "euclidean") == pair_distance(es, "a", "b", "euclidean")


def test_self_distance_includes_zero_diagonal(small_set):
    for ch in small_set.vocab:
        S = small_set.segments[ch]
        expect = eq1_double_loop(S, S, lambda v, w: dtw_cost_only(v, w, "cosine"))
        assert pair_distance(small_set, ch, ch) == pytest.approx(expect, abs=1e-12)


def test_pair_distance_unknown_character(small_set):
    with pytest.raises(AtpcError, match="not in the embedding set"):
        pair_distance(small_set, small_set.vocab[0], "?")


@pytest.mark.parametrize("metric", ["euclidean", "cosine"])
def test_build_matrix_matches_double_loop(small_set, metric):
    m = build_matrix(small_set, metric)
    for j, cj in enumerate(m.vocab):
        for k, ck in enumerate(m.vocab):
            expect = eq1_double_loop(small_set.segments[cj], small_set.segments[ck],
                                     lambda v, w: dtw_cost_only(v, w, metric))
            assert m.values[j, k] == pytest.approx(expect, abs=1e-9)
            # cells are computed for j <= k and mirrored
            a, b = (cj, ck) if j <= k else (ck, cj)
            assert m.values[j, k] == pair_distance(small_set, a, b, metric)
    assert np.array_equal(m.values, m.values.T)
    assert (np.diag(m.values) > 0).all()


def test_build_matrix_worker_count_invariant(small_set):
    base = build_matrix(small_set, "cosine", workers=1)
    for w in (2, 3, 8):
        assert build_matrix(small_set, "cosine", workers=w).values.tobytes() == base.values.tobytes()


def test_one_character_matrix():
    es = build_embedding_set(segs("a", [[1.0], [2.0], [3.0]]), sample_cap=5)
    m = build_matrix(es, "euclidean")
    assert m.values.shape == (1, 1)
    # mean over the 3x3 grid of |x - y|: (0+1+2 + 1+0+1 + 2+1+0) / 9
    assert m.values[0, 0] == pytest.approx(8 / 9)


def test_cosine_zero_frame_rejected():
    es = build_embedding_set(segs("a", [[[1, 0]], [[0, 0]], [[1, 1]]]), sample_cap=5)
    with pytest.raises(AtpcError, match="zero embedding vector"):
        build_matrix(es, "cosine")


def test_homophones_closer_than_non_homophones():
    c = generate_synthetic_corpus(SynthConfig(seed=2, n_chars=8, n_groups=3, n_utts=80))
    es = build_embedding_set(iter_segments(c.alignments, c.embeddings), sample_cap=15)
    rep = disparity(build_matrix(es, "cosine"), c.lexicon)
    assert rep.mean_homophone < rep.mean_non_homophone


# ---------------------------------------------------------------- normalization

def test_normalize_row_division():
    raw = AtpcMatrix(["a", "b"], [[2.0, 3.0], [3.0, 4.0]])
    norm = normalize(raw)
    assert norm.normalized
    assert norm.values.tolist() == [[1.0, 1.5], [0.75, 1.0]]
    # symmetric raw, asymmetric normalized when diagonals differ
    assert norm.values[0, 1] != norm.values[1, 0]


def test_normalize_zero_diagonal_names_character():
    raw = AtpcMatrix(["a", "b"], [[2.0, 3.0], [3.0, 0.0]])
    with pytest.raises(AtpcError, match="'b'"):
        normalize(raw)


positive = st.floats(1e-6, 1e6, allow_nan=False)


@settings(max_examples=100)
@given(st.integers(1, 6).flatmap(lambda n: st.lists(positive, min_size=n * n, max_size=n * n)))
def test_normalize_properties(vals):
    n = int(round(len(vals) ** 0.5))
    raw = AtpcMatrix([chr(0x4E00 + i) for i in range(n)], np.array(vals).reshape(n, n))
    norm = normalize(raw)
    assert (np.diag(norm.values) == 1.0).all()
    d = np.diag(raw.values)
    assert ((norm.values < 1.0) == (raw.values < d[:, None])).all()
    assert normalize(norm) == norm


# ---------------------------------------------------------------- file format

def test_matrix_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    m = AtpcMatrix(["刮", "瓜", "帽"], rng.random((3, 3)) * 500, normalized=False, metric="euclidean")
    save_matrix(m, tmp_path / "m.atpc")
    back = load_matrix(tmp_path / "m.atpc")
    assert back == m
    assert back.values.tobytes() == m.values.tobytes()
    n = normalize(m)
    save_matrix(n, tmp_path / "n.atpc")
    assert load_matrix(tmp_path / "n.atpc").normalized is True


def test_matrix_header_layout(tmp_path):
    m = AtpcMatrix(["a", "b"], [[1.0, 0.5], [0.5, 1.0]], normalized=True, metric="cosine")
    save_matrix(m, tmp_path / "m.atpc")
    lines = (tmp_path / "m.atpc").read_text(encoding="utf-8").splitlines()
    assert lines == ["ATPC 2 norm cosine", "a b", "1.0 0.5", "0.5 1.0"]


def test_matrix_short_row(tmp_path):
    p = tmp_path / "bad.atpc"
    p.write_text("ATPC 3 raw cosine\na b c\n1 2 3\n4 5\n7 8 9\n", encoding="utf-8")
    with pytest.raises(ParseError, match="row 1") as ei:
        load_matrix(p)
    assert ei.value.lineno == 4


@pytest.mark.parametrize("text,line", [
    ("ATPX 1 raw cosine\na\n1\n", 1),
    ("ATPC 2 raw cosine\na\n1 2\n3 4\n", 2),
    ("ATPC 1 wat cosine\na\n1\n", 1),
    ("ATPC 2 raw cosine\na b\n1 2\n", 4),
    ("ATPC 1 raw cosine\na\nx\n", 3),
])
def test_matrix_parse_errors(tmp_path, text, line):
    p = tmp_path / "bad.atpc"
    p.write_text(text, encoding="utf-8")
    with pytest.raises(ParseError) as ei:
        load_matrix(p)
    assert ei.value.lineno == line


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1), st.booleans())
def test_matrix_round_trip_random(tmp_path_factory, n, seed, norm):
    rng = np.random.default_rng(seed)
    vals = rng.random((n, n)) * 10.0 ** rng.integers(-5, 5)
    m = AtpcMatrix([chr(0x4E00 + i) for i in range(n)], vals, normalized=norm)
    p = tmp_path_factory.mktemp("m") / "m.atpc"
    save_matrix(m, p)
    assert load_matrix(p).values.tobytes() == m.values.tobytes()
