"""Embedding sets and the character pronunciation-distance matrix.

Entry (j, k) of the raw matrix is the mean normalized DTW distance over all
pairs of sampled segments of characters j and k. The normalized form divides
each row by its diagonal, so self-distance reads 1.0 and smaller values mean
"closer than the character is to itself on average".
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import distance
from .distance import VectorMetric
from .errors import AtpcError, ParseError

log = logging.getLogger(__name__)

MAGIC = "ATPC"


@dataclass
class EmbeddingSet:
    segments: dict[str, list[np.ndarray]]
    sample_cap: int
    min_occurrences: int = 3
    rng_seed: int = 0
    occurrences: dict[str, int] = field(default_factory=dict)

    @property
    def vocab(self) -> list[str]:
        return list(self.segments)

    def __contains__(self, ch):
        return ch in self.segments

    def __len__(self):
        return len(self.segments)


@dataclass
class AtpcMatrix:
    vocab: list[str]
    values: np.ndarray
    normalized: bool = False
    metric: VectorMetric = VectorMetric.COSINE

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.metric = VectorMetric.parse(self.metric)
        c = len(self.vocab)
        if self.values.shape != (c, c):
            raise AtpcError(f"matrix shape {self.values.shape} does not match vocabulary size {c}")
        if len(set(self.vocab)) != c:
            raise AtpcError("matrix vocabulary has duplicate entries")
        self._index = {ch: i for i, ch in enumerate(self.vocab)}

    def index(self, ch):
        """Row/column of ``ch`` or None when it is out of vocabulary."""
        return self._index.get(ch)

    def __getitem__(self, pair):
        j, k = pair
        return float(self.values[self._index[j], self._index[k]])

    def __eq__(self, other):
        if not isinstance(other, AtpcMatrix):
            return NotImplemented
        return (self.vocab == other.vocab and self.normalized == other.normalized
                and self.metric == other.metric and np.array_equal(self.values, other.values))


def _seed_for(seed, symbol):
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *(ord(c) for c in symbol)])


def build_embedding_set(segments, sample_cap=100, min_occ=3, seed=0) -> EmbeddingSet:
    """Group segments by character and subsample.

    Characters seen fewer than ``min_occ`` times are dropped; the rest keep
    ``min(sample_cap, occurrences)`` segments, drawn uniformly without
    replacement from a generator seeded by (seed, character). Kept segments
    stay in corpus order.
    """
    if sample_cap < 1 or min_occ < 1:
        raise AtpcError("sample_cap and min_occ must be >= 1")
    groups: dict[str, list[np.ndarray]] = {}
    dim = None
    for seg in segments:
        vec = np.asarray(seg.vectors)
        if vec.ndim != 2 or vec.shape[0] == 0:
            raise AtpcError(f"segment for {seg.symbol!r} is empty")
        if dim is None:
            dim = vec.shape[1]
        elif vec.shape[1] != dim:
            raise AtpcError(f"segment for {seg.symbol!r} has dim {vec.shape[1]}, expected {dim}")
        groups.setdefault(seg.symbol, []).append(vec)
    if not groups:
        raise AtpcError("no segments to build an embedding set from")

    kept, counts = {}, {}
    for ch in sorted(groups):
        segs = groups[ch]
        counts[ch] = len(segs)
        if len(segs) < min_occ:
            continue
        if len(segs) > sample_cap:
            rng = np.random.default_rng(_seed_for(seed, ch))
            pick = np.sort(rng.choice(len(segs), size=sample_cap, replace=False))
            segs = [segs[i] for i in pick]
        kept[ch] = segs
    dropped = len(groups) - len(kept)
    if dropped:
        log.info("dropped %d characters with fewer than %d occurrences", dropped, min_occ)
    return EmbeddingSet(kept, sample_cap, min_occ, seed, counts)


def pair_distance(eset: EmbeddingSet, c_j, c_k, metric=VectorMetric.COSINE) -> float:
    """Mean normalized DTW distance over all segment pairs of two characters."""
    for ch in (c_j, c_k):
        if ch not in eset:
            raise AtpcError(f"character {ch!r} is not in the embedding set")
    return float(_Packed(eset, [c_j, c_k], metric).pairs([0], [1])[0])


class _Packed:
    """Embedding set flattened into contiguous arrays for the compiled kernel."""

    def __init__(self, eset, vocab, metric):
        self.metric = VectorMetric.parse(metric)
        segs, char_ptr = [], [0]
        for ch in vocab:
            segs.extend(eset.segments[ch])
            char_ptr.append(len(segs))
        lengths = np.array([s.shape[0] for s in segs], dtype=np.int64)
        self.seg_hi = np.cumsum(lengths)
        self.seg_lo = self.seg_hi - lengths
        self.frames = np.ascontiguousarray(np.concatenate(segs).astype(np.float64))
        self.char_ptr = np.array(char_ptr, dtype=np.int64)
        self.sqn = distance._sq_norms(self.frames)
        if self.metric is VectorMetric.COSINE and not (self.sqn > 0).all():
            bad = int(np.argmin(self.sqn > 0))
            s = int(np.searchsorted(self.seg_hi, bad, side="right"))
            c = int(np.searchsorted(self.char_ptr, s, side="right")) - 1
            raise AtpcError(f"zero embedding vector in a segment of {vocab[c]!r}; cosine distance undefined")

    def pairs(self, pj, pk):
        pj = np.ascontiguousarray(pj, dtype=np.int64)
        pk = np.ascontiguousarray(pk, dtype=np.int64)
        out = np.empty(pj.shape[0])
        distance._pair_means(self.frames, self.sqn, self.seg_lo, self.seg_hi, self.char_ptr,
                            pj, pk, self.metric.code, out)
        return out


def build_matrix(eset: EmbeddingSet, metric=VectorMetric.COSINE, workers=1) -> AtpcMatrix:
    """Raw distance matrix over the embedding set's vocabulary.

    Only the upper triangle and diagonal are computed; the lower triangle is
    mirrored. Each cell is computed independently, so the result does not
    depend on ``workers``.
    """
    if len(eset) == 0:
        raise AtpcError("embedding set is empty")
    metric = VectorMetric.parse(metric)
    vocab = eset.vocab
    packed = _Packed(eset, vocab, metric)
    pj, pk = np.triu_indices(len(vocab))
    out = np.empty(pj.shape[0])

    # weight by work so chunks are balanced; M*N DTW calls per cell
    n_seg = np.diff(packed.char_ptr)
    work = np.cumsum(n_seg[pj] * n_seg[pk])
    n_chunks = max(1, workers) * 4
    cut = np.searchsorted(work, np.linspace(0, work[-1], n_chunks + 1)[1:-1])
    bounds = [0, *cut.tolist(), pj.shape[0]]
    spans = [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

    def run(span):
        a, b = span
        out[a:b] = packed.pairs(pj[a:b], pk[a:b])
        return b - a

    done = 0
    if workers <= 1:
        for span in spans:
            done += run(span)
            log.debug("matrix cells %d/%d", done, pj.shape[0])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for n in pool.map(run, spans):
                done += n
                log.debug("matrix cells %d/%d", done, pj.shape[0])

    values = np.empty((len(vocab), len(vocab)))
    values[pj, pk] = out
    values[pk, pj] = out
    return AtpcMatrix(list(vocab), values, normalized=False, metric=metric)


def normalize(matrix: AtpcMatrix) -> AtpcMatrix:
    """Divide every row by its diagonal entry."""
    diag = np.diag(matrix.values).copy()
    bad = np.flatnonzero(~(diag > 0))
    if bad.size:
        ch = matrix.vocab[int(bad[0])]
        raise AtpcError(f"cannot normalize: self-distance of {ch!r} is {diag[bad[0]]!r} (must be > 0)")
    values = matrix.values / diag[:, None]
    np.fill_diagonal(values, 1.0)
    return AtpcMatrix(list(matrix.vocab), values, normalized=True, metric=matrix.metric)


# ---------------------------------------------------------------------------
# text format


def save_matrix(matrix: AtpcMatrix, path):
    """Write the matrix text format.

    Values use the shortest decimal that round-trips the float64 exactly.
    """
    for ch in matrix.vocab:
        if not ch or any(c.isspace() for c in ch):
            raise AtpcError(f"vocabulary entry {ch!r} cannot be written (empty or contains whitespace)")
    kind = "norm" if matrix.normalized else "raw"
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{MAGIC} {len(matrix.vocab)} {kind} {matrix.metric.value}\n")
        f.write(" ".join(matrix.vocab) + "\n")
        for row in matrix.values.tolist():
            f.write(" ".join(map(repr, row)))
            f.write("\n")


def load_matrix(path) -> AtpcMatrix:
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 4 or header[0] != MAGIC:
            raise ParseError(path, 1, "expected header 'ATPC <C> <raw|norm> <metric>'")
        try:
            c = int(header[1])
        except ValueError:
            raise ParseError(path, 1, f"bad size {header[1]!r}") from None
        if c < 1:
            raise ParseError(path, 1, f"bad size {c}")
        if header[2] not in ("raw", "norm"):
            raise ParseError(path, 1, f"bad kind {header[2]!r} (expected raw or norm)")
        try:
            metric = VectorMetric.parse(header[3])
        except AtpcError as exc:
            raise ParseError(path, 1, str(exc)) from None
        vocab = f.readline().split()
        if len(vocab) != c:
            raise ParseError(path, 2, f"expected {c} vocabulary entries, got {len(vocab)}")
        if len(set(vocab)) != c:
            raise ParseError(path, 2, "duplicate vocabulary entries")
        values = np.empty((c, c))
        for j in range(c):
            line = f.readline()
            lineno = j + 3
            if not line:
                raise ParseError(path, lineno, f"missing row {j} ({vocab[j]!r}); file has {j} of {c} rows")
            parts = line.split()
            if len(parts) != c:
                raise ParseError(path, lineno, f"row {j} ({vocab[j]!r}) has {len(parts)} values, expected {c}")
            try:
                values[j] = [float(v) for v in parts]
            except ValueError as exc:
                raise ParseError(path, lineno, f"row {j}: {exc}") from None
        if f.readline().strip():
            raise ParseError(path, c + 3, "trailing data after the last row")
    return AtpcMatrix(vocab, values, normalized=header[2] == "norm", metric=metric)

