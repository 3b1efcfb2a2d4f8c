"""Corpus ingestion, embedding segmentation and synthetic corpora.

File formats
------------
alignments
    UTF-8, one JSON record per line:
    ``{"utt": "u1", "tokens": [{"s": "刮", "b": 230, "e": 470}, ...]}``
    with ``b``/``e`` the start/end time in integer milliseconds.
embeddings
    ``ATPCEMB1`` magic, little-endian u32 ``frame_count, dim, frame_rate_hz``,
    then ``frame_count * dim`` little-endian float32 values, frame-major.
hotwords
    UTF-8, one hotword per line.
lexicon
    UTF-8 TSV, ``character<TAB>pronunciation_key``.
transcripts
    UTF-8 TSV, ``utt_id<TAB>text``.
"""
from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AtpcError, ParseError

log = logging.getLogger(__name__)

EMB_MAGIC = b"ATPCEMB1"
_EMB_HEADER = struct.Struct("<8sIII")


@dataclass(frozen=True)
class Token:
    symbol: str
    start_ms: int
    end_ms: int


@dataclass
class TokenAlignment:
    utterance_id: str
    tokens: list[Token] = field(default_factory=list)

    def __post_init__(self):
        last_end = None
        for t in self.tokens:
            if t.start_ms < 0:
                raise AtpcError(f"{self.utterance_id}: start_ms must be non-negative ({t})")
            if t.end_ms <= t.start_ms:
                raise AtpcError(f"{self.utterance_id}: end_ms must exceed start_ms ({t})")
            if last_end is not None and t.start_ms < last_end:
                raise AtpcError(f"{self.utterance_id}: tokens overlap or are unsorted at {t}")
            last_end = t.end_ms

    @property
    def text(self) -> str:
        return "".join(t.symbol for t in self.tokens)


@dataclass
class UtteranceEmbedding:
    utterance_id: str
    frame_rate_hz: int
    frames: np.ndarray  # float32, (n_frames, dim)

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 2:
            raise AtpcError(f"{self.utterance_id}: frames must be 2-D, got shape {self.frames.shape}")
        if self.frames.shape[0] == 0 or self.frames.shape[1] == 0:
            raise AtpcError(f"{self.utterance_id}: empty embedding (shape {self.frames.shape})")
        if self.frame_rate_hz <= 0:
            raise AtpcError(f"{self.utterance_id}: frame rate must be positive")

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def __len__(self):
        return self.frames.shape[0]


@dataclass
class EmbeddingSegment:
    symbol: str
    vectors: np.ndarray  # (length >= 1, dim)


# ---------------------------------------------------------------------------
# alignments


def parse_alignment_line(line: str) -> TokenAlignment:
    rec = json.loads(line)
    if not isinstance(rec, dict) or "utt" not in rec or "tokens" not in rec:
        raise ValueError("record needs 'utt' and 'tokens'")
    utt = rec["utt"]
    if not isinstance(utt, str) or not utt:
        raise ValueError("'utt' must be a non-empty string")
    tokens = []
    for n, tok in enumerate(rec["tokens"]):
        try:
            s, b, e = tok["s"], tok["b"], tok["e"]
        except (KeyError, TypeError):
            raise ValueError(f"token {n}: missing field (need s, b, e)") from None
        if not isinstance(s, str) or not s:
            raise ValueError(f"token {n}: symbol must be a non-empty string")
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (b, e)):
            raise ValueError(f"token {n}: b and e must be integers")
        if b < 0:
            raise ValueError(f"token {n}: start_ms must be non-negative")
        if e <= b:
            raise ValueError(f"token {n}: end_ms must exceed start_ms")
        tokens.append(Token(s, b, e))
    for n in range(1, len(tokens)):
        if tokens[n].start_ms < tokens[n - 1].end_ms:
            raise ValueError(f"token {n}: overlaps or precedes token {n - 1}")
    return TokenAlignment(utt, tokens)


def load_alignments(path) -> list[TokenAlignment]:
    """Read an alignment file; every bad line is reported in one ParseError."""
    path = Path(path)
    out, problems, seen = [], [], {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                ali = parse_alignment_line(line)
            except (ValueError, AtpcError) as exc:
                problems.append((lineno, str(exc)))
                continue
            if ali.utterance_id in seen:
                problems.append((lineno, f"duplicate utterance_id {ali.utterance_id!r} "
                                         f"(first on line {seen[ali.utterance_id]})"))
                continue
            seen[ali.utterance_id] = lineno
            out.append(ali)
    if problems:
        lineno, detail = problems[0]
        if len(problems) > 1:
            detail += "; " + "; ".join(f"line {n}: {d}" for n, d in problems[1:])
        raise ParseError(path, lineno, detail)
    return out


def load_alignment_dir(directory) -> list[TokenAlignment]:
    """Load every ``*.jsonl`` file of a directory, in file-name order."""
    directory = Path(directory)
    files = sorted(directory.glob("*.jsonl"))
    if not files:
        raise AtpcError(f"{directory}: no *.jsonl alignment files")
    out, seen = [], set()
    for p in files:
        for ali in load_alignments(p):
            if ali.utterance_id in seen:
                raise ParseError(p, None, f"duplicate utterance_id {ali.utterance_id!r}")
            seen.add(ali.utterance_id)
            out.append(ali)
    return out


def format_alignment(ali: TokenAlignment) -> str:
    rec = {"utt": ali.utterance_id,
           "tokens": [{"s": t.symbol, "b": t.start_ms, "e": t.end_ms} for t in ali.tokens]}
    return json.dumps(rec, ensure_ascii=False, separators=(",", ":"))


def save_alignments(alignments, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for ali in alignments:
            f.write(format_alignment(ali) + "\n")


# ---------------------------------------------------------------------------
# embeddings


def save_embeddings(emb: UtteranceEmbedding, path):
    frames = np.ascontiguousarray(emb.frames, dtype="<f4")
    n, dim = frames.shape
    with open(path, "wb") as f:
        f.write(_EMB_HEADER.pack(EMB_MAGIC, n, dim, emb.frame_rate_hz))
        f.write(frames.tobytes())


def load_embeddings(path, utterance_id=None) -> UtteranceEmbedding:
    """Read a binary embedding file. The utterance id defaults to the file stem."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _EMB_HEADER.size:
        raise ParseError(path, None, f"truncated header: {len(data)} of {_EMB_HEADER.size} bytes")
    magic, n, dim, rate = _EMB_HEADER.unpack_from(data)
    if magic != EMB_MAGIC:
        raise ParseError(path, None, f"bad magic {magic!r}")
    if n == 0 or dim == 0:
        raise ParseError(path, None, f"empty embedding: frames={n}, dim={dim}")
    if rate == 0:
        raise ParseError(path, None, "frame_rate_hz must be positive")
    expected = n * dim * 4
    actual = len(data) - _EMB_HEADER.size
    if actual != expected:
        raise ParseError(path, None, f"payload size mismatch: expected {expected} bytes, got {actual}")
    frames = np.frombuffer(data, dtype="<f4", offset=_EMB_HEADER.size).reshape(n, dim)
    return UtteranceEmbedding(utterance_id or path.stem, int(rate), frames.astype(np.float32))


def load_embedding_dir(directory, utterance_ids) -> dict[str, UtteranceEmbedding]:
    directory = Path(directory)
    out = {}
    for utt in utterance_ids:
        p = directory / f"{utt}.emb"
        if not p.exists():
            raise AtpcError(f"{p}: missing embedding file for utterance {utt!r}")
        out[utt] = load_embeddings(p, utt)
    return out


# ---------------------------------------------------------------------------
# segmentation


def ms_to_frame(ms: int, frame_rate_hz: int) -> int:
    # exact rational arithmetic; x.5 rounds away from zero
    num = ms * frame_rate_hz
    q, r = divmod(num, 1000)
    return q + (1 if 2 * r >= 1000 else 0)


def segment(embedding: UtteranceEmbedding, alignment: TokenAlignment) -> list[EmbeddingSegment]:
    """Cut an utterance embedding into one segment per aligned token.

    A token (b, e) covers frames [round(b*F/1000), round(e*F/1000)). Empty
    ranges are widened to one frame; an end overrunning the utterance by one
    frame is clamped.
    """
    if embedding.utterance_id != alignment.utterance_id:
        raise AtpcError(f"utterance mismatch: embedding {embedding.utterance_id!r} "
                        f"vs alignment {alignment.utterance_id!r}")
    n = len(embedding)
    rate = embedding.frame_rate_hz
    out = []
    for t in alignment.tokens:
        lo = ms_to_frame(t.start_ms, rate)
        hi = ms_to_frame(t.end_ms, rate)
        if hi <= lo:
            hi = lo + 1
        if hi > n + 1 or lo >= n:
            if hi == n + 1 and lo == n:
                # one-frame token pushed past the end by rounding
                lo, hi = n - 1, n
            else:
                raise AtpcError(f"{alignment.utterance_id}: token {t.symbol!r} [{t.start_ms}, {t.end_ms}) ms "
                                f"-> frames [{lo}, {hi}) lies beyond the last frame ({n} frames)")
        hi = min(hi, n)
        out.append(EmbeddingSegment(t.symbol, embedding.frames[lo:hi]))
    return out


def iter_segments(alignments, embeddings):
    """Yield segments for every alignment with a matching embedding."""
    for ali in alignments:
        emb = embeddings.get(ali.utterance_id)
        if emb is None:
            raise AtpcError(f"no embedding for utterance {ali.utterance_id!r}")
        yield from segment(emb, ali)


# ---------------------------------------------------------------------------
# text inputs


def load_hotwords(path) -> list[str]:
    path = Path(path)
    out, seen = [], {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            word = line.strip()
            if not word:
                continue
            if word in seen:
                raise ParseError(path, lineno, f"duplicate hotword {word!r} (first on line {seen[word]})")
            seen[word] = lineno
            out.append(word)
    return out


def save_hotwords(hotwords, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for w in hotwords:
            f.write(w + "\n")


def load_lexicon(path) -> dict[str, str]:
    path = Path(path)
    lex = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ParseError(path, lineno, "expected 'character<TAB>pronunciation_key'")
            ch, key = parts
            if ch in lex and lex[ch] != key:
                raise ParseError(path, lineno, f"conflicting keys for {ch!r}: {lex[ch]!r} vs {key!r}")
            lex[ch] = key
    return lex


def save_lexicon(lexicon, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for ch, key in lexicon.items():
            f.write(f"{ch}\t{key}\n")


def load_transcripts(path) -> dict[str, str]:
    path = Path(path)
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            utt, sep, text = line.partition("\t")
            if not sep or not utt:
                raise ParseError(path, lineno, "expected 'utt_id<TAB>text'")
            if utt in out:
                raise ParseError(path, lineno, f"duplicate utterance_id {utt!r}")
            out[utt] = text
    return out


def save_transcripts(transcripts, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for utt, text in transcripts.items():
            f.write(f"{utt}\t{text}\n")


# ---------------------------------------------------------------------------
# synthetic corpora


@dataclass
class SynthConfig:
    """Knobs for the synthetic corpus.

    Every pronunciation group owns a prototype: ``n_states`` random vectors.
    A token of that group is ``n_states`` runs of the prototype vectors
    (total length jittered around ``frames_per_token``) plus isotropic
    Gaussian noise of standard deviation ``noise``.
    """
    seed: int = 7
    n_chars: int = 20
    n_groups: int = 8
    n_utts: int = 500
    min_len: int = 6
    max_len: int = 12
    dim: int = 16
    n_states: int = 3
    frames_per_token: int = 8
    length_jitter: float = 0.2
    noise: float = 0.3
    frame_rate_hz: int = 50
    first_codepoint: int = 0x4E00


@dataclass
class SyntheticCorpus:
    vocab: list[str]
    lexicon: dict[str, str]
    alignments: list[TokenAlignment]
    embeddings: dict[str, UtteranceEmbedding]
    transcripts: dict[str, str]


def synthetic_vocab(config: SynthConfig) -> tuple[list[str], dict[str, str]]:
    vocab = [chr(config.first_codepoint + i) for i in range(config.n_chars)]
    lexicon = {ch: f"p{i % config.n_groups:02d}" for i, ch in enumerate(vocab)}
    return vocab, lexicon


def _token_frames(proto, length, noise, rng):
    n_states = proto.shape[0]
    # state k fills frames [k*L/K, (k+1)*L/K)
    idx = (np.arange(length) * n_states) // length
    frames = proto[idx]
    if noise > 0:
        frames = frames + noise * rng.standard_normal(frames.shape)
    return frames


def generate_synthetic_corpus(config: SynthConfig) -> SyntheticCorpus:
    if config.n_chars <= 0:
        raise AtpcError("synthetic vocabulary is empty")
    if config.n_utts <= 0:
        raise AtpcError("synthetic corpus needs at least one utterance")
    if not 1 <= config.n_groups <= config.n_chars:
        raise AtpcError("n_groups must be in [1, n_chars]")
    if not 1 <= config.min_len <= config.max_len:
        raise AtpcError("need 1 <= min_len <= max_len")
    if config.n_states < 1 or config.frames_per_token < config.n_states:
        raise AtpcError("frames_per_token must be >= n_states >= 1")
    if config.noise < 0 or not 0 <= config.length_jitter < 1:
        raise AtpcError("noise must be >= 0 and length_jitter in [0, 1)")

    rng = np.random.default_rng(config.seed)
    vocab, lexicon = synthetic_vocab(config)
    keys = sorted(set(lexicon.values()))
    protos = {k: rng.standard_normal((config.n_states, config.dim)) for k in keys}

    ms_per_frame = 1000 / config.frame_rate_hz
    lo_len = max(config.n_states, math.ceil(config.frames_per_token * (1 - config.length_jitter)))
    hi_len = max(lo_len, math.floor(config.frames_per_token * (1 + config.length_jitter)))

    alignments, embeddings, transcripts = [], {}, {}
    width = len(str(config.n_utts - 1))
    for u in range(config.n_utts):
        utt = f"syn{u:0{width}d}"
        n_tok = int(rng.integers(config.min_len, config.max_len + 1))
        chars = [vocab[i] for i in rng.integers(0, len(vocab), n_tok)]
        blocks, tokens, pos = [], [], 0
        for ch in chars:
            length = int(rng.integers(lo_len, hi_len + 1))
            blocks.append(_token_frames(protos[lexicon[ch]], length, config.noise, rng))
            tokens.append(Token(ch, round(pos * ms_per_frame), round((pos + length) * ms_per_frame)))
            pos += length
        frames = np.concatenate(blocks).astype(np.float32)
        alignments.append(TokenAlignment(utt, tokens))
        embeddings[utt] = UtteranceEmbedding(utt, config.frame_rate_hz, frames)
        transcripts[utt] = "".join(chars)
    return SyntheticCorpus(vocab, lexicon, alignments, embeddings, transcripts)


def save_synthetic_corpus(corpus: SyntheticCorpus, out_dir):
    out_dir = Path(out_dir)
    (out_dir / "alignments").mkdir(parents=True, exist_ok=True)
    (out_dir / "embeddings").mkdir(parents=True, exist_ok=True)
    save_alignments(corpus.alignments, out_dir / "alignments" / "train.jsonl")
    for utt, emb in corpus.embeddings.items():
        save_embeddings(emb, out_dir / "embeddings" / f"{utt}.emb")
    save_lexicon(corpus.lexicon, out_dir / "lexicon.tsv")
    save_transcripts(corpus.transcripts, out_dir / "text.tsv")


@dataclass
class BiasingSet:
    hotwords: list[str]
    references: dict[str, str]
    hypotheses: dict[str, str]


def _homophone_equal(a, b, lexicon):
    return len(a) == len(b) and all(lexicon[x] == lexicon[y] for x, y in zip(a, b))


def make_biasing_set(vocab, lexicon, *, n_hotwords=5, hotword_len=4, n_utts=100,
                     filler_len=(4, 10), corrupt_rate=0.3, filler_error_rate=0.0,
                     seed=0, hotwords=None) -> BiasingSet:
    """Hotword-bearing references and simulated ASR hypotheses.

    Each reference is filler + hotword + filler. Filler never contains a
    window that matches a hotword up to homophony, so every such window in
    the reference is a real hotword occurrence. The hypothesis replaces each
    hotword character by a random homophone with probability
    ``corrupt_rate`` and each filler character by a random vocabulary
    character with probability ``filler_error_rate``. Passing ``hotwords``
    reuses an existing list (e.g. the dev list for a test set).
    """
    rng = np.random.default_rng(seed)
    groups = {}
    for ch in vocab:
        groups.setdefault(lexicon[ch], []).append(ch)
    confusable = [ch for ch in vocab if len(groups[lexicon[ch]]) > 1]
    if not confusable:
        raise AtpcError("no homophone groups with more than one character")

    if hotwords is not None:
        hotwords = list(hotwords)
        n_hotwords = len(hotwords)
        hotword_len = len(hotwords[0])
        if any(len(h) != hotword_len for h in hotwords):
            raise AtpcError("hotwords must share one length")
    else:
        hotwords = []
    while len(hotwords) < n_hotwords:
        w = "".join(confusable[i] for i in rng.integers(0, len(confusable), hotword_len))
        if any(_homophone_equal(w, h, lexicon) for h in hotwords):
            continue
        hotwords.append(w)

    def filler():
        n = int(rng.integers(filler_len[0], filler_len[1] + 1))
        return "".join(vocab[i] for i in rng.integers(0, len(vocab), n))

    refs, hyps = {}, {}
    width = len(str(n_utts - 1))
    for u in range(n_utts):
        hw = hotwords[int(rng.integers(0, len(hotwords)))]
        while True:
            left, right = filler(), filler()
            ref = left + hw + right
            hits = [i for i in range(len(ref) - hotword_len + 1)
                    if any(_homophone_equal(ref[i:i + hotword_len], h, lexicon) for h in hotwords)]
            if hits == [len(left)]:
                break
        hyp = list(ref)
        for i, ch in enumerate(ref):
            inside = len(left) <= i < len(left) + hotword_len
            if inside and rng.random() < corrupt_rate:
                others = [c for c in groups[lexicon[ch]] if c != ch]
                hyp[i] = others[int(rng.integers(0, len(others)))]
            elif not inside and filler_error_rate > 0 and rng.random() < filler_error_rate:
                hyp[i] = vocab[int(rng.integers(0, len(vocab)))]
        utt = f"bias{u:0{width}d}"
        refs[utt] = ref
        hyps[utt] = "".join(hyp)
    return BiasingSet(hotwords, refs, hyps)
