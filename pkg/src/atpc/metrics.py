"""Homophone disparity of a distance matrix and hotword-aware ASR scoring."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np

from .errors import AtpcError

MATCH, SUB, DEL, INS = "=", "S", "D", "I"


@dataclass
class DisparityReport:
    mean_homophone: float
    mean_non_homophone: float
    relative_disparity: float
    n_homophone_pairs: int = 0
    n_non_homophone_pairs: int = 0


def relative_disparity(mean_homophone, mean_non_homophone) -> float:
    return (mean_non_homophone - mean_homophone) / mean_non_homophone


def disparity(matrix, lexicon) -> DisparityReport:
    """Mean raw distance of homophone vs non-homophone pairs (j < k)."""
    covered = [(i, lexicon[ch]) for i, ch in enumerate(matrix.vocab) if ch in lexicon]
    if len(covered) < 2:
        raise AtpcError("lexicon covers fewer than two matrix characters")
    homo, other = [], []
    for (j, kj), (k, kk) in combinations(covered, 2):
        (homo if kj == kk else other).append(matrix.values[j, k])
    if not homo:
        raise AtpcError("no homophone pair among the covered characters")
    if not other:
        raise AtpcError("no non-homophone pair among the covered characters")
    mh, mn = float(np.mean(homo)), float(np.mean(other))
    return DisparityReport(mh, mn, relative_disparity(mh, mn), len(homo), len(other))


# ---------------------------------------------------------------------------
# edit distance


def align(ref: str, hyp: str) -> list[tuple[str, int, int]]:
    """One minimum-edit alignment as (op, ref_index, hyp_index) triples.

    Ties prefer match/substitution, then deletion, then insertion when
    tracing back. Insertions carry ``ref_index`` = number of reference
    characters consumed before them, and the other index is -1 where absent.
    """
    n, m = len(ref), len(hyp)
    d = [list(range(m + 1))]
    for i in range(1, n + 1):
        ri = ref[i - 1]
        prev = d[-1]
        row = [i] + [0] * m
        for j in range(1, m + 1):
            row[j] = min(prev[j - 1] + (ri != hyp[j - 1]), prev[j] + 1, row[j - 1] + 1)
        d.append(row)
    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i][j] == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            ops.append((MATCH if ref[i - 1] == hyp[j - 1] else SUB, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and d[i][j] == d[i - 1][j] + 1:
            ops.append((DEL, i - 1, -1))
            i -= 1
        else:
            ops.append((INS, i, j - 1))
            j -= 1
    ops.reverse()
    return ops


def edit_distance(ref: str, hyp: str) -> int:
    return sum(op != MATCH for op, _, _ in align(ref, hyp))


def cer(reference: str, hypothesis: str) -> float:
    if not reference:
        raise AtpcError("empty reference")
    return edit_distance(reference, hypothesis) / len(reference)


def hotword_mask(text: str, hotwords) -> np.ndarray:
    """Boolean mask of positions covered by any (possibly overlapping) hotword occurrence."""
    mask = np.zeros(len(text), dtype=bool)
    for w in hotwords:
        start = text.find(w)
        while start != -1:
            mask[start:start + len(w)] = True
            start = text.find(w, start + 1)
    return mask


@dataclass
class SplitCounts:
    biased_errors: int = 0
    biased_chars: int = 0
    unbiased_errors: int = 0
    unbiased_chars: int = 0

    def __iadd__(self, other):
        self.biased_errors += other.biased_errors
        self.biased_chars += other.biased_chars
        self.unbiased_errors += other.unbiased_errors
        self.unbiased_chars += other.unbiased_chars
        return self

    @property
    def errors(self):
        return self.biased_errors + self.unbiased_errors

    @property
    def chars(self):
        return self.biased_chars + self.unbiased_chars

    @property
    def b_cer(self):
        return self.biased_errors / self.biased_chars if self.biased_chars else None

    @property
    def u_cer(self):
        return self.unbiased_errors / self.unbiased_chars if self.unbiased_chars else None


def split_counts(reference: str, hypothesis: str, hotwords) -> SplitCounts:
    # insertions take the class of the preceding reference character;
    # sentence-initial insertions count as unbiased
    mask = hotword_mask(reference, hotwords)
    out = SplitCounts(biased_chars=int(mask.sum()), unbiased_chars=int((~mask).sum()))
    for op, i, _ in align(reference, hypothesis):
        if op == MATCH:
            continue
        anchor = i - 1 if op == INS else i
        if anchor >= 0 and mask[anchor]:
            out.biased_errors += 1
        else:
            out.unbiased_errors += 1
    return out


def split_cer(reference: str, hypothesis: str, hotwords):
    """(b_cer, u_cer); either is None when its reference class is empty."""
    if not reference:
        raise AtpcError("empty reference")
    c = split_counts(reference, hypothesis, hotwords)
    return c.b_cer, c.u_cer


@dataclass
class HotwordCounts:
    ref_occurrences: int = 0
    hyp_occurrences: int = 0
    matched: int = 0


def _prf(matched, n_ref, n_hyp):
    recall = matched / n_ref if n_ref else 0.0
    precision = matched / n_hyp if n_hyp else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return recall, precision, f1


def hotword_counts(references, hypotheses, hotwords) -> dict[str, HotwordCounts]:
    if len(references) != len(hypotheses):
        raise AtpcError(f"{len(references)} references vs {len(hypotheses)} hypotheses")
    counts = {w: HotwordCounts() for w in hotwords}
    for ref, hyp in zip(references, hypotheses):
        for w, c in counts.items():
            # str.count is leftmost non-overlapping
            r, h = ref.count(w), hyp.count(w)
            c.ref_occurrences += r
            c.hyp_occurrences += h
            c.matched += min(r, h)
    return counts


def hotword_prf(references, hypotheses, hotwords):
    """Occurrence-level (recall, precision, f1, per-hotword counts)."""
    counts = hotword_counts(references, hypotheses, hotwords)
    matched = sum(c.matched for c in counts.values())
    n_ref = sum(c.ref_occurrences for c in counts.values())
    n_hyp = sum(c.hyp_occurrences for c in counts.values())
    return (*_prf(matched, n_ref, n_hyp), counts)


@dataclass
class ScoreReport:
    cer: float
    b_cer: float | None
    u_cer: float | None
    recall: float
    precision: float
    f1: float
    n_utterances: int = 0
    n_ref_chars: int = 0
    n_errors: int = 0
    per_hotword: dict[str, HotwordCounts] = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def format(self) -> str:
        def pct(v):
            return "n/a" if v is None else f"{100 * v:.2f}"
        return "\n".join([
            f"utterances  {self.n_utterances}",
            f"ref_chars   {self.n_ref_chars}",
            f"errors      {self.n_errors}",
            f"CER         {pct(self.cer)}",
            f"B-CER       {pct(self.b_cer)}",
            f"U-CER       {pct(self.u_cer)}",
            f"recall      {pct(self.recall)}",
            f"precision   {pct(self.precision)}",
            f"F1          {pct(self.f1)}",
        ])


def score(references, hypotheses, hotwords) -> ScoreReport:
    """Corpus-level scores; error rates pool counts over all utterances."""
    references, hypotheses = list(references), list(hypotheses)
    if len(references) != len(hypotheses):
        raise AtpcError(f"{len(references)} references vs {len(hypotheses)} hypotheses")
    total = SplitCounts()
    for ref, hyp in zip(references, hypotheses):
        if not ref:
            raise AtpcError("empty reference")
        total += split_counts(ref, hyp, hotwords)
    if total.chars == 0:
        raise AtpcError("no reference characters to score")
    recall, precision, f1, counts = hotword_prf(references, hypotheses, hotwords)
    return ScoreReport(
        cer=total.errors / total.chars, b_cer=total.b_cer, u_cer=total.u_cer,
        recall=recall, precision=precision, f1=f1,
        n_utterances=len(references), n_ref_chars=total.chars, n_errors=total.errors,
        per_hotword=counts,
    )


def join_transcripts(refs: dict, hyps: dict):
    """Pair reference and hypothesis texts by utterance id, in reference order."""
    missing = [u for u in refs if u not in hyps]
    extra = [u for u in hyps if u not in refs]
    if missing:
        raise AtpcError(f"no hypothesis for {len(missing)} utterance(s), e.g. {missing[0]!r}")
    if extra:
        raise AtpcError(f"no reference for {len(extra)} utterance(s), e.g. {extra[0]!r}")
    ids = list(refs)
    return ids, [refs[u] for u in ids], [hyps[u] for u in ids]
