"""Hotword rewriting of recognition hypotheses with a normalized distance matrix.

A hypothesis window of the hotword's length matches when every observed
character is a replacement candidate for the hotword character at that
position, i.e. ``norm[row(observed)][col(hotword)] < threshold``. Matches are
applied closest-first by their mean per-character distance; a match whose
span touches an already applied one is skipped.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .errors import AtpcError

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 1.07
DEFAULT_GRID = tuple(round(1.01 + 0.01 * i, 2) for i in range(9))


@dataclass
class BiasConfig:
    matrix: object  # normalized AtpcMatrix
    hotwords: list[str]
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if not self.threshold > 0:
            raise AtpcError(f"threshold must be positive, got {self.threshold}")
        if not self.matrix.normalized:
            raise AtpcError("biasing needs a row-normalized matrix")
        self.hotwords = list(self.hotwords)
        # hotword characters outside the matrix vocabulary can never match
        self._columns = {}
        for w in self.hotwords:
            cols = [self.matrix.index(ch) for ch in w]
            if any(c is None for c in cols):
                log.info("hotword %r has characters outside the matrix vocabulary; it will never match", w)
                continue
            self._columns[w] = np.array(cols, dtype=np.int64)


@dataclass(frozen=True)
class MatchCandidate:
    hotword: str
    span: tuple[int, int]
    avg_distance: float
    per_char_distances: tuple[float, ...]

    @property
    def exact(self) -> bool:
        return all(d == 1.0 for d in self.per_char_distances)

    def sort_key(self):
        return (self.avg_distance, -len(self.hotword), self.span[0], self.hotword)

    def to_dict(self):
        return {"hotword": self.hotword, "span": list(self.span), "avg_distance": self.avg_distance,
                "per_char_distances": list(self.per_char_distances)}


@dataclass
class BiasOutcome:
    original: str
    rewritten: str
    applied: list[MatchCandidate] = field(default_factory=list)
    skipped: list[tuple[MatchCandidate, str]] = field(default_factory=list)


def candidates_for(matrix, ch, threshold=DEFAULT_THRESHOLD):
    """Characters whose normalized distance from ``ch``'s row is below threshold, closest first."""
    j = matrix.index(ch)
    if j is None:
        log.debug("character %r not in matrix vocabulary", ch)
        return []
    row = matrix.values[j]
    ks = np.flatnonzero(row < threshold)
    order = sorted(ks.tolist(), key=lambda k: (row[k], k))
    return [(matrix.vocab[k], float(row[k])) for k in order]


def find_matches(hypothesis: str, config: BiasConfig) -> list[MatchCandidate]:
    """Every (hotword, window) pair that clears the per-position threshold."""
    m = config.matrix
    rows = np.array([-1 if (r := m.index(ch)) is None else r for ch in hypothesis], dtype=np.int64)
    out = []
    for w in config.hotwords:
        cols = config._columns.get(w)
        if cols is None:
            continue
        n = len(w)
        for s in range(len(hypothesis) - n + 1):
            r = rows[s:s + n]
            if (r < 0).any():
                continue
            d = m.values[r, cols]
            if not (d < config.threshold).all():
                continue
            per = tuple(float(x) for x in d)
            out.append(MatchCandidate(w, (s, s + n), sum(per) / n, per))
    return out


def apply_bias(hypothesis: str, config: BiasConfig) -> BiasOutcome:
    """Rewrite hotword matches closest-first; overlapping later matches are skipped.

    Verbatim hotword occurrences are applied as no-ops so they still claim
    their span.
    """
    matches = sorted(find_matches(hypothesis, config), key=MatchCandidate.sort_key)
    chars = list(hypothesis)
    taken = np.zeros(len(hypothesis), dtype=bool)
    applied, skipped = [], []
    for mc in matches:
        a, b = mc.span
        if taken[a:b].any():
            skipped.append((mc, "overlap"))
            continue
        taken[a:b] = True
        chars[a:b] = mc.hotword
        applied.append(mc)
    return BiasOutcome(hypothesis, "".join(chars), applied, skipped)


def bias_corpus(hypotheses, config: BiasConfig, workers=1) -> list[BiasOutcome]:
    hypotheses = list(hypotheses)
    if workers <= 1:
        return [apply_bias(h, config) for h in hypotheses]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda h: apply_bias(h, config), hypotheses))


@dataclass
class SweepRow:
    threshold: float
    cer: float
    f1: float
    b_cer: float | None = None
    u_cer: float | None = None
    recall: float = 0.0
    precision: float = 0.0


@dataclass
class SweepResult:
    rows: list[SweepRow]
    selected: float

    def format(self) -> str:
        def pct(v):
            return "n/a" if v is None else f"{100 * v:.2f}"
        lines = ["threshold\tcer\tb_cer\tu_cer\trecall\tprecision\tf1\tselected"]
        for r in self.rows:
            mark = "*" if r.threshold == self.selected else ""
            lines.append(f"{r.threshold:.2f}\t{pct(r.cer)}\t{pct(r.b_cer)}\t{pct(r.u_cer)}\t"
                         f"{pct(r.recall)}\t{pct(r.precision)}\t{pct(r.f1)}\t{mark}")
        return "\n".join(lines)


def sweep_threshold(dev_refs, dev_hyps, hotwords, matrix, grid=DEFAULT_GRID, workers=1) -> SweepResult:
    """Score biasing at each threshold; pick lowest CER, then highest F1, then first in grid."""
    grid = list(grid)
    if not grid:
        raise AtpcError("threshold grid is empty")
    dev_refs, dev_hyps = list(dev_refs), list(dev_hyps)
    rows = []
    for t in grid:
        cfg = BiasConfig(matrix, hotwords, t)
        rewritten = [o.rewritten for o in bias_corpus(dev_hyps, cfg, workers)]
        rep = metrics.score(dev_refs, rewritten, hotwords)
        rows.append(SweepRow(t, rep.cer, rep.f1, rep.b_cer, rep.u_cer, rep.recall, rep.precision))
    best = min(range(len(rows)), key=lambda i: (rows[i].cer, -rows[i].f1, i))
    return SweepResult(rows, rows[best].threshold)
