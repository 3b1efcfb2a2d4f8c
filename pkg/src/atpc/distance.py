"""Frame distance kernels and dynamic time warping.

The DP kernels are compiled with numba (``nogil``) so the matrix builder can
run them from several threads. Both DTW variants share the same recurrence
and the same predecessor rule, so ``dtw_cost_only`` reproduces
``dtw(...).d_norm`` bit for bit.

Step pattern is the classic {(1,0), (0,1), (1,1)} without band constraints.
The normalized distance divides the cumulative cost by the length of the
backtracked path. On ties the backtrack prefers the diagonal, then the
vertical step (previous frame of the first sequence), then the horizontal.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import AtpcError

__all__ = [
    "VectorMetric",
    "DtwResult",
    "vector_distance",
    "dtw",
    "dtw_cost_only",
    "as_sequence",
]

EUCLIDEAN = 0
COSINE = 1


class VectorMetric(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    COSINE = "cosine"

    @property
    def code(self) -> int:
        return EUCLIDEAN if self is VectorMetric.EUCLIDEAN else COSINE

    @classmethod
    def parse(cls, value) -> "VectorMetric":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise AtpcError(f"unknown metric {value!r} (expected euclidean or cosine)") from None


@dataclass(frozen=True)
class DtwResult:
    d_norm: float
    path: list
    raw_cost: float

    def __len__(self):
        return len(self.path)


# ---------------------------------------------------------------------------
# compiled kernels


@njit(cache=True, nogil=True)
def _sq_norms(X):
    out = np.empty(X.shape[0])
    for t in range(X.shape[0]):
        s = 0.0
        for d in range(X.shape[1]):
            s += X[t, d] * X[t, d]
        out[t] = s
    return out


@njit(cache=True, nogil=True, inline="always")
def _local(X, i, Y, j, nx, ny, metric):
    if metric == EUCLIDEAN:
        s = 0.0
        for d in range(X.shape[1]):
            diff = X[i, d] - Y[j, d]
            s += diff * diff
        return math.sqrt(s)
    dot = 0.0
    for d in range(X.shape[1]):
        dot += X[i, d] * Y[j, d]
    c = 1.0 - dot / math.sqrt(nx[i] * ny[j])
    # rounding can push the value a hair outside [0, 2]
    if c < 0.0:
        return 0.0
    if c > 2.0:
        return 2.0
    return c


@njit(cache=True, nogil=True, inline="always")
def _pick(diag, up, left):
    # 0: diagonal, 1: vertical (i-1, j), 2: horizontal (i, j-1)
    if diag <= up and diag <= left:
        return 0
    if up <= left:
        return 1
    return 2


@njit(cache=True, nogil=True)
def _dtw_cost(X, Y, nx, ny, metric):
    n = X.shape[0]
    m = Y.shape[0]
    prev_d = np.empty(m)
    prev_l = np.empty(m, dtype=np.int64)
    cur_d = np.empty(m)
    cur_l = np.empty(m, dtype=np.int64)
    for i in range(n):
        for j in range(m):
            c = _local(X, i, Y, j, nx, ny, metric)
            if i == 0 and j == 0:
                cur_d[j] = c
                cur_l[j] = 1
            elif i == 0:
                cur_d[j] = c + cur_d[j - 1]
                cur_l[j] = cur_l[j - 1] + 1
            elif j == 0:
                cur_d[j] = c + prev_d[j]
                cur_l[j] = prev_l[j] + 1
            else:
                k = _pick(prev_d[j - 1], prev_d[j], cur_d[j - 1])
                if k == 0:
                    cur_d[j] = c + prev_d[j - 1]
                    cur_l[j] = prev_l[j - 1] + 1
                elif k == 1:
                    cur_d[j] = c + prev_d[j]
                    cur_l[j] = prev_l[j] + 1
                else:
                    cur_d[j] = c + cur_d[j - 1]
                    cur_l[j] = cur_l[j - 1] + 1
        prev_d, cur_d = cur_d, prev_d
        prev_l, cur_l = cur_l, prev_l
    return prev_d[m - 1], prev_l[m - 1]


@njit(cache=True, nogil=True)
def _dtw_table(X, Y, nx, ny, metric):
    n = X.shape[0]
    m = Y.shape[0]
    D = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            c = _local(X, i, Y, j, nx, ny, metric)
            if i == 0 and j == 0:
                D[i, j] = c
            elif i == 0:
                D[i, j] = c + D[i, j - 1]
            elif j == 0:
                D[i, j] = c + D[i - 1, j]
            else:
                k = _pick(D[i - 1, j - 1], D[i - 1, j], D[i, j - 1])
                if k == 0:
                    D[i, j] = c + D[i - 1, j - 1]
                elif k == 1:
                    D[i, j] = c + D[i - 1, j]
                else:
                    D[i, j] = c + D[i, j - 1]
    path = np.empty((n + m - 1, 2), dtype=np.int64)
    i = n - 1
    j = m - 1
    p = 0
    path[p, 0] = i
    path[p, 1] = j
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            k = _pick(D[i - 1, j - 1], D[i - 1, j], D[i, j - 1])
            if k == 0:
                i -= 1
                j -= 1
            elif k == 1:
                i -= 1
            else:
                j -= 1
        p += 1
        path[p, 0] = i
        path[p, 1] = j
    return D[n - 1, m - 1], path[: p + 1][::-1].copy()


@njit(cache=True, nogil=True)
def _pair_means(frames, sqn, seg_lo, seg_hi, char_ptr, pj, pk, metric, out):
    """Mean segment-pair distances for a batch of character pairs.

    Segment s of the packed corpus spans frames[seg_lo[s]:seg_hi[s]]; the
    segments of character c are char_ptr[c]:char_ptr[c + 1].
    """
    for t in range(pj.shape[0]):
        a0 = char_ptr[pj[t]]
        a1 = char_ptr[pj[t] + 1]
        b0 = char_ptr[pk[t]]
        b1 = char_ptr[pk[t] + 1]
        total = 0.0
        for a in range(a0, a1):
            X = frames[seg_lo[a]:seg_hi[a]]
            nx = sqn[seg_lo[a]:seg_hi[a]]
            for b in range(b0, b1):
                Y = frames[seg_lo[b]:seg_hi[b]]
                ny = sqn[seg_lo[b]:seg_hi[b]]
                cost, length = _dtw_cost(X, Y, nx, ny, metric)
                total += cost / length
        out[t] = total / ((a1 - a0) * (b1 - b0))


# ---------------------------------------------------------------------------
# python surface


def as_sequence(seq, name="sequence") -> np.ndarray:
    """Coerce a sequence of frames to a contiguous float64 (frames, dim) array.

    A 1-D input is read as a sequence of scalar (1-dim) frames.
    """
    arr = np.asarray(seq, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise AtpcError(f"{name} must be a 2-D (frames, dim) array, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise AtpcError(f"{name} is empty")
    if arr.shape[1] == 0:
        raise AtpcError(f"{name} has zero-dimensional frames")
    return np.ascontiguousarray(arr)


def _prepare(V, W, metric):
    metric = VectorMetric.parse(metric)
    X = as_sequence(V, "V")
    Y = as_sequence(W, "W")
    if X.shape[1] != Y.shape[1]:
        raise AtpcError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    nx = _sq_norms(X)
    ny = _sq_norms(Y)
    if metric is VectorMetric.COSINE:
        if not (nx > 0).all():
            raise AtpcError(f"cosine distance undefined for zero vector at V[{int(np.argmin(nx > 0))}]")
        if not (ny > 0).all():
            raise AtpcError(f"cosine distance undefined for zero vector at W[{int(np.argmin(ny > 0))}]")
    return X, Y, nx, ny, metric.code


def vector_distance(metric, x, y) -> float:
    """Distance between two frames under ``metric``.

    Cosine distance is ``1 - x.y / (|x| |y|)``; a zero vector raises.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise AtpcError("vector_distance expects 1-D vectors")
    if x.shape != y.shape:
        raise AtpcError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    X, Y, nx, ny, code = _prepare(x[None, :], y[None, :], metric)
    cost, _ = _dtw_cost(X, Y, nx, ny, code)
    return float(cost)


def dtw(V, W, metric=VectorMetric.COSINE) -> DtwResult:
    """Full DTW with the backtracked alignment path."""
    X, Y, nx, ny, code = _prepare(V, W, metric)
    raw, path = _dtw_table(X, Y, nx, ny, code)
    raw = float(raw)
    pairs = [(int(i), int(j)) for i, j in path]
    return DtwResult(d_norm=raw / len(pairs), path=pairs, raw_cost=raw)


def dtw_cost_only(V, W, metric=VectorMetric.COSINE) -> float:
    """Normalized DTW distance using two DP rows; equals ``dtw(...).d_norm``."""
    X, Y, nx, ny, code = _prepare(V, W, metric)
    raw, length = _dtw_cost(X, Y, nx, ny, code)
    return float(raw) / int(length)
