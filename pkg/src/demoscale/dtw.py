"""Exact dynamic time warping with optimal-path recovery.

The similarity of two sequences is the minimum over all monotone,
contiguous warping paths of sqrt(sum of squared element distances along
the path). The dynamic program therefore accumulates *squared* Euclidean
distances and takes a single square root at the end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.spatial.distance import cdist

from .errors import ValidationError

# Step pattern: (1,0), (0,1), (1,1). No window constraint; sequences in this
# pipeline are a few hundred elements at most.


@dataclass(frozen=True)
class WarpPath:
    """Monotone, contiguous alignment between two sequences (0-based pairs)."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not self.pairs:
            raise ValidationError("warp path must be non-empty")
        if self.pairs[0] != (0, 0):
            raise ValidationError(f"warp path must start at (0, 0), got {self.pairs[0]}")
        for (i0, j0), (i1, j1) in zip(self.pairs, self.pairs[1:]):
            di, dj = i1 - i0, j1 - j0
            if (di, dj) not in ((1, 0), (0, 1), (1, 1)):
                raise ValidationError(f"illegal warp step {(di, dj)} at {(i0, j0)}")

    def __len__(self) -> int:
        return len(self.pairs)


def _as_sequence(seq, name: str) -> np.ndarray:
    arr = np.asarray(seq, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValidationError(f"{name} must be a non-empty sequence of equal-length vectors")
    return arr


def distance_matrix(x, y) -> np.ndarray:
    """Pairwise Euclidean distances: entry [i, j] = d(x_i, y_j)."""
    ax, ay = _as_sequence(x, "x"), _as_sequence(y, "y")
    if ax.shape[1] != ay.shape[1]:
        raise ValidationError(
            f"element dimension mismatch: {ax.shape[1]} vs {ay.shape[1]}"
        )
    return cdist(ax, ay)


@njit(cache=True)
def _accumulate(sq: np.ndarray) -> np.ndarray:
    u, v = sq.shape
    acc = np.empty((u, v))
    acc[0, 0] = sq[0, 0]
    for j in range(1, v):
        acc[0, j] = sq[0, j] + acc[0, j - 1]
    for i in range(1, u):
        acc[i, 0] = sq[i, 0] + acc[i - 1, 0]
        for j in range(1, v):
            best = acc[i - 1, j - 1]
            if acc[i - 1, j] < best:
                best = acc[i - 1, j]
            if acc[i, j - 1] < best:
                best = acc[i, j - 1]
            acc[i, j] = sq[i, j] + best
    return acc


def _backtrack(acc: np.ndarray) -> WarpPath:
    i, j = acc.shape[0] - 1, acc.shape[1] - 1
    pairs = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            # Ties resolve toward the diagonal for a deterministic path.
            diag, up, left = acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1]
            if diag <= up and diag <= left:
                i, j = i - 1, j - 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
        pairs.append((i, j))
    pairs.reverse()
    return WarpPath(tuple(pairs))


def dtw_distance(x, y, return_path: bool = False):
    """DTW similarity of two sequences; optionally also the optimal path.

    Returns the scalar distance, or ``(distance, WarpPath)`` when
    ``return_path`` is set. The path attains the returned value when its
    squared entry distances are re-summed.
    """
    dmat = distance_matrix(x, y)
    acc = _accumulate(dmat**2)
    dist = float(np.sqrt(acc[-1, -1]))
    if not return_path:
        return dist
    return dist, _backtrack(acc)


def dtw_distance_brute_force(x, y) -> float:
    """Independent oracle: exhaustively enumerate every monotone warping path.

    Exponential in the sequence lengths; intended only for tiny inputs in
    tests, never for production use.
    """
    dmat = distance_matrix(x, y)
    u, v = dmat.shape
    sq = dmat**2
    best = [np.inf]

    def walk(i: int, j: int, total: float):
        total += sq[i, j]
        if i == u - 1 and j == v - 1:
            if total < best[0]:
                best[0] = total
            return
        if i + 1 < u and j + 1 < v:
            walk(i + 1, j + 1, total)
        if i + 1 < u:
            walk(i + 1, j, total)
        if j + 1 < v:
            walk(i, j + 1, total)

    walk(0, 0, 0.0)
    return float(np.sqrt(best[0]))
