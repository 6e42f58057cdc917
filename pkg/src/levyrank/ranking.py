"""Ranking permutation, ranked values, gaps and centering.

Ranks and particle indices are 0-based: ``forward[k]`` is the particle
holding rank ``k`` (rank 0 is the bottom), ``inverse[i]`` is the rank of
particle ``i``.  Ties go to the smaller particle index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class RankPermutation:
    forward: np.ndarray
    inverse: np.ndarray

    def __eq__(self, other):
        return isinstance(other, RankPermutation) and np.array_equal(self.forward, other.forward)

    __hash__ = None

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(int(i) for i in self.forward)


def _check_finite(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"expected a vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"non-finite coordinate in {x}")
    return x


def rank_permutation(x) -> RankPermutation:
    x = _check_finite(x)
    forward = np.argsort(x, kind="stable")
    inverse = np.empty_like(forward)
    inverse[forward] = np.arange(x.size)
    forward.setflags(write=False)
    inverse.setflags(write=False)
    return RankPermutation(forward, inverse)


def ranked_values(x) -> np.ndarray:
    """``y_k = x_{forward(k)}``, nondecreasing."""
    x = np.asarray(x, dtype=float)
    return x[rank_permutation(x).forward]


def gaps(x) -> np.ndarray:
    return np.diff(ranked_values(x))


def center(x) -> np.ndarray:
    """Subtract the mean; the residual mean is removed a second time."""
    x = np.asarray(x, dtype=float)
    c = x - x.mean(axis=-1, keepdims=True)
    return c - c.mean(axis=-1, keepdims=True)


def permute_by_inverse(w, perm: RankPermutation) -> np.ndarray:
    """Particle ``i`` receives the rank-indexed entry ``w[inverse[i]]``."""
    return np.asarray(w, dtype=float)[perm.inverse]
