"""Ergodic statistics read from recorded trajectories."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from ..engine import Trajectory
from ..ranking import center

DEFAULT_BINS = 200
DEFAULT_QUANTILES = (0.001, 0.999)


@dataclass(frozen=True)
class OccupationStats:
    """Time-weighted occupation of permutations and ranks.

    Permutation keys are 0-based ``forward`` tuples: ``key[k]`` is the
    particle holding rank ``k``.
    """

    permutation_fractions: dict[tuple[int, ...], float]
    rank_occupation: np.ndarray
    total_time: float

    def to_dict(self) -> dict:
        return {
            "total_time": self.total_time,
            "permutation_fractions": [
                {"permutation": list(k), "fraction": v}
                for k, v in sorted(self.permutation_fractions.items())
            ],
            "rank_occupation": self.rank_occupation.tolist(),
        }


def _row_permutations(states: np.ndarray) -> np.ndarray:
    return np.argsort(states, axis=1, kind="stable")


def occupation_fractions(traj: Trajectory) -> OccupationStats:
    """Left-point rule: the permutation of a row holds until the next row."""
    if traj.times.size < 2 or traj.times[-1] <= traj.times[0]:
        raise ValueError("trajectory has zero length")
    dt = np.diff(traj.times)
    total = float(dt.sum())
    perms = _row_permutations(traj.states[:-1])
    keys, inv = np.unique(perms, axis=0, return_inverse=True)
    weights = np.bincount(inv.ravel(), weights=dt, minlength=len(keys)) / total
    fractions = {tuple(int(i) for i in k): float(w) for k, w in zip(keys, weights) if w > 0}

    n = traj.n_particles
    occ = np.zeros((n, n))
    rows = np.repeat(np.arange(perms.shape[0]), n)
    particles = perms.ravel()
    ranks = np.tile(np.arange(n), perms.shape[0])
    np.add.at(occ, (particles, ranks), dt[rows])
    return OccupationStats(fractions, occ / total, total)


def time_average(traj: Trajectory, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """Trapezoidal ``(1/T) ∫ f(centered X(t)) dt`` using left limits at jumps.

    ``f`` is applied to an array of centered states of shape ``(rows, N)``
    and must return one value per row.
    """
    t = traj.times
    if t.size < 2 or t[-1] <= t[0]:
        raise ValueError("trajectory has zero length")
    vals = np.asarray(f(center(traj.states)), dtype=float)
    right = vals[1:].copy()
    jump_rows = np.flatnonzero(traj.is_jump[1:])
    if jump_rows.size:
        right[jump_rows] = np.asarray(f(center(traj.jump_pre[: jump_rows.size])), dtype=float)
    integral = np.sum(0.5 * (vals[:-1] + right) * np.diff(t))
    return float(integral / (t[-1] - t[0]))


# --------------------------------------------------------------------------
# gap histograms and total variation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GapHistogram:
    """Per-gap histograms; row ``k`` bins the gap between ranks ``k`` and ``k+1``."""

    edges: np.ndarray
    counts: np.ndarray
    n_samples: int
    burn_in: float
    means: np.ndarray

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / self.counts.sum(axis=1, keepdims=True)

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "burn_in": self.burn_in,
            "means": self.means.tolist(),
            "edges": self.edges.tolist(),
            "counts": self.counts.tolist(),
        }


def gap_samples(trajs: Sequence[Trajectory] | Trajectory, burn_in: float = 0.0) -> np.ndarray:
    """Pooled gaps at grid rows with ``t >= burn_in``; shape ``(samples, N-1)``."""
    if isinstance(trajs, Trajectory):
        trajs = [trajs]
    pooled = []
    for tr in trajs:
        if burn_in >= tr.times[-1]:
            raise ValueError(f"burn-in {burn_in} is not before the horizon {tr.times[-1]}")
        t, x = tr.grid
        keep = t >= burn_in
        pooled.append(np.diff(np.sort(x[keep], axis=1), axis=1))
    out = np.concatenate(pooled)
    if out.shape[0] == 0:
        raise ValueError("no samples after burn-in")
    return out


def common_edges(*sample_sets: np.ndarray, bins: int = DEFAULT_BINS,
                 quantiles=DEFAULT_QUANTILES) -> np.ndarray:
    """Per-gap edges spanning pooled quantiles of all sample sets."""
    pooled = np.concatenate(sample_sets)
    lo = np.quantile(pooled, quantiles[0], axis=0)
    hi = np.quantile(pooled, quantiles[1], axis=0)
    flat = hi <= lo
    lo = np.where(flat, lo - 0.5, lo)
    hi = np.where(flat, hi + 0.5, hi)
    return np.stack([np.linspace(a, b, bins + 1) for a, b in zip(lo, hi)])


def histogram_from_samples(samples: np.ndarray, edges: np.ndarray, burn_in: float = 0.0) -> GapHistogram:
    """Bin samples; values beyond the outer edges land in the end bins."""
    samples = np.atleast_2d(samples)
    n_bins = edges.shape[1] - 1
    counts = np.empty((samples.shape[1], n_bins))
    for k in range(samples.shape[1]):
        idx = np.searchsorted(edges[k], samples[:, k], side="right") - 1
        idx = np.clip(idx, 0, n_bins - 1)
        counts[k] = np.bincount(idx, minlength=n_bins)
    return GapHistogram(edges, counts, samples.shape[0], float(burn_in), samples.mean(axis=0))


def gap_histogram(trajs, burn_in: float = 0.0, bins: int = DEFAULT_BINS, edges=None) -> GapHistogram:
    samples = gap_samples(trajs, burn_in)
    if edges is None:
        edges = common_edges(samples, bins=bins)
    return histogram_from_samples(samples, np.atleast_2d(edges), burn_in)


def reference_histogram(edges: np.ndarray, cdf: Callable[[np.ndarray], np.ndarray]) -> GapHistogram:
    """Bin probabilities of a known law, tails folded into the end bins."""
    edges = np.atleast_2d(edges)
    probs = []
    for row in edges:
        c = np.asarray(cdf(row), dtype=float)
        c[0], c[-1] = 0.0, 1.0
        probs.append(np.diff(c))
    return GapHistogram(edges, np.array(probs), 0, 0.0, np.full(edges.shape[0], np.nan))


def tv_distance(h1: GapHistogram, h2: GapHistogram) -> float:
    """Half the L1 distance of bin probabilities, maximised over gaps."""
    if h1.edges.shape != h2.edges.shape or not np.array_equal(h1.edges, h2.edges):
        raise ValueError("histograms do not share a binning")
    per_gap = 0.5 * np.abs(h1.probabilities - h2.probabilities).sum(axis=1)
    return float(min(1.0, per_gap.max()))


# --------------------------------------------------------------------------
# capital distribution curve
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CapitalCurve:
    log_rank: np.ndarray
    log_weight: np.ndarray
    time: float
    replication: int = 0

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weight)


def capital_curve(traj: Trajectory, at_time: float | None = None) -> CapitalCurve:
    """Log market weights ``exp(X_i)/Σ exp(X_j)`` ranked from the top."""
    if at_time is None:
        row = traj.times.size - 1
    else:
        if at_time > traj.times[-1] or at_time < traj.times[0]:
            raise ValueError(f"time {at_time} outside the recorded range")
        row = int(np.searchsorted(traj.times, at_time, side="right")) - 1
    return capital_curve_of_state(traj.states[row], float(traj.times[row]), traj.replication)


def capital_curve_of_state(x, time: float = 0.0, replication: int = 0) -> CapitalCurve:
    x = np.asarray(x, dtype=float)
    log_mu = x - logsumexp(x)
    ranked = np.sort(log_mu)[::-1]
    return CapitalCurve(np.log(np.arange(1, x.size + 1)), ranked, time, replication)
