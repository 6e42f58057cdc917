"""Lyapunov function, generator evaluations and the drift-condition scan.

All points live on the centered hyperplane (coordinates summing to zero).
The generator of ``V(x) = sqrt(|x|^2 + 1)`` splits into a continuous part,
available in closed form for diagonal covariance, and a jump part
``Σ rate * E[V(x + centered(w) permuted to ranks) - V(x)]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import norm, qmc

from .. import _kernels
from ..model import ModelSpec, check_stability, jump_mean_vector
from ..ranking import center, rank_permutation
from ..rng import RngStream, Substream

PI_TOL = 1e-9


class GeneratorError(ValueError):
    pass


def lyapunov_V(x) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    v = np.sqrt(np.einsum("...i,...i->...", x, x) + 1.0)
    return float(v) if v.ndim == 0 else v


def _on_plane(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if abs(x.sum()) > PI_TOL * (1.0 + np.abs(x).sum()):
        raise GeneratorError(f"point is not on the centered hyperplane (sum={x.sum()})")
    return x


def rank_pairing(x, c) -> float:
    """``Σ_k x_{p(k)} c_k``: rank-indexed coefficients paired with ranked values."""
    x = np.asarray(x, dtype=float)
    return float(np.dot(np.sort(x, kind="stable"), np.asarray(c, dtype=float)))


def gap_form(x, c) -> float:
    """``-Σ_{k<N} gap_k Σ_{j<=k} c_j``; equals ``rank_pairing`` when Σc = 0."""
    gaps = np.diff(np.sort(np.asarray(x, dtype=float)))
    return float(-np.dot(gaps, np.cumsum(c)[:-1]))


def continuous_generator_V(x, spec: ModelSpec) -> float:
    """Closed-form continuous part of the generator applied to V.

    Diagonal covariance only; use :func:`mc_generator_estimate` otherwise.
    """
    if not spec.is_diagonal:
        raise GeneratorError("closed form needs diagonal covariance; use mc_generator_estimate")
    x = _on_plane(x)
    n = spec.n_particles
    v = lyapunov_V(x)
    s2 = spec.sigma2
    y = np.sort(x, kind="stable")
    drift = rank_pairing(x, center(spec.drift)) / v
    diffusion = 0.5 * ((1.0 - 1.0 / n) * s2.sum() / v - np.dot(s2, y * y) / v**3)
    return float(drift + diffusion)


@dataclass(frozen=True)
class JumpGeneratorValue:
    value: float
    se: float
    leading: float


def _jump_targets(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``x + centered(w)`` with rank ``k`` entries sent to the rank-``k`` particle."""
    inv = rank_permutation(x).inverse
    return x + center(w)[..., inv]


def jump_generator_V(x, spec: ModelSpec, mc_samples: int = 100_000,
                     rng: np.random.Generator | None = None) -> JumpGeneratorValue:
    """Jump part of the generator applied to V.

    Atomic displacement laws are summed exactly; other laws are averaged
    over ``mc_samples`` draws and contribute to the standard error.
    """
    x = _on_plane(x)
    v0 = lyapunov_V(x)
    value, var = 0.0, 0.0
    for comp in spec.jumps.components:
        atoms = comp.law.atoms()
        if atoms is not None:
            ws = np.array([a for a, _ in atoms])
            ps = np.array([p for _, p in atoms])
            value += comp.rate * float(np.dot(ps, lyapunov_V(_jump_targets(x, ws)) - v0))
            continue
        if rng is None:
            rng = np.random.default_rng(0)
        diffs = lyapunov_V(_jump_targets(x, comp.law.sample(rng, mc_samples))) - v0
        value += comp.rate * float(diffs.mean())
        var += comp.rate**2 * float(diffs.var(ddof=1)) / mc_samples
    f_bar = center(jump_mean_vector(spec.jumps))
    leading = rank_pairing(x, f_bar) / v0
    return JumpGeneratorValue(value, float(np.sqrt(var)), leading)


@dataclass(frozen=True)
class MCEstimate:
    value: float
    se: float
    samples: int


def mc_generator_estimate(x, spec: ModelSpec, h: float = 1e-3, mc_samples: int = 200_000,
                          rng: np.random.Generator | None = None,
                          func: Callable = lyapunov_V) -> MCEstimate:
    """Finite-difference generator estimate ``(E[func(X̄(h))] - func(x)) / h``.

    One-step paths from ``x`` in antithetic Gaussian pairs; jumps in
    ``[0, h]`` are pieced in at their exact epochs.
    """
    x = _on_plane(x)
    if rng is None:
        rng = np.random.default_rng(0)
    n = spec.n_particles
    pairs = max(1, mc_samples // 2)
    g, factor, diag = spec.drift, spec.factor, spec.is_diagonal
    y = np.sort(x, kind="stable")
    fwd = rank_permutation(x).forward
    lam = spec.jumps.total_rate

    z = rng.standard_normal((pairs, n))
    first = rng.exponential(1.0 / lam, pairs) if lam > 0 else np.full(pairs, np.inf)
    jumped = np.flatnonzero(first <= h)

    noise = np.sqrt(h) * (z @ factor.T)
    f0 = func(x)
    out = np.empty((2, pairs))
    for s, sign in enumerate((1.0, -1.0)):
        new = np.empty((pairs, n))
        new[:, fwd] = y + g * h + sign * noise
        out[s] = func(center(new))
    for i in jumped:
        for s, sign in enumerate((1.0, -1.0)):
            state = x.copy()
            perm = np.arange(n)
            t, tau, noise = 0.0, first[i], sign * z[i]
            while tau <= h:
                _kernels.euler_piece(state, perm, tau - t, g, factor, diag, noise)
                _kernels.jump(state, perm, spec.jumps.sample(rng, 1)[0], False)
                t = tau
                tau = t + rng.exponential(1.0 / lam)
                noise = sign * rng.standard_normal(n)
            if h > t:
                _kernels.euler_piece(state, perm, h - t, g, factor, diag, noise)
            out[s, i] = func(center(state))
    per_pair = (0.5 * (out[0] + out[1]) - f0) / h
    se = float(per_pair.std(ddof=1) / np.sqrt(pairs)) if pairs > 1 else float("nan")
    return MCEstimate(float(per_pair.mean()), se, 2 * pairs)


@dataclass(frozen=True)
class GeneratorDiagnostic:
    x: np.ndarray
    continuous: float
    jump: float
    jump_se: float
    leading: float
    mc: float
    mc_se: float

    @property
    def total(self) -> float:
        return self.continuous + self.jump

    @property
    def residual(self) -> float:
        """Measured ``δ*(x)``: Monte Carlo estimate minus the leading order."""
        return self.mc - self.leading


def leading_order(x, spec: ModelSpec) -> float:
    """``-(1/V) Σ_{k<N} gap_k Σ_{j<=k} m̄_j``."""
    m_bar = check_stability(spec).centered_effective_drifts
    return gap_form(x, m_bar) / lyapunov_V(x)


def generator_diagnostic(x, spec: ModelSpec, h: float = 1e-3, mc_samples: int = 200_000,
                         seed: int = 0, stream: int = 0) -> GeneratorDiagnostic:
    x = _on_plane(x)
    rs = RngStream(seed, stream)
    cont = continuous_generator_V(x, spec)
    jmp = jump_generator_V(x, spec, mc_samples=max(mc_samples, 100_000),
                           rng=rs.generator(Substream.DISPLACEMENTS))
    mc = mc_generator_estimate(x, spec, h, mc_samples, rng=rs.generator(Substream.MONTE_CARLO))
    return GeneratorDiagnostic(x, cont, jmp.value, jmp.se, leading_order(x, spec), mc.value, mc.se)


# --------------------------------------------------------------------------
# drift-condition scan
# --------------------------------------------------------------------------


def plane_directions(n: int, count: int, seed: int = 0) -> np.ndarray:
    """Scrambled-Sobol unit vectors on the centered hyperplane."""
    sampler = qmc.Sobol(d=n, scramble=True, seed=seed)
    u = sampler.random_base2(int(np.ceil(np.log2(max(count, 2)))))[:count]
    z = center(norm.ppf(np.clip(u, 1e-12, 1 - 1e-12)))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def random_plane_points(n: int, count: int, max_radius: float, rng: np.random.Generator) -> np.ndarray:
    d = center(rng.standard_normal((count, n)))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * rng.uniform(0.0, max_radius, (count, 1))


@dataclass(frozen=True)
class DriftConditionReport:
    radius: float
    points: np.ndarray
    norms: np.ndarray
    generator: np.ndarray
    generator_se: np.ndarray
    leading: np.ndarray
    k_hat: float
    k_pred: float
    b_hat: float | None
    verdict: bool
    stable: bool

    @property
    def residuals(self) -> np.ndarray:
        return self.generator - self.leading

    def to_dict(self) -> dict:
        outside = self.norms >= self.radius
        return {
            "radius": self.radius,
            "n_points": int(self.norms.size),
            "k_hat": self.k_hat,
            "k_pred": self.k_pred,
            "b_hat": self.b_hat,
            "verdict": self.verdict,
            "stable": self.stable,
            "max_generator_outside": float(self.generator[outside].max()) if outside.any() else None,
            "max_abs_residual_by_radius": {
                repr(float(r)): float(np.abs(self.residuals[self.norms == r]).max())
                for r in np.unique(self.norms)
            },
        }


def drift_condition_scan(spec: ModelSpec, radii=(50.0, 100.0, 1000.0), n_directions: int = 200,
                         radius: float | None = None, seed: int = 0,
                         mc_samples: int = 100_000, h: float = 1e-3) -> DriftConditionReport:
    """Evaluate the generator of V on spheres of the hyperplane.

    The verdict holds when every scanned point with norm ``>= radius``
    has generator ``<= -k_pred/2``, ``k_pred = min partial sum / sqrt(N)``.
    """
    radii = np.asarray(radii, dtype=float)
    r = float(radii.min()) if radius is None else float(radius)
    n = spec.n_particles
    report = check_stability(spec)
    k_pred = report.margin / np.sqrt(n)
    dirs = plane_directions(n, n_directions, seed)
    points = (radii[:, None, None] * dirs[None]).reshape(-1, n)
    norms = np.repeat(radii, n_directions)
    values = np.empty(len(points))
    ses = np.empty(len(points))
    leading = np.empty(len(points))
    for i, x in enumerate(points):
        x = center(x)
        rs = RngStream(seed, i)
        if spec.is_diagonal:
            j = jump_generator_V(x, spec, mc_samples, rs.generator(Substream.DISPLACEMENTS))
            values[i] = continuous_generator_V(x, spec) + j.value
            ses[i] = j.se
        else:
            est = mc_generator_estimate(x, spec, h, mc_samples, rs.generator(Substream.MONTE_CARLO))
            values[i], ses[i] = est.value, est.se
        leading[i] = gap_form(x, report.centered_effective_drifts) / lyapunov_V(x)
    outside = norms >= r
    k_hat = float(-values[outside].max()) if outside.any() else float("nan")
    inside = ~outside
    b_hat = float((values[inside] + k_pred).max()) if inside.any() else None
    verdict = bool(outside.any() and np.all(values[outside] <= -k_pred / 2))
    return DriftConditionReport(r, points, norms, values, ses, leading, k_hat, float(k_pred),
                                b_hat, verdict, report.stable)
