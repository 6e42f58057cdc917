"""Governing triple (drift, covariance, jump measure) and the stability verdict.

A jump measure is stored as a finite mixture of rated components; every
component carries a displacement law with closed-form first and second
moments, so effective drifts are computed exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ranking import center

PIVOT_TOL = 1e-12


class ModelError(ValueError):
    """Raised when a model description violates its invariants."""


# --------------------------------------------------------------------------
# scalar laws
# --------------------------------------------------------------------------


class ScalarLaw:
    """A probability law on the real line with closed-form moments."""

    def mean(self) -> float:
        raise NotImplementedError

    def second_moment(self) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def atoms(self) -> list[tuple[float, float]] | None:
        """Return ``[(value, prob), ...]`` if the law is purely atomic."""
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(ScalarLaw):
    value: float

    def mean(self):
        return float(self.value)

    def second_moment(self):
        return float(self.value) ** 2

    def sample(self, rng, size):
        return np.full(size, float(self.value))

    def atoms(self):
        return [(float(self.value), 1.0)]

    def to_dict(self):
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class Exponential(ScalarLaw):
    rate: float

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ModelError(f"exponential rate must be positive and finite, got {self.rate}")

    def mean(self):
        return 1.0 / self.rate

    def second_moment(self):
        return 2.0 / self.rate**2

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    def to_dict(self):
        return {"kind": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class Normal(ScalarLaw):
    mean_: float
    variance: float

    def __post_init__(self):
        if not (self.variance >= 0 and math.isfinite(self.variance)):
            raise ModelError(f"normal variance must be finite and >= 0, got {self.variance}")

    def mean(self):
        return float(self.mean_)

    def second_moment(self):
        return self.variance + self.mean_**2

    def sample(self, rng, size):
        return rng.normal(self.mean_, math.sqrt(self.variance), size)

    def atoms(self):
        return [(float(self.mean_), 1.0)] if self.variance == 0 else None

    def to_dict(self):
        return {"kind": "normal", "mean": self.mean_, "variance": self.variance}


@dataclass(frozen=True)
class Mixture(ScalarLaw):
    """Finite mixture of scalar laws."""

    weights: tuple[float, ...]
    laws: tuple[ScalarLaw, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.weights) != len(self.laws) or len(self.laws) == 0:
            raise ModelError("mixture needs one weight per component and at least one component")
        if np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=0, abs_tol=1e-12):
            raise ModelError(f"mixture weights must be nonnegative and sum to 1, got {self.weights}")

    def mean(self):
        return float(sum(w * law.mean() for w, law in zip(self.weights, self.laws)))

    def second_moment(self):
        return float(sum(w * law.second_moment() for w, law in zip(self.weights, self.laws)))

    def sample(self, rng, size):
        which = rng.choice(len(self.laws), size=size, p=np.asarray(self.weights))
        out = np.empty(size)
        for j, law in enumerate(self.laws):
            idx = np.flatnonzero(which == j)
            if idx.size:
                out[idx] = law.sample(rng, idx.size)
        return out

    def atoms(self):
        result = []
        for w, law in zip(self.weights, self.laws):
            sub = law.atoms()
            if sub is None:
                return None
            result.extend((v, w * p) for v, p in sub)
        return result

    def to_dict(self):
        return {
            "kind": "mixture",
            "weights": list(self.weights),
            "laws": [law.to_dict() for law in self.laws],
        }


def scalar_law_from_dict(d: dict) -> ScalarLaw:
    kind = d.get("kind")
    if kind == "constant":
        return Constant(float(d["value"]))
    if kind == "exponential":
        return Exponential(float(d["rate"]))
    if kind == "normal":
        return Normal(float(d["mean"]), float(d["variance"]))
    if kind == "mixture":
        return Mixture(
            tuple(float(w) for w in d["weights"]),
            tuple(scalar_law_from_dict(x) for x in d["laws"]),
        )
    raise ModelError(f"unknown scalar law kind {kind!r}")


# --------------------------------------------------------------------------
# displacement laws on R^N
# --------------------------------------------------------------------------


class DisplacementLaw:
    """Law of the rank-indexed displacement vector of a single jump.

    Coordinate ``k`` of a sample is the displacement applied to whichever
    particle holds rank ``k`` at the jump time (0-based ranks, bottom first).
    """

    dim: int

    def mean(self) -> np.ndarray:
        raise NotImplementedError

    def second_moment(self) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def atoms(self) -> list[tuple[np.ndarray, float]] | None:
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PointMass(DisplacementLaw):
    vector: tuple[float, ...]

    @property
    def dim(self):
        return len(self.vector)

    def mean(self):
        return np.asarray(self.vector, dtype=float)

    def second_moment(self):
        return np.asarray(self.vector, dtype=float) ** 2

    def sample(self, rng, size):
        return np.tile(np.asarray(self.vector, dtype=float), (size, 1))

    def atoms(self):
        return [(np.asarray(self.vector, dtype=float), 1.0)]

    def to_dict(self):
        return {"kind": "point_mass", "vector": list(self.vector)}


@dataclass(frozen=True)
class Product(DisplacementLaw):
    """Independent scalar laws, one per rank."""

    laws: tuple[ScalarLaw, ...]

    @property
    def dim(self):
        return len(self.laws)

    def mean(self):
        return np.array([law.mean() for law in self.laws])

    def second_moment(self):
        return np.array([law.second_moment() for law in self.laws])

    def sample(self, rng, size):
        return np.column_stack([law.sample(rng, size) for law in self.laws])

    def atoms(self):
        per = [law.atoms() for law in self.laws]
        if any(a is None for a in per):
            return None
        result = [(np.zeros(0), 1.0)]
        for a in per:
            result = [(np.append(v, val), p * q) for v, p in result for val, q in a]
        return result

    def to_dict(self):
        return {"kind": "product", "laws": [law.to_dict() for law in self.laws]}


@dataclass(frozen=True)
class OnRank(DisplacementLaw):
    """A scalar law on one rank coordinate; every other coordinate is 0."""

    rank: int
    law: ScalarLaw
    n: int

    def __post_init__(self):
        if not 0 <= self.rank < self.n:
            raise ModelError(f"rank {self.rank} out of range for N={self.n}")

    @property
    def dim(self):
        return self.n

    def mean(self):
        out = np.zeros(self.n)
        out[self.rank] = self.law.mean()
        return out

    def second_moment(self):
        out = np.zeros(self.n)
        out[self.rank] = self.law.second_moment()
        return out

    def sample(self, rng, size):
        out = np.zeros((size, self.n))
        out[:, self.rank] = self.law.sample(rng, size)
        return out

    def atoms(self):
        a = self.law.atoms()
        if a is None:
            return None
        result = []
        for val, p in a:
            v = np.zeros(self.n)
            v[self.rank] = val
            result.append((v, p))
        return result

    def to_dict(self):
        return {"kind": "on_rank", "rank": self.rank, "law": self.law.to_dict()}


def displacement_from_dict(d: dict, n: int) -> DisplacementLaw:
    kind = d.get("kind")
    if kind == "point_mass":
        return PointMass(tuple(float(v) for v in d["vector"]))
    if kind == "product":
        return Product(tuple(scalar_law_from_dict(x) for x in d["laws"]))
    if kind == "on_rank":
        return OnRank(int(d["rank"]), scalar_law_from_dict(d["law"]), n)
    raise ModelError(f"unknown displacement kind {kind!r}")


# --------------------------------------------------------------------------
# jump measure
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class JumpComponent:
    rate: float
    law: DisplacementLaw


@dataclass(frozen=True)
class JumpMeasure:
    """Finite Lévy measure on R^N as a sum of rated displacement laws."""

    n: int
    components: tuple[JumpComponent, ...] = ()

    def __post_init__(self):
        for c in self.components:
            if not (c.rate >= 0 and math.isfinite(c.rate)):
                raise ModelError(f"jump rate must be finite and >= 0, got {c.rate}")
            if c.law.dim != self.n:
                raise ModelError(f"displacement law has dimension {c.law.dim}, expected {self.n}")
        second_moment_check(self)

    @classmethod
    def empty(cls, n: int) -> "JumpMeasure":
        return cls(n, ())

    @classmethod
    def per_rank(cls, nus: Sequence[tuple[float, ScalarLaw] | None]) -> "JumpMeasure":
        """Independent jumps of ranked particles.

        ``nus[k]`` is ``(rate, law)`` for rank ``k`` or ``None`` for no jumps.
        """
        n = len(nus)
        comps = tuple(
            JumpComponent(float(rate), OnRank(k, law, n))
            for k, nu in enumerate(nus)
            if nu is not None
            for rate, law in [nu]
            if rate > 0
        )
        return cls(n, comps)

    @property
    def total_rate(self) -> float:
        return float(sum(c.rate for c in self.components))

    @property
    def probabilities(self) -> np.ndarray:
        rates = np.array([c.rate for c in self.components], dtype=float)
        return rates / rates.sum()

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` displacement vectors from the normalized measure."""
        if self.total_rate == 0:
            raise ModelError("cannot sample from an empty jump measure")
        out = np.zeros((size, self.n))
        if len(self.components) == 1:
            which = np.zeros(size, dtype=np.int64)
        else:
            which = rng.choice(len(self.components), size=size, p=self.probabilities)
        for j, c in enumerate(self.components):
            idx = np.flatnonzero(which == j)
            if idx.size:
                out[idx] = c.law.sample(rng, idx.size)
        return out

    def to_list(self) -> list[dict]:
        return [{"rate": c.rate, "law": c.law.to_dict()} for c in self.components]


def jump_mean_vector(jumps: JumpMeasure) -> np.ndarray:
    """Mean displacement rate per rank, ``f_k = ∫ z_k Λ(dz)``."""
    f = np.zeros(jumps.n)
    for c in jumps.components:
        f += c.rate * c.law.mean()
    return f


def second_moment_check(jumps: JumpMeasure) -> np.ndarray:
    """Per-rank ``∫ z_k² Λ(dz)``; raises if any entry is not finite."""
    s = np.zeros(jumps.n)
    for c in jumps.components:
        s += c.rate * c.law.second_moment()
    if not np.all(np.isfinite(s)):
        raise ModelError(f"jump measure has infinite second moment: {s}")
    return s


# --------------------------------------------------------------------------
# model spec and stability
# --------------------------------------------------------------------------


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """The governing triple plus the particle count."""

    n_particles: int
    drift: np.ndarray
    covariance: np.ndarray
    jumps: JumpMeasure
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.n_particles
        if int(n) != n or n < 2:
            raise ModelError(f"need at least two particles, got {n}")
        g = _readonly(self.drift)
        a = _readonly(self.covariance)
        if g.shape != (n,) or not np.all(np.isfinite(g)):
            raise ModelError(f"drift must be a finite vector of length {n}")
        if a.shape != (n, n) or not np.all(np.isfinite(a)):
            raise ModelError(f"covariance must be a finite {n}x{n} matrix")
        if not np.allclose(a, a.T, rtol=0, atol=1e-12):
            raise ModelError("covariance must be symmetric")
        if self.jumps.n != n:
            raise ModelError(f"jump measure has dimension {self.jumps.n}, expected {n}")
        try:
            chol = np.linalg.cholesky(a)
        except np.linalg.LinAlgError as exc:
            raise ModelError("covariance is not positive definite") from exc
        if np.min(np.diag(chol)) <= PIVOT_TOL:
            raise ModelError("covariance is not positive definite (pivot below tolerance)")
        object.__setattr__(self, "drift", g)
        object.__setattr__(self, "covariance", a)
        object.__setattr__(self, "factor", _readonly(chol))

    @classmethod
    def diagonal(cls, drift, sigma2, jumps: JumpMeasure | None = None) -> "ModelSpec":
        n = len(drift)
        return cls(n, drift, np.diag(np.asarray(sigma2, dtype=float)), jumps or JumpMeasure.empty(n))

    @property
    def is_diagonal(self) -> bool:
        a = self.covariance
        return bool(np.all(a == np.diag(np.diag(a))))

    @property
    def sigma2(self) -> np.ndarray:
        return np.diag(self.covariance).copy()

    def to_dict(self) -> dict:
        return {
            "n_particles": self.n_particles,
            "drift": self.drift.tolist(),
            "covariance": self.covariance.tolist(),
            "jumps": self.jumps.to_list(),
        }

    def __eq__(self, other):
        return isinstance(other, ModelSpec) and self.to_dict() == other.to_dict()

    __hash__ = None


@dataclass(frozen=True)
class StabilityReport:
    jump_means: np.ndarray
    effective_drifts: np.ndarray
    centered_effective_drifts: np.ndarray
    partial_sums: np.ndarray
    margin: float
    stable: bool

    def to_dict(self) -> dict:
        return {
            "jump_means": self.jump_means.tolist(),
            "effective_drifts": self.effective_drifts.tolist(),
            "centered_effective_drifts": self.centered_effective_drifts.tolist(),
            "partial_sums": self.partial_sums.tolist(),
            "margin": self.margin,
            "stable": self.stable,
        }


def stability_from_effective_drifts(f: np.ndarray, m: np.ndarray) -> StabilityReport:
    m_bar = center(m)
    partial = np.cumsum(m_bar)[:-1]
    margin = float(partial.min())
    return StabilityReport(f, m, m_bar, partial, margin, margin > 0)


def check_stability(spec: ModelSpec) -> StabilityReport:
    """Stable iff every bottom partial sum of centered effective drifts is > 0."""
    f = jump_mean_vector(spec.jumps)
    return stability_from_effective_drifts(f, spec.drift + f)
