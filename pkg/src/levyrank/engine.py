"""Trajectory engine: Euler–Maruyama segments pieced together at jump epochs.

Between jump epochs each named particle moves with the drift and noise of
its current rank, with ranks frozen over a step and re-evaluated at the
start of the next one.  Jump epochs form a Poisson clock of rate
``jumps.total_rate`` and are inserted exactly into the time grid.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .model import ModelSpec
from .ranking import permute_by_inverse, rank_permutation
from .rng import RngStream, Substream

CHUNK_STEPS = 1 << 15
JUMP_RANKINGS = ("pre", "post")


class SimulationError(RuntimeError):
    def __init__(self, message, *, replication=None, time=None, state=None):
        super().__init__(message)
        self.replication = replication
        self.time = time
        self.state = state


@dataclass(frozen=True)
class SimConfig:
    horizon: float
    step: float
    seed: int = 0
    replications: int = 1
    record_stride: int = 1
    jump_ranking: str = "pre"

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not 0 < self.step <= self.horizon:
            raise ValueError(f"step must lie in (0, horizon], got {self.step}")
        if self.replications < 1 or self.record_stride < 1:
            raise ValueError("replications and record_stride must be >= 1")
        if self.jump_ranking not in JUMP_RANKINGS:
            raise ValueError(f"jump_ranking must be one of {JUMP_RANKINGS}")
        RngStream(self.seed)

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.horizon / self.step - 1e-9))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded path of the named system.

    Rows are the strided grid points plus one row per jump holding the
    post-jump state (``is_jump``).  The pre-jump state of jump ``j`` is
    ``jump_pre[j]``.
    """

    times: np.ndarray
    states: np.ndarray
    is_jump: np.ndarray
    jump_times: np.ndarray
    jump_pre: np.ndarray
    jump_displacements: np.ndarray
    spec_fingerprint: str = ""
    replication: int = 0
    horizon: float = field(default=float("nan"))

    @property
    def n_particles(self) -> int:
        return self.states.shape[1]

    @property
    def jump_marks(self) -> list[tuple[float, np.ndarray, np.ndarray]]:
        return list(zip(self.jump_times.tolist(), self.jump_pre, self.jump_displacements))

    @property
    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Times and states of the non-jump rows."""
        keep = ~self.is_jump
        return self.times[keep], self.states[keep]

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.times, self.states, self.is_jump, self.jump_times,
                  self.jump_pre, self.jump_displacements):
            h.update(np.ascontiguousarray(a).tobytes())
        h.update(self.spec_fingerprint.encode())
        return h.hexdigest()


def fingerprint(spec: ModelSpec, cfg: SimConfig, x0=None) -> str:
    doc = {"model": spec.to_dict(), "sim": cfg.to_dict()}
    if x0 is not None:
        doc["x0"] = np.asarray(x0, dtype=float).tolist()
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def brownian_step(x, h: float, spec: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    """One Euler step with rank-frozen coefficients."""
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    x = np.array(x, dtype=float)
    z = rng.standard_normal(spec.n_particles)
    perm = np.arange(spec.n_particles)
    _kernels.euler_piece(x, perm, float(h), spec.drift, spec.factor, spec.is_diagonal, z)
    return x


def apply_jump(x, zeta, ranking: str = "pre") -> np.ndarray:
    """Add the rank-indexed displacement ``zeta`` to the named state ``x``.

    With ``ranking="pre"`` ranks come from ``x``; ``"post"`` looks for a
    state whose own ranking reproduces the assignment.
    """
    x = np.asarray(x, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    if ranking == "pre":
        return x + permute_by_inverse(zeta, rank_permutation(x))
    if ranking != "post":
        raise ValueError(f"unknown ranking {ranking!r}")
    out = x.copy()
    _kernels.jump(out, np.arange(x.size), zeta, True)
    return out


def jump_epochs(rate: float, horizon: float, rng: np.random.Generator) -> np.ndarray:
    """Cumulative Exp(rate) gaps falling in ``(0, horizon]``."""
    if rate <= 0:
        return np.empty(0)
    batch = max(16, int(rate * horizon * 1.2) + 16)
    chunks = []
    t = 0.0
    while True:
        taus = t + np.cumsum(rng.exponential(1.0 / rate, batch))
        chunks.append(taus)
        t = taus[-1]
        if t > horizon:
            break
    taus = np.concatenate(chunks)
    return taus[taus <= horizon]


def simulate(spec: ModelSpec, x0, cfg: SimConfig, replication: int = 0) -> Trajectory:
    """Simulate one replication; bit-identical for identical inputs."""
    if not 0 <= replication < cfg.replications:
        raise ValueError(f"replication {replication} outside [0, {cfg.replications})")
    n = spec.n_particles
    x = np.array(x0, dtype=float)
    if x.shape != (n,) or not np.all(np.isfinite(x)):
        raise ValueError(f"initial state must be a finite vector of length {n}")

    stream = RngStream(cfg.seed, replication)
    gauss = stream.generator(Substream.GAUSSIAN)
    lam = spec.jumps.total_rate
    taus = jump_epochs(lam, cfg.horizon, stream.generator(Substream.EPOCHS))
    n_jumps = taus.size
    if n_jumps:
        zetas = spec.jumps.sample(stream.generator(Substream.DISPLACEMENTS), n_jumps)
        splits = stream.generator(Substream.SPLIT).standard_normal((n_jumps, n))
    else:
        zetas = np.empty((0, n))
        splits = np.empty((0, n))
    pre_x = np.empty((n_jumps, n))

    perm = np.argsort(x, kind="stable")
    times = [np.zeros(1)]
    states = [x[None, :].copy()]
    flags = [np.zeros(1, dtype=bool)]
    t = 0.0
    jptr = 0
    n_total = cfg.n_steps
    h = float(cfg.step)
    post = cfg.jump_ranking == "post"
    for step0 in range(0, n_total, CHUNK_STEPS):
        n_chunk = min(CHUNK_STEPS, n_total - step0)
        z = gauss.standard_normal((n_chunk, n))
        chunk_end = cfg.horizon if step0 + n_chunk >= n_total else (step0 + n_chunk) * h
        jumps_here = int(np.searchsorted(taus, chunk_end, side="right")) - jptr
        cap = n_chunk // cfg.record_stride + 2 + jumps_here
        out_t = np.empty(cap)
        out_x = np.empty((cap, n))
        out_j = np.empty(cap, dtype=bool)
        rec, jptr, t, status = _kernels.run_chunk(
            x, perm, t, step0, n_chunk, n_total, h, float(cfg.horizon),
            spec.drift, spec.factor, spec.is_diagonal, z, taus, zetas, splits, jptr,
            cfg.record_stride, post, out_t, out_x, out_j, pre_x,
        )
        times.append(out_t[:rec])
        states.append(out_x[:rec])
        flags.append(out_j[:rec])
        if status != _kernels.OK:
            raise SimulationError(
                f"non-finite state at t={t} in replication {replication}: {x}",
                replication=replication, time=t, state=x.copy(),
            )

    return Trajectory(
        times=np.concatenate(times),
        states=np.concatenate(states),
        is_jump=np.concatenate(flags),
        jump_times=taus,
        jump_pre=pre_x,
        jump_displacements=zetas,
        spec_fingerprint=fingerprint(spec, cfg, x0),
        replication=replication,
        horizon=float(cfg.horizon),
    )


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get("LEVYRANK_THREADS", "1") or 1)
    return max(1, int(threads))


def run_ensemble(spec: ModelSpec, x0, cfg: SimConfig, threads: int | None = None,
                 replications=None) -> list[Trajectory]:
    """All replications, ordered by replication id whatever the thread count."""
    ids = list(range(cfg.replications)) if replications is None else list(replications)

    def one(r):
        try:
            return simulate(spec, x0, cfg, r)
        except SimulationError:
            raise
        except Exception as exc:
            raise SimulationError(f"replication {r} failed: {exc}", replication=r) from exc

    threads = resolve_threads(threads)
    if threads == 1:
        results = [one(r) for r in ids]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, ids))
    return sorted(results, key=lambda tr: tr.replication)
