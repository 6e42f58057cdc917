"""CSV round-trip for trajectories and plot-ready curves."""
from __future__ import annotations

import hashlib
import io
from pathlib import Path
from typing import Iterable

import numpy as np

from .analysis.ergodic import CapitalCurve
from .engine import Trajectory

FLOAT_FMT = "%.17g"


def _table(header: list[str], data: np.ndarray, fmts) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    if data.size:
        np.savetxt(buf, data, fmt=fmts, delimiter=",")
    return buf.getvalue()


def trajectory_csv(traj: Trajectory) -> str:
    n = traj.n_particles
    header = ["t"] + [f"x{i + 1}" for i in range(n)] + ["is_jump"]
    data = np.column_stack([traj.times, traj.states, traj.is_jump.astype(float)])
    return _table(header, data, [FLOAT_FMT] * (n + 1) + ["%d"])


def jumps_csv(traj: Trajectory) -> str:
    """One row per jump: epoch, rank displacements, pre-jump named state."""
    n = traj.n_particles
    header = ["tau"] + [f"z{k + 1}" for k in range(n)] + [f"pre_x{i + 1}" for i in range(n)]
    data = np.column_stack([traj.jump_times, traj.jump_displacements, traj.jump_pre])
    return _table(header, data.reshape(-1, 2 * n + 1), FLOAT_FMT)


def write_trajectory(traj: Trajectory, directory: Path) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    stem = f"rep_{traj.replication:04d}"
    main = directory / f"{stem}.csv"
    jumps = directory / f"{stem}_jumps.csv"
    main.write_text(trajectory_csv(traj))
    jumps.write_text(jumps_csv(traj))
    return [main, jumps]


def _read(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        data = np.empty((0, len(header)))
    return header, data


def read_trajectory(path: Path, replication: int | None = None, fingerprint: str = "") -> Trajectory:
    path = Path(path)
    header, data = _read(path)
    if header[0] != "t" or header[-1] != "is_jump":
        raise ValueError(f"{path}: unexpected header {header}")
    n = len(header) - 2
    jpath = path.with_name(path.stem + "_jumps.csv")
    if jpath.exists():
        _, jd = _read(jpath)
    else:
        jd = np.empty((0, 2 * n + 1))
    if replication is None:
        replication = int(path.stem.split("_")[-1])
    return Trajectory(
        times=data[:, 0].copy(),
        states=data[:, 1:n + 1].copy(),
        is_jump=data[:, -1].astype(bool),
        jump_times=jd[:, 0].copy(),
        jump_displacements=jd[:, 1:n + 1].copy(),
        jump_pre=jd[:, n + 1:].copy(),
        spec_fingerprint=fingerprint,
        replication=replication,
        horizon=float(data[-1, 0]),
    )


def capital_curves_csv(curves: Iterable[CapitalCurve]) -> str:
    rows = [np.column_stack([c.log_rank, c.log_weight, np.full(c.log_rank.size, c.replication)])
            for c in curves]
    data = np.concatenate(rows) if rows else np.empty((0, 3))
    return _table(["log_rank", "log_weight", "replication"], data, [FLOAT_FMT, FLOAT_FMT, "%d"])


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
