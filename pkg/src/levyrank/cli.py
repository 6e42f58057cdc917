"""Batch front-end: ``levyrank {check,simulate,analyze,run}``.

Exit codes: 0 success (or stable, for ``check``), 1 error, 2 not stable.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    capital_curve,
    common_edges,
    drift_condition_scan,
    gap_samples,
    histogram_from_samples,
    occupation_fractions,
    tv_distance,
)
from .config import ConfigError, ExperimentConfig, load_config
from .engine import SimulationError, resolve_threads, run_ensemble
from .io import capital_curves_csv, read_trajectory, sha256_file, write_trajectory
from .model import ModelError, check_stability

EXIT_OK, EXIT_ERROR, EXIT_UNSTABLE = 0, 1, 2


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _out_dir(cfg: ExperimentConfig, override) -> Path:
    return Path(override) if override else Path(cfg.output.directory)


def cmd_check(cfg: ExperimentConfig, out=None) -> int:
    out = sys.stdout if out is None else out
    report = check_stability(cfg.model_spec())
    fmt = lambda v: " ".join(f"{x:.6g}" for x in v)  # noqa: E731
    print(f"effective drifts m:          {fmt(report.effective_drifts)}", file=out)
    print(f"centered effective drifts:   {fmt(report.centered_effective_drifts)}", file=out)
    print(f"partial sums:                {fmt(report.partial_sums)}", file=out)
    print(f"margin:                      {report.margin:.6g}", file=out)
    print(f"verdict:                     {'stable' if report.stable else 'NOT stable'}", file=out)
    return EXIT_OK if report.stable else EXIT_UNSTABLE


def cmd_simulate(cfg: ExperimentConfig, out_dir: Path, threads: int | None = None) -> list[Path]:
    spec, sim = cfg.model_spec(), cfg.sim_config()
    trajs = run_ensemble(spec, cfg.initial_state(), sim, threads=threads)
    tdir = out_dir / "trajectories"
    files = []
    for tr in trajs:
        files.extend(write_trajectory(tr, tdir))
    manifest = {
        "tool": "levyrank",
        "version": __version__,
        "config_hash": cfg.config_hash(),
        "seed": sim.seed,
        "replications": sim.replications,
        "spec_fingerprint": trajs[0].spec_fingerprint,
        "config": cfg.to_dict(),
        "files": {str(p.relative_to(out_dir)): sha256_file(p) for p in files},
    }
    (out_dir / "manifest.json").write_text(_dump(manifest))
    return files


def load_trajectories(out_dir: Path):
    tdir = out_dir / "trajectories"
    paths = sorted(p for p in tdir.glob("rep_*.csv") if not p.stem.endswith("_jumps"))
    if not paths:
        raise FileNotFoundError(f"no trajectories under {tdir}")
    fp = ""
    manifest = out_dir / "manifest.json"
    if manifest.exists():
        fp = json.loads(manifest.read_text()).get("spec_fingerprint", "")
    return [read_trajectory(p, fingerprint=fp) for p in paths]


def _tv_vs_time(trajs, burn_in, bins, checkpoints):
    stationary = gap_samples(trajs, burn_in)
    horizon = min(float(tr.times[-1]) for tr in trajs)
    rows = []
    for t in np.linspace(horizon / checkpoints, horizon, checkpoints):
        snap = []
        for tr in trajs:
            times, states = tr.grid
            i = int(np.searchsorted(times, t, side="right")) - 1
            snap.append(np.diff(np.sort(states[i])))
        snap = np.array(snap)
        edges = common_edges(stationary, snap, bins=bins)
        tv = tv_distance(histogram_from_samples(snap, edges), histogram_from_samples(stationary, edges))
        rows.append({"time": float(t), "tv": tv, "replications": len(trajs)})
    return rows


def cmd_analyze(cfg: ExperimentConfig, out_dir: Path) -> dict[str, Path]:
    a = cfg.analysis
    spec = cfg.model_spec()
    rdir = out_dir / "reports"
    rdir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    needs_traj = {"gaps", "occupation", "tv", "capital-curve"} & set(a.reports)
    trajs = load_trajectories(out_dir) if needs_traj else []
    burn_in = cfg.sim.effective_burn_in if cfg.sim is not None else 0.0
    want_json = "json" in cfg.output.formats
    want_csv = "csv" in cfg.output.formats

    def put(name: str, text: str):
        path = rdir / name
        path.write_text(text)
        written[name] = path

    if "stability" in a.reports:
        put("stability.json", _dump(check_stability(spec).to_dict()))
    if "gaps" in a.reports:
        samples = gap_samples(trajs, burn_in)
        hist = histogram_from_samples(samples, common_edges(samples, bins=a.bins), burn_in)
        if want_json:
            put("gaps.json", _dump(hist.to_dict()))
        if want_csv:
            lines = ["gap,bin_left,bin_right,count"]
            for k in range(hist.counts.shape[0]):
                for b in range(hist.counts.shape[1]):
                    lines.append(f"{k + 1},{hist.edges[k, b]!r},{hist.edges[k, b + 1]!r},{int(hist.counts[k, b])}")
            put("gaps.csv", "\n".join(lines) + "\n")
    if "occupation" in a.reports:
        per_rep = [occupation_fractions(tr).to_dict() | {"replication": tr.replication} for tr in trajs]
        put("occupation.json", _dump(per_rep))
    if "tv" in a.reports:
        put("tv.json", _dump(_tv_vs_time(trajs, burn_in, a.bins, a.tv_checkpoints)))
    if "capital-curve" in a.reports:
        curves = [capital_curve(tr, a.capital_time) for tr in trajs]
        put("capital_curve.csv", capital_curves_csv(curves))
    if "lyapunov-scan" in a.reports:
        scan = drift_condition_scan(spec, a.scan_radii, a.scan_directions, a.scan_radius,
                                    seed=cfg.sim.seed if cfg.sim else 0, mc_samples=a.mc_samples)
        put("lyapunov_scan.json", _dump(scan.to_dict()))
    return written


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levyrank", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"levyrank {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("check", "simulate", "analyze", "run"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment JSON document")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--threads", type=int, help="worker threads; results do not depend on it")
        p.add_argument("--seed", type=int, help="override sim.seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if cfg.sim is None:
                raise ConfigError("--seed given but config has no sim section")
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must fit in an unsigned 64-bit integer")
            cfg = cfg.with_seed(args.seed)
        if args.command == "check":
            return cmd_check(cfg)
        out_dir = _out_dir(cfg, args.out)
        threads = resolve_threads(args.threads)
        if args.command in ("simulate", "run"):
            cmd_simulate(cfg, out_dir, threads)
        if args.command in ("analyze", "run"):
            cmd_analyze(cfg, out_dir)
        return EXIT_OK
    except (ConfigError, ModelError, SimulationError, FileNotFoundError, ValueError, OSError) as exc:
        rep = getattr(exc, "replication", None)
        prefix = f"replication {rep}: " if rep is not None else ""
        print(f"levyrank: error: {prefix}{exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
