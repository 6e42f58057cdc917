"""Experiment configuration documents (strict JSON).

Ranks in the document are 1-based, bottom rank first.  Example::

    {
      "model": {"n_particles": 3, "drift": [0, 0, 0], "sigma2": [1, 1, 1],
                "jumps": [{"rate": 0.5, "rank": 1,
                           "law": {"kind": "constant", "value": 1}}]},
      "sim": {"horizon": 100, "step": 0.01, "seed": 7, "replications": 4},
      "analysis": {"reports": ["stability", "occupation"]},
      "output": {"directory": "out"}
    }
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .engine import JUMP_RANKINGS, SimConfig
from .model import (
    JumpComponent,
    JumpMeasure,
    ModelError,
    ModelSpec,
    OnRank,
    PointMass,
    Product,
    ScalarLaw,
    scalar_law_from_dict,
)

REPORTS = ("stability", "gaps", "occupation", "tv", "capital-curve", "lyapunov-scan")
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


# --------------------------------------------------------------------------
# sections
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class JumpEntry:
    rate: float
    rank: int | None = None
    law: ScalarLaw | None = None
    vector: tuple[float, ...] | None = None
    product: tuple[ScalarLaw, ...] | None = None

    def component(self, n: int) -> JumpComponent:
        if self.vector is not None:
            return JumpComponent(self.rate, PointMass(self.vector))
        if self.product is not None:
            return JumpComponent(self.rate, Product(self.product))
        return JumpComponent(self.rate, OnRank(self.rank - 1, self.law, n))

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"rate": self.rate}
        if self.vector is not None:
            d["vector"] = list(self.vector)
        elif self.product is not None:
            d["product"] = [law.to_dict() for law in self.product]
        else:
            d["rank"] = self.rank
            d["law"] = self.law.to_dict()
        return d


@dataclass(frozen=True)
class ModelSection:
    n_particles: int
    drift: tuple[float, ...]
    sigma2: tuple[float, ...] | None = None
    covariance: tuple[tuple[float, ...], ...] | None = None
    jumps: tuple[JumpEntry, ...] = ()

    def build(self) -> ModelSpec:
        n = self.n_particles
        cov = np.diag(self.sigma2) if self.sigma2 is not None else np.array(self.covariance)
        measure = JumpMeasure(n, tuple(j.component(n) for j in self.jumps))
        return ModelSpec(n, np.array(self.drift), cov, measure)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"n_particles": self.n_particles, "drift": list(self.drift)}
        if self.sigma2 is not None:
            d["sigma2"] = list(self.sigma2)
        else:
            d["covariance"] = [list(r) for r in self.covariance]
        d["jumps"] = [j.to_dict() for j in self.jumps]
        return d


@dataclass(frozen=True)
class SimSection:
    horizon: float
    step: float
    seed: int = 0
    replications: int = 1
    record_stride: int = 1
    burn_in: float | None = None
    x0: tuple[float, ...] | None = None
    jump_ranking: str = "pre"

    def build(self) -> SimConfig:
        return SimConfig(self.horizon, self.step, self.seed, self.replications,
                         self.record_stride, self.jump_ranking)

    @property
    def effective_burn_in(self) -> float:
        return self.horizon / 5 if self.burn_in is None else self.burn_in

    def to_dict(self) -> dict:
        d = {
            "horizon": self.horizon, "step": self.step, "seed": self.seed,
            "replications": self.replications, "record_stride": self.record_stride,
            "jump_ranking": self.jump_ranking,
        }
        if self.burn_in is not None:
            d["burn_in"] = self.burn_in
        if self.x0 is not None:
            d["x0"] = list(self.x0)
        return d


@dataclass(frozen=True)
class AnalysisSection:
    reports: tuple[str, ...] = ("stability",)
    bins: int = 200
    scan_radii: tuple[float, ...] = (50.0, 100.0, 1000.0)
    scan_directions: int = 200
    scan_radius: float | None = None
    mc_samples: int = 100_000
    capital_time: float | None = None
    tv_checkpoints: int = 5

    def to_dict(self) -> dict:
        d = {
            "reports": list(self.reports), "bins": self.bins,
            "scan_radii": list(self.scan_radii), "scan_directions": self.scan_directions,
            "mc_samples": self.mc_samples, "tv_checkpoints": self.tv_checkpoints,
        }
        if self.scan_radius is not None:
            d["scan_radius"] = self.scan_radius
        if self.capital_time is not None:
            d["capital_time"] = self.capital_time
        return d


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    formats: tuple[str, ...] = FORMATS

    def to_dict(self) -> dict:
        return {"directory": self.directory, "formats": list(self.formats)}


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSection
    sim: SimSection | None = None
    analysis: AnalysisSection = field(default_factory=AnalysisSection)
    output: OutputSection = field(default_factory=OutputSection)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"model": self.model.to_dict()}
        if self.sim is not None:
            d["sim"] = self.sim.to_dict()
        d["analysis"] = self.analysis.to_dict()
        d["output"] = self.output.to_dict()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def model_spec(self) -> ModelSpec:
        return self.model.build()

    def sim_config(self) -> SimConfig:
        if self.sim is None:
            raise ConfigError("config has no sim section")
        return self.sim.build()

    def initial_state(self) -> np.ndarray:
        n = self.model.n_particles
        if self.sim is None or self.sim.x0 is None:
            return np.zeros(n)
        return np.array(self.sim.x0, dtype=float)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        from dataclasses import replace

        return replace(self, sim=replace(self.sim, seed=seed))


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.text = text

    def line_of(self, path: tuple) -> int | None:
        pos = 0
        found = False
        for key in path:
            if not isinstance(key, str):
                continue
            idx = self.text.find(f'"{key}"', pos)
            if idx < 0:
                break
            pos, found = idx, True
        return self.text.count("\n", 0, pos) + 1 if found else None

    def fail(self, msg: str, path: tuple):
        where = ".".join(str(p) for p in path)
        raise ConfigError(f"{where}: {msg}" if where else msg, self.line_of(path))

    def obj(self, d, path, required=(), optional=()) -> dict:
        if not isinstance(d, dict):
            self.fail("expected an object", path)
        for k in d:
            if k not in required and k not in optional:
                self.fail(f"unknown key {k!r}", path + (k,))
        for k in required:
            if k not in d:
                self.fail(f"missing key {k!r}", path)
        return d

    def num(self, v, path, *, positive=False, nonneg=False) -> float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail("expected a number", path)
        v = float(v)
        if not np.isfinite(v):
            self.fail("expected a finite number", path)
        if positive and v <= 0:
            self.fail("expected a positive number", path)
        if nonneg and v < 0:
            self.fail("expected a nonnegative number", path)
        return v

    def integer(self, v, path, minimum=None) -> int:
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail("expected an integer", path)
        if minimum is not None and v < minimum:
            self.fail(f"expected an integer >= {minimum}", path)
        return v

    def vec(self, v, path, length=None) -> tuple[float, ...]:
        if not isinstance(v, list):
            self.fail("expected an array of numbers", path)
        if length is not None and len(v) != length:
            self.fail(f"expected {length} entries, got {len(v)}", path)
        return tuple(self.num(x, path + (i,)) for i, x in enumerate(v))

    def scalar_law(self, d, path) -> ScalarLaw:
        kinds = {
            "constant": (("kind", "value"), ()),
            "exponential": (("kind", "rate"), ()),
            "normal": (("kind", "mean", "variance"), ()),
            "mixture": (("kind", "weights", "laws"), ()),
        }
        if not isinstance(d, dict) or d.get("kind") not in kinds:
            self.fail(f"law kind must be one of {sorted(kinds)}", path)
        req, opt = kinds[d["kind"]]
        self.obj(d, path, req, opt)
        if d["kind"] == "mixture":
            if not isinstance(d["laws"], list):
                self.fail("expected an array of laws", path + ("laws",))
            laws = tuple(self.scalar_law(x, path + ("laws", i)) for i, x in enumerate(d["laws"]))
            weights = self.vec(d["weights"], path + ("weights",), len(laws))
            return self._law(lambda: scalar_law_from_dict(
                {"kind": "mixture", "weights": weights, "laws": [l.to_dict() for l in laws]}), path)
        for k in req[1:]:
            self.num(d[k], path + (k,))
        return self._law(lambda: scalar_law_from_dict(d), path)

    def _law(self, make, path):
        try:
            return make()
        except ModelError as exc:
            self.fail(str(exc), path)

    def jump(self, d, path, n) -> JumpEntry:
        self.obj(d, path, ("rate",), ("rank", "law", "vector", "product"))
        rate = self.num(d["rate"], path + ("rate",), nonneg=True)
        shapes = [k for k in ("law", "vector", "product") if k in d]
        if len(shapes) != 1:
            self.fail("a jump needs exactly one of 'law' (with 'rank'), 'vector', 'product'", path)
        if "law" in d:
            if "rank" not in d:
                self.fail("'law' needs a 1-based 'rank'", path)
            rank = self.integer(d["rank"], path + ("rank",), 1)
            if rank > n:
                self.fail(f"rank must be <= {n}", path + ("rank",))
            return JumpEntry(rate, rank=rank, law=self.scalar_law(d["law"], path + ("law",)))
        if "rank" in d:
            self.fail("'rank' only applies with 'law'", path + ("rank",))
        if "vector" in d:
            return JumpEntry(rate, vector=self.vec(d["vector"], path + ("vector",), n))
        if not isinstance(d["product"], list) or len(d["product"]) != n:
            self.fail(f"expected {n} laws", path + ("product",))
        laws = tuple(self.scalar_law(x, path + ("product", i)) for i, x in enumerate(d["product"]))
        return JumpEntry(rate, product=laws)

    def model(self, d, path=("model",)) -> ModelSection:
        self.obj(d, path, ("n_particles", "drift"), ("sigma2", "covariance", "jumps"))
        n = self.integer(d["n_particles"], path + ("n_particles",), 2)
        drift = self.vec(d["drift"], path + ("drift",), n)
        if ("sigma2" in d) == ("covariance" in d):
            self.fail("give exactly one of 'sigma2' or 'covariance'", path)
        sigma2 = cov = None
        if "sigma2" in d:
            sigma2 = self.vec(d["sigma2"], path + ("sigma2",), n)
        else:
            rows = d["covariance"]
            if not isinstance(rows, list) or len(rows) != n:
                self.fail(f"expected {n} rows", path + ("covariance",))
            cov = tuple(self.vec(r, path + ("covariance", i), n) for i, r in enumerate(rows))
        jumps_raw = d.get("jumps", [])
        if not isinstance(jumps_raw, list):
            self.fail("expected an array", path + ("jumps",))
        jumps = tuple(self.jump(j, path + ("jumps", i), n) for i, j in enumerate(jumps_raw))
        section = ModelSection(n, drift, sigma2, cov, jumps)
        try:
            section.build()
        except ModelError as exc:
            self.fail(str(exc), path)
        return section

    def sim(self, d, n, path=("sim",)) -> SimSection:
        self.obj(d, path, ("horizon", "step"),
                 ("seed", "replications", "record_stride", "burn_in", "x0", "jump_ranking"))
        horizon = self.num(d["horizon"], path + ("horizon",), positive=True)
        step = self.num(d["step"], path + ("step",), positive=True)
        if step > horizon:
            self.fail("step must not exceed horizon", path + ("step",))
        seed = self.integer(d.get("seed", 0), path + ("seed",), 0)
        if seed >= 2**64:
            self.fail("seed must fit in 64 bits", path + ("seed",))
        reps = self.integer(d.get("replications", 1), path + ("replications",), 1)
        stride = self.integer(d.get("record_stride", 1), path + ("record_stride",), 1)
        burn_in = None
        if d.get("burn_in") is not None:
            burn_in = self.num(d["burn_in"], path + ("burn_in",), nonneg=True)
            if burn_in >= horizon:
                self.fail("burn_in must be smaller than horizon", path + ("burn_in",))
        x0 = self.vec(d["x0"], path + ("x0",), n) if d.get("x0") is not None else None
        ranking = d.get("jump_ranking", "pre")
        if ranking not in JUMP_RANKINGS:
            self.fail(f"jump_ranking must be one of {JUMP_RANKINGS}", path + ("jump_ranking",))
        return SimSection(horizon, step, seed, reps, stride, burn_in, x0, ranking)

    def analysis(self, d, path=("analysis",)) -> AnalysisSection:
        self.obj(d, path, (), ("reports", "bins", "scan_radii", "scan_directions", "scan_radius",
                               "mc_samples", "capital_time", "tv_checkpoints"))
        reports = d.get("reports", ["stability"])
        if not isinstance(reports, list) or any(r not in REPORTS for r in reports):
            self.fail(f"reports must be a list drawn from {REPORTS}", path + ("reports",))
        radii = self.vec(d.get("scan_radii", [50.0, 100.0, 1000.0]), path + ("scan_radii",))
        if not radii or min(radii) <= 0:
            self.fail("scan radii must be positive", path + ("scan_radii",))
        scan_radius = d.get("scan_radius")
        capital_time = d.get("capital_time")
        return AnalysisSection(
            reports=tuple(reports),
            bins=self.integer(d.get("bins", 200), path + ("bins",), 1),
            scan_radii=radii,
            scan_directions=self.integer(d.get("scan_directions", 200), path + ("scan_directions",), 1),
            scan_radius=None if scan_radius is None else self.num(scan_radius, path + ("scan_radius",), positive=True),
            mc_samples=self.integer(d.get("mc_samples", 100_000), path + ("mc_samples",), 2),
            capital_time=None if capital_time is None else self.num(capital_time, path + ("capital_time",), nonneg=True),
            tv_checkpoints=self.integer(d.get("tv_checkpoints", 5), path + ("tv_checkpoints",), 1),
        )

    def output(self, d, path=("output",)) -> OutputSection:
        self.obj(d, path, (), ("directory", "formats"))
        directory = d.get("directory", "out")
        if not isinstance(directory, str) or not directory:
            self.fail("expected a nonempty string", path + ("directory",))
        formats = d.get("formats", list(FORMATS))
        if not isinstance(formats, list) or any(f not in FORMATS for f in formats):
            self.fail(f"formats must be drawn from {FORMATS}", path + ("formats",))
        return OutputSection(directory, tuple(formats))

    def document(self, d) -> ExperimentConfig:
        self.obj(d, (), ("model",), ("sim", "analysis", "output"))
        model = self.model(d["model"])
        sim = self.sim(d["sim"], model.n_particles) if "sim" in d else None
        return ExperimentConfig(
            model=model,
            sim=sim,
            analysis=self.analysis(d.get("analysis", {})),
            output=self.output(d.get("output", {})),
        )


def parse_config(text: str) -> ExperimentConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, exc.lineno) from exc
    return _Parser(text).document(doc)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())
