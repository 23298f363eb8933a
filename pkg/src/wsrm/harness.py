"""Seeded Monte Carlo experiments over channel realizations and power points.

Every trial draws one channel realization from ``rng_stream(master_seed, trial, 0)``
and hands it to every requested algorithm at every power point. Random
initializations, when enabled, come from ``rng_stream(master_seed, trial, 1)``
so all algorithms start from the same point. Work items run on a bounded
thread pool (``WSRM_THREADS``, default 1) and are folded in
``(power, trial, algorithm)`` order, so outputs do not depend on completion order.
"""
from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .baselines import wmmse, zero_forcing
from .network import (ChannelSet, NetworkConfig, generate_rayleigh_channels,
                      is_power_feasible, rng_stream, weighted_sum_rate)
from .sca import InitMode, ScaConfig, exact_weight_grid, run, run_exact_variant

__all__ = [
    "Scenario", "Algorithm", "ExperimentSpec", "TrialRecord", "ExperimentResult",
    "run_experiment", "iteration_comparison", "format_table", "write_outputs",
    "load_spec", "load_preset", "preset_names", "atomic_write_text", "worker_count",
]

log = logging.getLogger(__name__)

SCHEMA = "wsrm-experiment/1"
ITERATIVE = ("SCA", "SCA_EXACT", "WMMSE")


class Scenario(str, enum.Enum):
    SINGLE_CELL_SWEEP = "SingleCellSweep"
    TWO_CELL_CONVERGENCE = "TwoCellConvergence"
    CUSTOM = "Custom"


class Algorithm(str, enum.Enum):
    SCA = "SCA"
    SCA_EXACT = "SCA_EXACT"
    WMMSE = "WMMSE"
    ZF = "ZF"


def power_from_db(power_db: float, noise_var: float) -> float:
    """``P = noise_var * 10^(dB/10)``, i.e. dB is measured relative to the noise."""
    return noise_var * 10.0 ** (power_db / 10.0)


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run: network, power grid (dB), trial count, algorithms and seed.

    ``config.power_budget`` is ignored; each power point sets every BS budget
    to ``power_from_db(p, noise_var)``.
    """

    scenario: Scenario
    config: NetworkConfig
    power_grid: tuple[float, ...]
    num_trials: int
    algorithms: tuple[Algorithm, ...]
    master_seed: int = 0
    name: str = "custom"
    stop_tol: float = 1e-2
    max_iters: int = 50
    wmmse_max_iters: int = 1000
    wmmse_init: str = "mrt"
    sca_init: str = "mrt"
    record_timing: bool = False

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        object.__setattr__(self, "power_grid", tuple(float(p) for p in self.power_grid))
        object.__setattr__(self, "algorithms", tuple(Algorithm(a) for a in self.algorithms))
        if int(self.num_trials) != self.num_trials or self.num_trials < 1:
            raise ValueError("field 'num_trials' must be an integer >= 1")
        if not self.power_grid:
            raise ValueError("field 'power_db' must list at least one power point")
        if not all(math.isfinite(p) for p in self.power_grid):
            raise ValueError("field 'power_db' must hold finite values")
        if not self.algorithms:
            raise ValueError("field 'algorithms' must name at least one algorithm")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ValueError("field 'algorithms' lists an algorithm twice")
        if not self.stop_tol > 0:
            raise ValueError("field 'stop_tol' must be > 0")
        if self.max_iters < 1 or self.wmmse_max_iters < 1:
            raise ValueError("fields 'max_iters' and 'wmmse_max_iters' must be >= 1")
        for key in ("wmmse_init", "sca_init"):
            if getattr(self, key) not in ("mrt", "random"):
                raise ValueError(f"field '{key}' must be 'mrt' or 'random'")
        cfg = self.config
        if Algorithm.ZF in self.algorithms and (cfg.num_bs != 1 or cfg.num_users > cfg.num_antennas):
            raise ValueError("field 'algorithms': ZF needs one BS and num_users <= num_antennas")
        if Algorithm.SCA_EXACT in self.algorithms:
            try:
                exact_weight_grid(cfg.weights)
            except ValueError as err:
                raise ValueError(f"field 'algorithms': SCA_EXACT unsupported here ({err})") from None

    def config_at(self, power_db: float) -> NetworkConfig:
        return self.config.with_power(power_from_db(power_db, self.config.noise_var))

    def to_dict(self) -> dict:
        cfg = self.config
        return {
            "schema": SCHEMA,
            "name": self.name,
            "scenario": self.scenario.value,
            "network": {
                "num_bs": cfg.num_bs,
                "num_antennas": cfg.num_antennas,
                "num_users": cfg.num_users,
                "assignment": list(cfg.assignment),
                "noise_var": cfg.noise_var,
                "weights": list(cfg.weights),
            },
            "power_db": list(self.power_grid),
            "num_trials": int(self.num_trials),
            "algorithms": [a.value for a in self.algorithms],
            "master_seed": int(self.master_seed),
            "stop_tol": self.stop_tol,
            "max_iters": int(self.max_iters),
            "wmmse_max_iters": int(self.wmmse_max_iters),
            "wmmse_init": self.wmmse_init,
            "sca_init": self.sca_init,
            "record_timing": bool(self.record_timing),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        if not isinstance(d, dict):
            raise ValueError("experiment spec must be a JSON object")
        allowed = {"schema", "name", "scenario", "network", "power_db", "num_trials",
                   "algorithms", "master_seed", "stop_tol", "max_iters", "wmmse_max_iters",
                   "wmmse_init", "sca_init", "record_timing", "description"}
        unknown = sorted(set(d) - allowed)
        if unknown:
            raise ValueError(f"unknown field '{unknown[0]}' in experiment spec")
        if d.get("schema", SCHEMA) != SCHEMA:
            raise ValueError(f"field 'schema' must be '{SCHEMA}'")
        for key in ("scenario", "network", "power_db", "num_trials", "algorithms"):
            if key not in d:
                raise ValueError(f"missing field '{key}'")
        net = d["network"]
        if not isinstance(net, dict):
            raise ValueError("field 'network' must be an object")
        net_allowed = {"num_bs", "num_antennas", "num_users", "users_per_bs", "assignment",
                       "noise_var", "weights"}
        unknown = sorted(set(net) - net_allowed)
        if unknown:
            raise ValueError(f"unknown field 'network.{unknown[0]}'")
        try:
            num_bs = int(net["num_bs"])
            num_antennas = int(net["num_antennas"])
        except KeyError as err:
            raise ValueError(f"missing field 'network.{err.args[0]}'") from None
        if "assignment" in net:
            assignment = tuple(int(b) for b in net["assignment"])
        elif "users_per_bs" in net:
            assignment = tuple(b for b in range(num_bs) for _ in range(int(net["users_per_bs"])))
        else:
            raise ValueError("field 'network' needs 'assignment' or 'users_per_bs'")
        num_users = int(net.get("num_users", len(assignment)))
        power_db = d["power_db"]
        if not isinstance(power_db, list) or not power_db:
            raise ValueError("field 'power_db' must be a non-empty list of dB values")
        try:
            grid = tuple(float(p) for p in power_db)
        except (TypeError, ValueError):
            raise ValueError("field 'power_db' must hold numbers") from None
        noise = float(net.get("noise_var", 1.0))
        try:
            config = NetworkConfig(num_bs, num_antennas, num_users, assignment,
                                   (power_from_db(grid[0], noise),) * num_bs, noise,
                                   tuple(net.get("weights", ())))
        except ValueError as err:
            raise ValueError(f"field 'network': {err}") from None
        algorithms = d["algorithms"]
        if not isinstance(algorithms, list):
            raise ValueError("field 'algorithms' must be a list")
        valid = {a.value for a in Algorithm}
        for a in algorithms:
            if a not in valid:
                raise ValueError(f"field 'algorithms': unknown algorithm {a!r}")
        scenario = d["scenario"]
        if scenario not in {s.value for s in Scenario}:
            raise ValueError(f"field 'scenario': unknown scenario {scenario!r}")
        num_trials = d["num_trials"]
        if not isinstance(num_trials, int) or isinstance(num_trials, bool):
            raise ValueError("field 'num_trials' must be an integer")
        return cls(scenario=Scenario(scenario), config=config, power_grid=grid,
                   num_trials=num_trials, algorithms=tuple(algorithms),
                   master_seed=int(d.get("master_seed", 0)), name=str(d.get("name", "custom")),
                   stop_tol=float(d.get("stop_tol", 1e-2)), max_iters=int(d.get("max_iters", 50)),
                   wmmse_max_iters=int(d.get("wmmse_max_iters", 1000)),
                   wmmse_init=str(d.get("wmmse_init", "mrt")),
                   sca_init=str(d.get("sca_init", "mrt")),
                   record_timing=bool(d.get("record_timing", False)))

    def replace(self, **changes) -> "ExperimentSpec":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return ExperimentSpec(**d)


def load_spec(path: str | os.PathLike) -> ExperimentSpec:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"experiment spec file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ValueError(f"{path}: not valid JSON ({err})") from None
    return ExperimentSpec.from_dict(data)


def preset_names() -> list[str]:
    root = resources.files("wsrm") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> ExperimentSpec:
    if name not in preset_names():
        raise ValueError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    text = (resources.files("wsrm") / "presets" / f"{name}.json").read_text()
    return ExperimentSpec.from_dict(json.loads(text))


@dataclass
class TrialRecord:
    algorithm: str
    power_db: float
    trial: int
    wsr: float | None
    iterations: int | None
    converged: bool
    trace: list
    seconds_per_iter: float | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    records: list[TrialRecord] = field(default_factory=list)

    def select(self, algorithm=None, power_db=None, ok_only=False) -> list[TrialRecord]:
        alg = None if algorithm is None else Algorithm(algorithm).value
        return [r for r in self.records
                if (alg is None or r.algorithm == alg)
                and (power_db is None or r.power_db == float(power_db))
                and not (ok_only and r.failed)]

    def mean_wsr(self, algorithm, power_db) -> float:
        vals = [r.wsr for r in self.select(algorithm, power_db, ok_only=True)]
        return float(np.mean(vals)) if vals else float("nan")

    def summary(self) -> dict:
        spec = self.spec
        algs = {}
        for a in spec.algorithms:
            points = []
            for p in spec.power_grid:
                recs = self.select(a, p)
                ok = [r for r in recs if not r.failed]
                wsr = np.array([r.wsr for r in ok], dtype=float)
                n = wsr.size
                entry = {
                    "power_db": p,
                    "trials": len(recs),
                    "succeeded": n,
                    "failed": len(recs) - n,
                    "mean_wsr": float(wsr.mean()) if n else None,
                    "ci95_halfwidth": float(1.96 * wsr.std(ddof=1) / math.sqrt(n)) if n > 1 else None,
                    "not_converged": sum(1 for r in ok if not r.converged),
                    "failures": [{"trial": r.trial, "error": r.error} for r in recs if r.failed],
                }
                if spec.record_timing and a.value != "ZF":
                    times = [r.seconds_per_iter for r in ok if r.seconds_per_iter is not None]
                    entry["median_seconds_per_iter"] = float(np.median(times)) if times else None
                points.append(entry)
            algs[a.value] = {"per_power": points}
        return {
            "name": spec.name,
            "version": version_stamp(spec),
            "spec": spec.to_dict(),
            "algorithms": algs,
            "iteration_comparison": iteration_comparison(self),
        }


def version_stamp(spec: ExperimentSpec) -> str:
    """``<package version>+<12 hex digits of sha1(canonical spec JSON)>``."""
    canonical = json.dumps(spec.to_dict(), sort_keys=True, separators=(",", ":"))
    return f"{__version__}+{hashlib.sha1(canonical.encode()).hexdigest()[:12]}"


def worker_count() -> int:
    raw = os.environ.get("WSRM_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"WSRM_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"WSRM_THREADS must be a positive integer, got {raw!r}")
    return n


def _run_one(spec: ExperimentSpec, alg: Algorithm, power_db: float, trial: int,
             channels: ChannelSet) -> TrialRecord:
    cfg = spec.config_at(power_db)
    init_seed = rng_stream(spec.master_seed, trial, 1)
    try:
        if alg in (Algorithm.SCA, Algorithm.SCA_EXACT):
            sc = ScaConfig(stop_tol=spec.stop_tol, max_outer_iters=spec.max_iters,
                           init_mode=InitMode.RANDOM_FEASIBLE if spec.sca_init == "random"
                           else InitMode.MRT_START)
            fn = run if alg is Algorithm.SCA else run_exact_variant
            res = fn(cfg, channels, sc, seed=init_seed)
            beams, trace, iters, conv = res.beams, res.trace, res.iterations, res.converged
            secs = float(np.median(res.seconds_per_iter)) if res.seconds_per_iter else None
        elif alg is Algorithm.WMMSE:
            res = wmmse(cfg, channels, stop_tol=spec.stop_tol, max_iters=spec.wmmse_max_iters,
                        seed=init_seed, init=spec.wmmse_init)
            beams, trace, iters, conv = res.beams, res.trace, res.iterations, res.converged
            secs = float(np.median(res.seconds_per_iter)) if res.seconds_per_iter else None
        else:
            beams = zero_forcing(cfg, channels)
            iters, conv, secs = 0, True, None
            trace = [weighted_sum_rate(cfg, channels, beams)]
        if not is_power_feasible(cfg, beams, tol=1e-8 * max(1.0, max(cfg.power_budget))):
            raise RuntimeError("returned beamformers violate the power budget")
        wsr = weighted_sum_rate(cfg, channels, beams)
    except Exception as err:  # recorded, counted and reported; never dropped
        log.warning("%s failed at %.3g dB, trial %d: %s", alg.value, power_db, trial, err)
        return TrialRecord(alg.value, power_db, trial, None, None, False, [],
                           error=f"{type(err).__name__}: {err}")
    return TrialRecord(alg.value, power_db, trial, float(wsr), int(iters), bool(conv),
                       [float(v) for v in trace],
                       secs if spec.record_timing else None)


def _run_trial(spec: ExperimentSpec, trial: int) -> list[TrialRecord]:
    channels = generate_rayleigh_channels(spec.config, rng_stream(spec.master_seed, trial, 0))
    return [_run_one(spec, alg, p, trial, channels)
            for p in spec.power_grid for alg in spec.algorithms]


def run_experiment(spec: ExperimentSpec, workers: int | None = None) -> ExperimentResult:
    """Run every algorithm on every (power point, trial) pair of ``spec``."""
    workers = worker_count() if workers is None else int(workers)
    trials = range(spec.num_trials)
    if workers <= 1:
        per_trial = [_run_trial(spec, t) for t in trials]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_trial = list(pool.map(lambda t: _run_trial(spec, t), trials))
    order = {(p, a.value): i for i, (p, a) in
             enumerate((p, a) for p in spec.power_grid for a in spec.algorithms)}
    records = sorted((r for recs in per_trial for r in recs),
                     key=lambda r: (order[(r.power_db, r.algorithm)], r.trial))
    return ExperimentResult(spec, records)


def _quartiles(values: Sequence[int]) -> tuple[float, float, float]:
    q1, med, q3 = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    return float(q1), float(med), float(q3)


def iteration_comparison(result: ExperimentResult) -> list[dict]:
    """Median and quartiles of iteration counts per iterative algorithm.

    Every algorithm stops once the weighted sum rate changes by less than the
    spec's ``stop_tol``. Failed trials are excluded and counted.
    """
    rows = []
    for a in result.spec.algorithms:
        if a.value not in ITERATIVE:
            continue
        recs = result.select(a)
        its = [r.iterations for r in recs if not r.failed]
        row = {"algorithm": a.value, "runs": len(its), "failed": len(recs) - len(its),
               "not_converged": sum(1 for r in recs if not r.failed and not r.converged)}
        if its:
            q1, med, q3 = _quartiles(its)
            row.update(median=med, q1=q1, q3=q3)
        else:
            row.update(median=None, q1=None, q3=None)
        rows.append(row)
    return rows


def format_table(rows: list[dict], columns: Sequence[str]) -> str:
    def fmt(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.4g}"
        return str(v)

    cells = [[fmt(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) if cells else len(c)
              for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "algorithm", "power_db", "trial", "wsr", "iterations",
                "seconds_per_iter"])
    scen = result.spec.scenario.value
    for r in result.records:
        w.writerow([scen, r.algorithm, repr(r.power_db), r.trial,
                    "" if r.wsr is None else repr(r.wsr),
                    "" if r.iterations is None else r.iterations,
                    "" if r.seconds_per_iter is None else repr(r.seconds_per_iter)])
    return buf.getvalue()


def _traces(result: ExperimentResult) -> dict:
    return {
        "name": result.spec.name,
        "version": version_stamp(result.spec),
        "traces": [{"algorithm": r.algorithm, "power_db": r.power_db, "trial": r.trial,
                    "converged": r.converged, "trace": r.trace}
                   for r in result.records if not r.failed],
    }


def write_outputs(result: ExperimentResult, out_dir: str | os.PathLike) -> dict[str, Path]:
    """Write ``results.csv``, ``traces.json`` and ``summary.json`` atomically."""
    out = Path(out_dir)
    paths = {"results": out / "results.csv", "traces": out / "traces.json",
             "summary": out / "summary.json"}
    atomic_write_text(paths["results"], _csv_text(result))
    atomic_write_text(paths["traces"], json.dumps(_traces(result), sort_keys=True) + "\n")
    atomic_write_text(paths["summary"],
                      json.dumps(result.summary(), sort_keys=True, indent=2) + "\n")
    return paths
