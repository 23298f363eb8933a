"""Built-in property suites behind ``wsrm verify``.

Each suite is a small, seeded self-check that returns ``(passed, detail)``.
They are deliberately fast so they can run on every install.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import sca
from .baselines import wmmse, zero_forcing
from .conic import Affine, ConeProgram, add_geometric_mean_tree, add_hyperbolic, solve
from .network import (ChannelSet, NetworkConfig, generate_rayleigh_channels,
                      is_power_feasible, rng_stream, weighted_sum_rate)

__all__ = ["SuiteResult", "SUITES", "run_suites"]

SEED = 20240611


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _suite_amgm():
    rng = rng_stream(SEED, 0, 0)
    n = 10_000
    x = rng.uniform(1e-3, 1e3, n)
    beta = rng.uniform(1e-3, 1e3, n)
    phi = np.exp(rng.uniform(-8, 8, n))
    f = np.sqrt(x) * beta
    gap = sca.amgm_overestimate(x, beta, phi) - f
    worst_dom = float(np.min(gap / f))
    tight = np.sqrt(x) / beta
    worst_tan = float(np.max(np.abs(sca.amgm_overestimate(x, beta, tight) - f) / f))
    ok = worst_dom >= -1e-12 and worst_tan <= 1e-12
    return ok, f"min (G-f)/f = {worst_dom:.2e}, max tangency error = {worst_tan:.2e}"


def _suite_linearization():
    rng = rng_stream(SEED, 0, 1)
    n = 10_000
    alpha = rng.uniform(1.0001, 10.0, n)
    t_ref = np.exp(rng.uniform(-5, 5, n))
    t = t_ref * np.exp(rng.uniform(-3, 3, n))
    worst = np.inf
    for a, tr, tt in zip(alpha, t_ref, t):
        slope, icpt = sca.linearize_power(tr, a)
        worst = min(worst, (slope * tt + icpt - tt ** (1 / a)) / tt ** (1 / a))
    ok = worst >= -1e-12
    return ok, f"min relative gap of tangent over t^(1/alpha) = {worst:.2e}"


def _suite_cone():
    rng = rng_stream(SEED, 0, 2)
    worst = 0.0
    for k in (1, 2, 3, 5):
        prog = ConeProgram()
        leaves = prog.add_vars(k)
        vals = rng.uniform(0.1, 10.0, k)
        for i, v in zip(leaves, vals):
            prog.add_le(Affine.var(i), v)
        root = add_geometric_mean_tree(prog, [Affine.var(i) for i in leaves])
        prog.set_objective(root)
        sol = solve(prog)
        size = 1 << (k - 1).bit_length()  # leaves are padded with ones up to a power of two
        want = float(np.prod(vals) ** (1.0 / size))
        worst = max(worst, abs(sol.objective_value - want) / want)
        worst = max(worst, prog.max_violation(sol.primal))
    prog = ConeProgram()
    u, v, z = prog.add_vars(3)
    prog.add_le(Affine.var(u), 2.0)
    prog.add_le(Affine.var(v), 8.0)
    add_hyperbolic(prog, Affine.var(u), Affine.var(v), Affine.var(z))
    prog.set_objective(Affine.var(z))
    sol = solve(prog)
    worst = max(worst, abs(sol.objective_value - 4.0) / 4.0)
    ok = worst <= 1e-6
    return ok, f"worst relative error / violation = {worst:.2e}"


def _suite_monotonicity():
    worst_drop, worst_carry, runs = 0.0, 0.0, 0
    for cfg in (NetworkConfig.single_cell(4, 4, 10.0),
                NetworkConfig.multicell(2, 8, 2, 10 ** 1.2, weights=(0.14, 0.21, 0.28, 0.36))):
        for trial in range(3):
            ch = generate_rayleigh_channels(cfg, rng_stream(SEED, trial, 3))
            res = sca.run(cfg, ch, sca.ScaConfig(debug=True))
            runs += 1
            worst_drop = max(worst_drop, float(-np.min(np.diff(res.trace))))
            worst_carry = max(worst_carry, max(res.carryover_violations))
    ok = worst_drop <= 1e-6 and worst_carry <= 1e-6
    return ok, (f"{runs} runs, largest objective decrease = {max(worst_drop, 0.0):.2e}, "
                f"largest carried-over infeasibility = {worst_carry:.2e}")


def _suite_wmmse():
    worst_drop, worst_pow = 0.0, 0.0
    for trial in range(5):
        cfg = NetworkConfig.multicell(2, 4, 2, 10.0)
        ch = generate_rayleigh_channels(cfg, rng_stream(SEED, trial, 4))
        res = wmmse(cfg, ch, seed=rng_stream(SEED, trial, 5), init="random")
        worst_drop = max(worst_drop, float(-np.min(np.diff(res.trace))))
        worst_pow = max(worst_pow, 0.0 if is_power_feasible(cfg, res.beams, 1e-8) else 1.0)
    ok = worst_drop <= 1e-6 and worst_pow == 0.0
    return ok, f"largest WSR decrease = {max(worst_drop, 0.0):.2e}, power feasible = {worst_pow == 0.0}"


def _suite_oracle():
    errs = {}
    # single user: MRT rate log2(1 + P ||h||^2 / sigma^2)
    cfg = NetworkConfig.single_cell(4, 1, 10.0)
    ch = generate_rayleigh_channels(cfg, rng_stream(SEED, 0, 6))
    want = math.log2(1 + 10.0 * float(np.sum(np.abs(ch.h) ** 2)))
    errs["sca_mrt"] = abs(sca.run(cfg, ch, sca.ScaConfig(stop_tol=1e-8)).trace[-1] - want)
    errs["wmmse_mrt"] = abs(wmmse(cfg, ch, stop_tol=1e-10).trace[-1] - want)
    # orthonormal channels: zero-forcing gives K * log2(2)
    K = 3
    cfg = NetworkConfig.single_cell(K, K, float(K))
    ch = ChannelSet(np.eye(K)[None].astype(complex))
    zf = zero_forcing(cfg, ch)
    errs["zf_orthogonal"] = abs(weighted_sum_rate(cfg, ch, zf) - K)
    ok = all(e <= 1e-3 for e in errs.values())
    return ok, ", ".join(f"{k} err = {v:.1e}" for k, v in errs.items())


def _suite_zf_nulling():
    worst = 0.0
    for trial in range(20):
        cfg = NetworkConfig.single_cell(6, 4, 100.0)
        ch = generate_rayleigh_channels(cfg, rng_stream(SEED, trial, 7))
        w = zero_forcing(cfg, ch).w
        g = ch.h[0] @ w.T
        worst = max(worst, float(np.max(np.abs(g - np.diag(np.diag(g))))))
    return worst <= 1e-8, f"largest leaked amplitude = {worst:.2e}"


SUITES: dict[str, Callable[[], tuple[bool, str]]] = {
    "amgm": _suite_amgm,
    "linearization": _suite_linearization,
    "cone": _suite_cone,
    "monotonicity": _suite_monotonicity,
    "wmmse": _suite_wmmse,
    "oracle": _suite_oracle,
    "zf-nulling": _suite_zf_nulling,
}


def run_suites(name_filter: str | None = None) -> list[SuiteResult]:
    """Run every suite whose name contains ``name_filter`` (all when ``None``)."""
    out = []
    for name, fn in SUITES.items():
        if name_filter and name_filter not in name:
            continue
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as err:
            ok, detail = False, f"raised {type(err).__name__}: {err}"
        out.append(SuiteResult(name, bool(ok), detail, time.perf_counter() - t0))
    return out
