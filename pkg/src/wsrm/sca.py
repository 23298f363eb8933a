"""Successive convex approximation for weighted sum-rate maximization.

Every outer iteration solves one SOCP in which

* ``sqrt(x_k) * beta_k`` is replaced by the convex bound
  ``G = phi_k/2 * beta_k**2 + x_k / (2 phi_k)`` (tight at ``phi_k = sqrt(x_k)/beta_k``),
* ``t_k ** (1/alpha_k)`` (concave for ``alpha_k > 1``) is replaced by its
  tangent line at the previous ``t_k``,
* the product of the ``t_k`` is maximized through a geometric-mean tree.

Real embedding of the subproblem: variables are ordered
``Re(w_0) .. Re(w_{K-1})``, ``Im(w_0) .. Im(w_{K-1})`` (``N`` entries each),
then ``t``, ``x``, ``beta`` (``K`` each), then the tree variables. The
program works with ``t_k / t_ref_k`` instead of ``t_k`` so all epigraph
variables stay near one.
"""
from __future__ import annotations

import enum
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .conic import (Affine, ConeProgram, ConeSolution, SolverOptions, Status,
                    add_geometric_mean_tree, solve)
from .network import (BeamformerSet, ChannelSet, NetworkConfig, as_generator,
                      link_gains, sinr_all, weighted_sum_rate)

__all__ = [
    "WeightScaleMode", "InitMode", "ScaConfig", "ScaState", "ScaResult",
    "ScaSolverError", "VarMap", "scale_weights", "exact_weight_grid",
    "amgm_overestimate", "linearize_power", "initial_state",
    "state_from_beams", "build_iteration_socp", "update_state", "run",
    "run_exact_variant", "kkt_residual", "carryover_point",
]

log = logging.getLogger(__name__)

WEIGHT_MARGIN = 1.01
EXACT_MAX_DENOM_EXP = 4
EXACT_MAX_NUMERATOR = 64


class WeightScaleMode(str, enum.Enum):
    SCALE_ABOVE_1 = "ScaleAbove1"
    RAW = "Raw"


class InitMode(str, enum.Enum):
    RANDOM_FEASIBLE = "RandomFeasible"
    MRT_START = "MrtStart"


@dataclass
class ScaConfig:
    stop_tol: float = 1e-2
    max_outer_iters: int = 50
    weight_scale_mode: WeightScaleMode = WeightScaleMode.SCALE_ABOVE_1
    init_mode: InitMode = InitMode.MRT_START
    scale_factor: float | None = None
    phi_min: float = 1e-6
    phi_max: float = 1e6
    beta_floor: float = 1e-12
    accept_tol: float = 1e-6
    solver: SolverOptions = field(default_factory=SolverOptions)
    debug: bool = False
    dump_dir: str | None = None

    def __post_init__(self):
        if not self.stop_tol > 0:
            raise ValueError("stop_tol must be > 0")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        self.weight_scale_mode = WeightScaleMode(self.weight_scale_mode)
        self.init_mode = InitMode(self.init_mode)
        if self.scale_factor is not None and not self.scale_factor > 0:
            raise ValueError("scale_factor must be > 0")


@dataclass
class ScaState:
    t: np.ndarray
    beta: np.ndarray
    x: np.ndarray
    phi: np.ndarray
    beams: BeamformerSet
    iter: int = 0
    objective_trace: list = field(default_factory=list)


class ScaSolverError(RuntimeError):
    """The per-iteration SOCP could not be solved."""

    def __init__(self, iteration: int, solution: ConeSolution):
        self.iteration = iteration
        self.solution = solution
        super().__init__(f"SOCP at outer iteration {iteration} ended with status "
                         f"{solution.status.value} (residuals {solution.kkt_residuals})")


@dataclass
class ScaResult:
    beams: BeamformerSet
    trace: list
    iterations: int
    converged: bool
    kkt_residual: float | None
    state: ScaState
    seconds_per_iter: list = field(default_factory=list)
    carryover_violations: list = field(default_factory=list)
    last_solution: ConeSolution | None = None
    last_varmap: "VarMap | None" = None
    scaled_weights: np.ndarray | None = None

    def to_json(self) -> dict:
        return {
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "trace": [float(v) for v in self.trace],
            "beams": self.beams.to_json(),
            "kkt_residual": None if self.kkt_residual is None else float(self.kkt_residual),
        }


# ---------------------------------------------------------------------------
# scalar building blocks
# ---------------------------------------------------------------------------

def scale_weights(weights: Sequence[float]) -> np.ndarray:
    """Rescale so the smallest weight is 1.01; ratios are unchanged."""
    a = np.asarray(weights, dtype=float)
    if np.any(a <= 0):
        raise ValueError("weights must be > 0")
    return a * (WEIGHT_MARGIN / a.min())


def amgm_overestimate(x, beta, phi):
    return 0.5 * phi * beta ** 2 + x / (2.0 * phi)


def linearize_power(t_ref: float, alpha: float) -> tuple[float, float]:
    """Tangent of ``t ** (1/alpha)`` at ``t_ref`` as ``(slope, intercept)``.

    For ``alpha > 1`` the power is concave, so the tangent lies above it.
    """
    if not alpha > 1:
        raise ValueError("linearization needs alpha > 1; use run_exact_variant for alpha <= 1")
    if not t_ref > 0:
        raise ValueError("t_ref must be > 0")
    r = 1.0 / alpha
    base = t_ref ** r
    slope = r * base / t_ref
    return slope, base - slope * t_ref


def exact_weight_grid(weights: Sequence[float]) -> tuple[np.ndarray, list[Fraction]]:
    """Scale weights for the exact variant and return ``1/alpha_k`` as fractions.

    Weights are scaled so the largest equals one; every ``1/alpha_k`` must
    then be ``m / 2**p`` with ``p <= 4`` and ``m <= 64``. Anything else is
    rejected with a :class:`ValueError`.
    """
    a = np.asarray(weights, dtype=float)
    if np.any(a <= 0):
        raise ValueError("weights must be > 0")
    a = a / a.max()
    fracs = []
    for k, ak in enumerate(a):
        inv = 1.0 / ak
        for p in range(EXACT_MAX_DENOM_EXP + 1):
            m = round(inv * 2 ** p)
            if abs(m - inv * 2 ** p) <= 1e-9 * max(1.0, inv * 2 ** p):
                break
        else:
            raise ValueError(f"weight {weights[k]!r}: 1/alpha = {inv:.6g} is not a dyadic "
                             f"rational m/2^p with p <= {EXACT_MAX_DENOM_EXP}")
        if m > EXACT_MAX_NUMERATOR:
            raise ValueError(f"weight {weights[k]!r}: 1/alpha = {m}/2^{p} needs more than "
                             f"{EXACT_MAX_NUMERATOR} tree leaves")
        fracs.append(Fraction(m, 2 ** p))
    return a, fracs


# ---------------------------------------------------------------------------
# state handling
# ---------------------------------------------------------------------------

def _clamp_phi(x, beta, cfg: ScaConfig):
    phi = np.empty_like(x)
    for k in range(x.size):
        if beta[k] <= cfg.beta_floor:
            phi[k] = cfg.phi_max
        elif x[k] <= 0:
            phi[k] = cfg.phi_min
        else:
            phi[k] = min(max(math.sqrt(x[k]) / beta[k], cfg.phi_min), cfg.phi_max)
    return phi


def _interference_norm(config, channels, beams):
    p = np.abs(link_gains(config, channels, beams)) ** 2
    return np.sqrt(config.noise_var + p.sum(axis=1) - np.diag(p))


def state_from_beams(config: NetworkConfig, channels: ChannelSet, beams: BeamformerSet,
                     alpha: np.ndarray, cfg: ScaConfig | None = None) -> ScaState:
    """SCA state whose first subproblem has ``beams`` as a tight feasible point.

    Each beam is rotated so that its own received amplitude is real and
    nonnegative, then ``x = SINR``, ``beta`` = interference-plus-noise
    amplitude, ``t = (1 + SINR) ** alpha`` and ``phi = sqrt(x)/beta``.
    """
    cfg = cfg or ScaConfig()
    direct = np.einsum("kn,kn->k", channels.direct(config), beams.w)
    rot = np.where(np.abs(direct) > 0, np.conj(direct) / np.maximum(np.abs(direct), 1e-300), 1.0)
    beams = BeamformerSet(beams.w * rot[:, None])
    gamma = sinr_all(config, channels, beams)
    beta = _interference_norm(config, channels, beams)
    x = gamma
    t = np.maximum((1.0 + gamma) ** alpha, 1e-300)
    phi = _clamp_phi(x, beta, cfg)
    return ScaState(t=t, beta=beta, x=x, phi=phi, beams=beams, iter=0,
                    objective_trace=[weighted_sum_rate(config, channels, beams)])


def mrt_beams(config: NetworkConfig, channels: ChannelSet) -> BeamformerSet:
    """Maximum-ratio beams with each BS budget split equally over its users."""
    hd = channels.direct(config)
    w = np.zeros_like(hd)
    for b in range(config.num_bs):
        users = config.users_of(b)
        if not users:
            continue
        amp = math.sqrt(config.power_budget[b] / len(users))
        for k in users:
            nrm = np.linalg.norm(hd[k])
            w[k] = amp * np.conj(hd[k]) / nrm if nrm > 0 else 0.0
    return BeamformerSet(w)


def random_beams(config: NetworkConfig, rng: np.random.Generator) -> BeamformerSet:
    """Random CN directions with a random full-power split per BS."""
    K, N = config.num_users, config.num_antennas
    w = (rng.standard_normal((K, N)) + 1j * rng.standard_normal((K, N))) / math.sqrt(2.0)
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    for b in range(config.num_bs):
        users = config.users_of(b)
        if not users:
            continue
        share = rng.dirichlet(np.ones(len(users)))
        w[users] *= np.sqrt(share * config.power_budget[b])[:, None]
    return BeamformerSet(w)


def initial_state(config, channels, alpha, cfg: ScaConfig, seed=None) -> ScaState:
    if cfg.init_mode is InitMode.MRT_START:
        beams = mrt_beams(config, channels)
    else:
        beams = random_beams(config, as_generator(0 if seed is None else seed))
    return state_from_beams(config, channels, beams, alpha, cfg)


# ---------------------------------------------------------------------------
# subproblem
# ---------------------------------------------------------------------------

@dataclass
class VarMap:
    w_re: np.ndarray  # (K, N) variable indices
    w_im: np.ndarray
    t: np.ndarray  # indices of t_k / t_scale_k
    x: np.ndarray
    beta: np.ndarray
    t_scale: np.ndarray
    root: object
    tree_depth: int
    amgm_cones: list
    interference_cones: list
    power_cones: list
    rate_cones: list  # linearized or exact rate constraints (one per user)
    tree_cones: list  # every hyperbolic cone, in creation order
    im_equalities: list

    def beams(self, y: np.ndarray) -> BeamformerSet:
        return BeamformerSet(y[self.w_re] + 1j * y[self.w_im])


def _hw_affine(h: np.ndarray, re_idx, im_idx):
    """Real and imaginary parts of ``h @ w`` as affine forms."""
    a, b = h.real, h.imag
    idx = np.concatenate([re_idx, im_idx])
    re = Affine(idx, np.concatenate([a, -b]))
    im = Affine(idx, np.concatenate([b, a]))
    return re, im


def build_iteration_socp(config: NetworkConfig, channels: ChannelSet, state: ScaState,
                         alpha: np.ndarray, exact: Sequence[Fraction] | None = None):
    """Assemble the convex subproblem around ``state``.

    With ``exact`` (one ``1/alpha_k`` fraction per user) the rate constraint
    ``t ** (1/alpha) <= x + 1`` is represented exactly by a geometric-mean
    tower instead of the tangent line.
    Returns ``(program, varmap)``.
    """
    K, N, B = config.num_users, config.num_antennas, config.num_bs
    prog = ConeProgram()
    w_re = prog.add_vars(K * N, "w_re").reshape(K, N)
    w_im = prog.add_vars(K * N, "w_im").reshape(K, N)
    t = prog.add_vars(K, "t")
    x = prog.add_vars(K, "x")
    beta = prog.add_vars(K, "beta")
    t_scale = np.asarray(state.t, dtype=float).copy()

    amgm_cones, interference_cones, power_cones, rate_cones, im_eqs = [], [], [], [], []
    sigma = math.sqrt(config.noise_var)
    for k in range(K):
        bk = config.assignment[k]
        re, im = _hw_affine(channels.h[bk, k], w_re[k], w_im[k])
        im_eqs.append(prog.add_equality(im, 0.0))
        phi = float(state.phi[k])
        lhs = re - Affine.var(x[k], 1.0 / (2.0 * phi))
        amgm_cones.append(prog.add_soc(
            [0.5 * (lhs - Affine.constant(1.0)), Affine.var(beta[k], math.sqrt(phi / 2.0))],
            0.5 * (lhs + Affine.constant(1.0))))
        prog.add_nonneg(x[k])
        rows = [Affine.constant(sigma)]
        for i in range(K):
            if i == k:
                continue
            ire, iim = _hw_affine(channels.h[config.assignment[i], k], w_re[i], w_im[i])
            rows += [ire, iim]
        interference_cones.append(prog.add_soc(rows, beta[k]))

    for b in range(B):
        users = config.users_of(b)
        if not users:
            continue
        rows = [int(i) for k in users for i in np.concatenate([w_re[k], w_im[k]])]
        power_cones.append(prog.add_soc(rows, Affine.constant(math.sqrt(config.power_budget[b]))))

    tree_start = prog.num_cones
    root = add_geometric_mean_tree(prog, [int(i) for i in t], name="z")
    depth = (K - 1).bit_length()
    prog.set_objective(root)

    for k in range(K):
        tk = Affine.var(t[k], t_scale[k])  # actual t_k
        s = Affine.var(x[k]) + Affine.constant(1.0)
        if exact is None:
            slope, intercept = linearize_power(t_scale[k], float(alpha[k]))
            rate_cones.append(prog.add_le(slope * tk + Affine.constant(intercept), s))
        else:
            r = Fraction(exact[k])
            if r == 1:
                rate_cones.append(prog.add_le(tk, s))
                continue
            m, den = r.numerator, r.denominator
            leaves_n = 1 << (m - 1).bit_length()
            leaves = [s] * den + [tk] * (leaves_n - m) + [Affine.constant(1.0)] * (m - den)
            tower_root = add_geometric_mean_tree(prog, leaves, name=f"tower{k}_")
            rate_cones.append(prog.add_le(tk, tower_root if isinstance(tower_root, Affine)
                                          else Affine.var(tower_root)))
    tree_cones = [j for j in range(tree_start, prog.num_cones) if prog.cone_dims()[j] == 3
                  and j not in rate_cones]
    vm = VarMap(w_re, w_im, t, x, beta, t_scale, root, depth, amgm_cones,
                interference_cones, power_cones, rate_cones, tree_cones, im_eqs)
    return prog, vm


def carryover_point(prog: ConeProgram, vm: VarMap, state: ScaState) -> np.ndarray:
    """Point of ``prog`` built from ``state`` (the previous optimum).

    Tree variables are filled bottom-up with the geometric mean of their
    children so the point is feasible whenever the state is.
    """
    y = np.zeros(prog.num_vars)
    y[vm.w_re] = state.beams.w.real
    y[vm.w_im] = state.beams.w.imag
    y[vm.t] = state.t / vm.t_scale
    y[vm.x] = state.x
    y[vm.beta] = state.beta
    for j in vm.tree_cones:
        rows = prog.cone_rows(j)
        uv_sum, uv_diff = rows[0].value(y), rows[2].value(y)
        u, v = 0.5 * (uv_sum + uv_diff), 0.5 * (uv_sum - uv_diff)
        zi = int(rows[1].idx[0])
        y[zi] = math.sqrt(max(u, 0.0) * max(v, 0.0))
    return y


def update_state(config: NetworkConfig, channels: ChannelSet, solution: ConeSolution,
                 vm: VarMap, state: ScaState, cfg: ScaConfig | None = None) -> ScaState:
    """Take ``(t, beta, x)`` from the subproblem optimum and refresh ``phi``."""
    cfg = cfg or ScaConfig()
    y = solution.primal
    t = np.maximum(y[vm.t] * vm.t_scale, 1e-300)
    x = np.maximum(y[vm.x], 0.0)
    beta = y[vm.beta].copy()
    beams = vm.beams(y)
    phi = _clamp_phi(x, beta, cfg)
    trace = list(state.objective_trace) + [weighted_sum_rate(config, channels, beams)]
    return ScaState(t=t, beta=beta, x=x, phi=phi, beams=beams, iter=state.iter + 1,
                    objective_trace=trace)


# ---------------------------------------------------------------------------
# outer loop
# ---------------------------------------------------------------------------

def _check_inputs(config, channels):
    channels.check(config)
    if any(p <= 0 for p in config.power_budget):
        raise ValueError("SCA needs strictly positive power budgets")


def _worst(sol: ConeSolution) -> float:
    r = sol.kkt_residuals
    return max(r.primal_res, r.dual_res, r.gap)


def _solve_checked(prog, cfg: ScaConfig, n: int) -> ConeSolution:
    sol = solve(prog, cfg.solver)
    if sol.status is Status.OPTIMAL:
        return sol
    # badly scaled subproblems (a user close to switched off) can stall the
    # equilibrated solve; one retry with the other scaling usually recovers
    retry = solve(prog, replace(cfg.solver, equilibrate=not cfg.solver.equilibrate))
    log.debug("SOCP at iteration %d ended %s (%s); retry ended %s (%s)", n, sol.status.value,
              sol.kkt_residuals, retry.status.value, retry.kkt_residuals)
    if retry.status is Status.OPTIMAL:
        return retry
    candidates = [s for s in (sol, retry)
                  if s.status in (Status.MAX_ITERATIONS, Status.NUMERICAL_FAILURE)]
    if candidates:
        best = min(candidates, key=_worst)
        if _worst(best) <= cfg.accept_tol:
            log.debug("accepting inaccurate SOCP solution at iteration %d: %s", n,
                      best.kkt_residuals)
            return best
    raise ScaSolverError(n, sol)


def _run(config, channels, cfg: ScaConfig, seed, alpha, exact) -> ScaResult:
    _check_inputs(config, channels)
    state = initial_state(config, channels, alpha, cfg, seed)
    converged = False
    timings, violations = [], []
    sol = vm = None
    dump = Path(cfg.dump_dir) if cfg.dump_dir else None
    if dump:
        dump.mkdir(parents=True, exist_ok=True)
    for n in range(cfg.max_outer_iters):
        prog, vm_new = build_iteration_socp(config, channels, state, alpha, exact)
        if cfg.debug:
            viol = prog.max_violation(carryover_point(prog, vm_new, state))
            violations.append(viol)
            if viol > 1e-6 * max(1.0, float(np.max(np.abs(state.x)))):
                log.warning("carryover point violates iteration %d subproblem by %.3g", n, viol)
        if dump:
            (dump / f"iter{n:03d}.txt").write_text(prog.to_text())
        t0 = time.perf_counter()
        sol = _solve_checked(prog, cfg, n)
        timings.append(time.perf_counter() - t0)
        vm = vm_new
        state = update_state(config, channels, sol, vm, state, cfg)
        tr = state.objective_trace
        if abs(tr[-1] - tr[-2]) < cfg.stop_tol:
            converged = True
            break
    result = ScaResult(beams=state.beams, trace=list(state.objective_trace),
                       iterations=state.iter, converged=converged, kkt_residual=None,
                       state=state, seconds_per_iter=timings,
                       carryover_violations=violations, last_solution=sol,
                       last_varmap=vm, scaled_weights=np.asarray(alpha))
    result.kkt_residual = kkt_residual(config, channels, result)
    return result


def run(config: NetworkConfig, channels: ChannelSet, sca_config: ScaConfig | None = None,
        seed=None) -> ScaResult:
    """Run the SCA loop until the weighted sum rate changes by less than ``stop_tol``.

    ``seed`` only matters for random initialization.
    """
    cfg = sca_config or ScaConfig()
    if cfg.weight_scale_mode is WeightScaleMode.SCALE_ABOVE_1:
        alpha = scale_weights(config.weights)
        if cfg.scale_factor is not None:
            alpha = np.asarray(config.weights) * cfg.scale_factor
            if np.any(alpha <= 1):
                raise ValueError("scale_factor leaves some weight <= 1")
    else:
        alpha = np.asarray(config.weights, dtype=float)
        if np.any(alpha <= 1):
            raise ValueError("Raw weight mode needs every weight > 1")
    return _run(config, channels, cfg, seed, alpha, None)


def run_exact_variant(config: NetworkConfig, channels: ChannelSet,
                      sca_config: ScaConfig | None = None, seed=None) -> ScaResult:
    """SCA with the rate constraint represented exactly (no tangent line).

    Weights are scaled so the largest is one and every ``1/alpha_k`` must be
    a dyadic rational (see :func:`exact_weight_grid`).
    """
    cfg = sca_config or ScaConfig()
    alpha, fracs = exact_weight_grid(config.weights)
    return _run(config, channels, cfg, seed, alpha, fracs)


# ---------------------------------------------------------------------------
# certification
# ---------------------------------------------------------------------------

def wsr_gradient(config: NetworkConfig, channels: ChannelSet, beams: BeamformerSet,
                 weights: Sequence[float] | None = None) -> np.ndarray:
    """``dWSR / d conj(w)`` as a complex ``(K, N)`` array.

    The real gradient with respect to ``(Re w, Im w)`` is twice the real and
    imaginary parts of this array.
    """
    alpha = np.asarray(config.weights if weights is None else weights, dtype=float)
    g = link_gains(config, channels, beams)  # g[k, i]
    p = np.abs(g) ** 2
    total = config.noise_var + p.sum(axis=1)
    interf = total - np.diag(p)
    K = config.num_users
    coef = (alpha / total)[:, None] - np.where(np.eye(K, dtype=bool), 0.0, (alpha / interf)[:, None])
    coef = coef * g  # [k, i]
    hb = channels.h[list(config.assignment)]  # [i, k, N]
    grad = np.einsum("ki,ikn->in", coef, np.conj(hb))
    return grad / math.log(2.0)


def kkt_residual(config: NetworkConfig, channels: ChannelSet, result) -> float:
    """Max-norm KKT residual of the weighted sum-rate problem at ``result.beams``.

    For fixed beams the best per-BS power multiplier is the least-squares fit
    ``mu_b = max(0, Re<w_b, g_b>) / ||w_b||^2`` of the stationarity condition
    ``g_b = mu_b w_b``. Stationarity is measured relative to
    ``max(1, ||grad||_inf)``; primal feasibility and complementarity relative
    to ``max(1, P_b)``. Accepts anything with a ``beams`` attribute or a
    :class:`BeamformerSet`.
    """
    beams = result if isinstance(result, BeamformerSet) else result.beams
    grad = wsr_gradient(config, channels, beams)
    res = grad.copy()
    worst_other = 0.0
    for b in range(config.num_bs):
        users = config.users_of(b)
        if not users:
            continue
        w = beams.w[users]
        pw = float(np.sum(np.abs(w) ** 2))
        mu = max(0.0, float(np.real(np.vdot(w, grad[users]))) / pw) if pw > 0 else 0.0
        res[users] -= mu * w
        scale = max(1.0, config.power_budget[b])
        worst_other = max(worst_other, max(0.0, pw - config.power_budget[b]) / scale,
                          abs(mu * (config.power_budget[b] - pw)) / scale)
    stat = float(np.max(np.abs(res.view(float))) / max(1.0, np.max(np.abs(grad.view(float)))))
    return max(stat, worst_other)


def result_to_json(result: ScaResult) -> str:
    return json.dumps(result.to_json(), indent=2, sort_keys=True)
