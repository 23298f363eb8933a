"""Reference beamformers: zero-forcing with water-filling, and WMMSE.

WMMSE derivation used here (single-antenna receivers)
-----------------------------------------------------
User ``k`` applies a scalar receiver ``u_k`` to ``y_k = sum_i h[b_i,k] w_i s_i + n_k``.
With ``T_k = sum_i |h[b_i,k] w_i|^2 + sigma^2`` one round is

* ``u_k = h[b_k,k] w_k / T_k``  (MMSE receiver)
* ``v_k = 1 / e_k = 1 + gamma_k``  (inverse of the resulting MSE)
* ``w_k = alpha_k v_k u_k (A_b + mu_b I)^{-1} h[b,k]^H`` with
  ``A_b = sum_j alpha_j v_j |u_j|^2 h[b,j]^H h[b,j]`` for ``b = b_k``,

where ``mu_b >= 0`` is the smallest multiplier meeting BS ``b``'s budget.
Each step is a block maximization of a function that coincides with
``ln 2`` times the weighted sum rate after the ``u``/``v`` steps, so the rate
never decreases.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .network import (BeamformerSet, ChannelSet, NetworkConfig, as_generator,
                      sinr_all, weighted_sum_rate)
from .sca import mrt_beams, random_beams

__all__ = ["zero_forcing", "water_filling", "wmmse", "WmmseState", "WmmseResult"]

BISECTION_TOL = 1e-10


def water_filling(gains: np.ndarray, total_power: float, noise_var: float = 1.0,
                  weights: np.ndarray | None = None) -> np.ndarray:
    """Weighted water-filling ``p_k = max(0, alpha_k * level - noise/g_k)``.

    Maximizes ``sum alpha_k log(1 + g_k p_k / noise)`` under ``sum p_k <= total_power``.
    """
    g = np.asarray(gains, dtype=float)
    a = np.ones_like(g) if weights is None else np.asarray(weights, dtype=float)
    if total_power <= 0:
        return np.zeros_like(g)
    floor = noise_var / g
    # active set shrinks from the weakest channel until every power is positive
    order = np.argsort(floor / a)
    for m in range(g.size, 0, -1):
        act = order[:m]
        level = (total_power + floor[act].sum()) / a[act].sum()
        p = a[act] * level - floor[act]
        if np.all(p > 0):
            out = np.zeros_like(g)
            out[act] = p
            return out
    raise AssertionError("water-filling found no active set")  # pragma: no cover


def zero_forcing(config: NetworkConfig, channels: ChannelSet) -> BeamformerSet:
    """Zero-forcing directions from the pseudo-inverse plus water-filled powers.

    Only single-cell systems with ``K <= N`` are supported.
    """
    channels.check(config)
    if config.num_bs != 1:
        raise ValueError("zero_forcing supports single-cell systems only (num_bs == 1)")
    K, N = config.num_users, config.num_antennas
    if K > N:
        raise ValueError(f"zero_forcing needs num_users <= num_antennas, got K={K} > N={N}")
    H = channels.h[0]
    sv = np.linalg.svd(H, compute_uv=False)
    if sv[-1] <= 1e-10 * max(1.0, sv[0]):
        raise np.linalg.LinAlgError("channel matrix is rank deficient; zero-forcing is undefined")
    D = np.linalg.pinv(H)  # columns satisfy H @ D = I
    norms = np.linalg.norm(D, axis=0)
    directions = (D / norms).T
    gains = 1.0 / norms ** 2  # |h_k d_k|^2 for the unit-norm direction
    p = water_filling(gains, config.power_budget[0], config.noise_var,
                      np.asarray(config.weights))
    return BeamformerSet(directions * np.sqrt(p)[:, None])


@dataclass
class WmmseState:
    u: np.ndarray
    v: np.ndarray
    beams: BeamformerSet
    trace: list = field(default_factory=list)


@dataclass
class WmmseResult:
    beams: BeamformerSet
    trace: list
    iterations: int
    converged: bool
    state: WmmseState
    seconds_per_iter: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "trace": [float(v) for v in self.trace],
            "beams": self.beams.to_json(),
            "kkt_residual": None,
        }


def _receivers(config, channels, beams):
    hb = channels.h[list(config.assignment)]
    g = np.einsum("ikn,in->ki", hb, beams.w)
    total = np.sum(np.abs(g) ** 2, axis=1) + config.noise_var
    u = np.diag(g) / total
    return u, 1.0 + sinr_all(config, channels, beams)


def _solve_multiplier(lam, rhs_energy, budget):
    """Smallest ``mu >= 0`` with ``sum_n e_n / (lam_n + mu)^2 <= budget``."""
    def power(mu):
        return float(np.sum(rhs_energy / (lam + mu) ** 2))

    if power(0.0) <= budget:
        return 0.0
    lo, hi = 0.0, 1.0
    while power(hi) > budget:
        lo, hi = hi, 2.0 * hi
    while power(lo) - power(hi) > BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if power(mid) > budget:
            lo = mid
        else:
            hi = mid
    return hi


def _transmit_update(config, channels, alpha, u, v):
    K, N = config.num_users, config.num_antennas
    w = np.zeros((K, N), complex)
    c = alpha * v * np.abs(u) ** 2
    for b in range(config.num_bs):
        users = config.users_of(b)
        if not users or config.power_budget[b] <= 0:
            continue
        Hb = channels.h[b]  # (K, N): rows h[b, j] for every user j
        A = (Hb.conj().T * c) @ Hb
        lam, U = np.linalg.eigh(A)
        lam = np.maximum(lam, 0.0)
        rhs = (Hb[users].conj() * (alpha[users] * v[users] * u[users])[:, None]).T  # (N, |U_b|)
        R = U.conj().T @ rhs
        # the right-hand side lies in the range of A; drop round-off in its null space
        null = lam <= 1e-12 * max(lam[-1], 1e-300)
        R[null] = 0.0
        energy = np.sum(np.abs(R) ** 2, axis=1)
        mu = _solve_multiplier(lam[~null], energy[~null], config.power_budget[b])
        scaled = np.zeros_like(R)
        scaled[~null] = R[~null] / (lam[~null] + mu)[:, None]
        w[users] = (U @ scaled).T
    return w


def wmmse(config: NetworkConfig, channels: ChannelSet, stop_tol: float = 1e-2,
          max_iters: int = 1000, seed=None, init: str = "mrt") -> WmmseResult:
    """Weighted-MMSE alternating optimization with per-BS power budgets.

    Stops once the weighted sum rate changes by less than ``stop_tol``.
    ``init`` is ``"mrt"`` (the same start as SCA) or ``"random"`` (drawn
    from ``seed``).
    """
    channels.check(config)
    if not stop_tol > 0:
        raise ValueError("stop_tol must be > 0")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if init == "mrt":
        beams = mrt_beams(config, channels)
    elif init == "random":
        beams = random_beams(config, as_generator(0 if seed is None else seed))
    else:
        raise ValueError(f"unknown init {init!r}; expected 'mrt' or 'random'")
    alpha = np.asarray(config.weights, dtype=float)
    trace = [weighted_sum_rate(config, channels, beams)]
    u = v = None
    converged = False
    it = 0
    timings = []
    for it in range(1, max_iters + 1):
        t0 = time.perf_counter()
        u, v = _receivers(config, channels, beams)
        beams = BeamformerSet(_transmit_update(config, channels, alpha, u, v))
        timings.append(time.perf_counter() - t0)
        trace.append(weighted_sum_rate(config, channels, beams))
        if abs(trace[-1] - trace[-2]) < stop_tol:
            converged = True
            break
    state = WmmseState(u=u, v=v, beams=beams, trace=trace)
    return WmmseResult(beams=beams, trace=trace, iterations=it, converged=converged,
                       state=state, seconds_per_iter=timings)
