"""Multicell MISO downlink model: topology, channels, beamformers and the
rate/power figures every algorithm is scored against.

Array conventions
-----------------
* channels ``h`` have shape ``(B, K, N)``; ``h[b, k]`` is the row vector from
  BS ``b`` to user ``k``.
* beamformers ``w`` have shape ``(K, N)``; ``w[k]`` is transmitted by the
  serving BS of user ``k``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "NetworkConfig",
    "ChannelSet",
    "BeamformerSet",
    "rng_stream",
    "as_generator",
    "generate_rayleigh_channels",
    "link_gains",
    "sinr",
    "sinr_all",
    "weighted_sum_rate",
    "per_bs_power",
    "is_power_feasible",
    "db_to_linear",
]


def db_to_linear(value_db):
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)


@dataclass(frozen=True)
class NetworkConfig:
    """Topology and budgets of a coordinated multicell downlink.

    ``assignment[k]`` is the serving BS of user ``k``. Power budgets are in
    linear scale; ``noise_var`` is the receiver noise variance.
    """

    num_bs: int
    num_antennas: int
    num_users: int
    assignment: tuple[int, ...]
    power_budget: tuple[float, ...]
    noise_var: float = 1.0
    weights: tuple[float, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(b) for b in self.assignment))
        object.__setattr__(self, "power_budget", tuple(float(p) for p in self.power_budget))
        if not self.weights:
            object.__setattr__(self, "weights", (1.0,) * self.num_users)
        object.__setattr__(self, "weights", tuple(float(a) for a in self.weights))
        if self.num_bs < 1 or self.num_antennas < 1 or self.num_users < 1:
            raise ValueError("num_bs, num_antennas and num_users must be positive")
        if len(self.assignment) != self.num_users:
            raise ValueError("assignment must list one serving BS per user")
        if any(b < 0 or b >= self.num_bs for b in self.assignment):
            raise ValueError("assignment refers to a BS index outside [0, num_bs)")
        if len(self.power_budget) != self.num_bs:
            raise ValueError("power_budget must have one entry per BS")
        if any(not np.isfinite(p) or p < 0 for p in self.power_budget):
            raise ValueError("power budgets must be finite and >= 0")
        if not (np.isfinite(self.noise_var) and self.noise_var > 0):
            raise ValueError("noise_var must be > 0")
        if len(self.weights) != self.num_users:
            raise ValueError("weights must have one entry per user")
        if any(not np.isfinite(a) or a <= 0 for a in self.weights):
            raise ValueError("weights must be > 0")

    @classmethod
    def single_cell(cls, num_antennas: int, num_users: int, power: float,
                    noise_var: float = 1.0, weights: Sequence[float] = ()):
        return cls(1, num_antennas, num_users, (0,) * num_users, (power,),
                   noise_var, tuple(weights))

    @classmethod
    def multicell(cls, num_bs: int, num_antennas: int, users_per_bs: int,
                  power: float | Sequence[float], noise_var: float = 1.0,
                  weights: Sequence[float] = ()):
        """Users ``b*users_per_bs ... (b+1)*users_per_bs - 1`` are served by BS ``b``."""
        if np.isscalar(power):
            power = (float(power),) * num_bs
        assignment = tuple(b for b in range(num_bs) for _ in range(users_per_bs))
        return cls(num_bs, num_antennas, num_bs * users_per_bs, assignment,
                   tuple(power), noise_var, tuple(weights))

    def with_power(self, power: float | Sequence[float]) -> "NetworkConfig":
        if np.isscalar(power):
            power = (float(power),) * self.num_bs
        return NetworkConfig(self.num_bs, self.num_antennas, self.num_users,
                             self.assignment, tuple(power), self.noise_var,
                             self.weights)

    def with_weights(self, weights: Sequence[float]) -> "NetworkConfig":
        return NetworkConfig(self.num_bs, self.num_antennas, self.num_users,
                             self.assignment, self.power_budget, self.noise_var,
                             tuple(weights))

    def users_of(self, b: int) -> list[int]:
        return [k for k, bk in enumerate(self.assignment) if bk == b]

    def to_dict(self) -> dict:
        return {
            "num_bs": self.num_bs,
            "num_antennas": self.num_antennas,
            "num_users": self.num_users,
            "assignment": list(self.assignment),
            "power_budget": list(self.power_budget),
            "noise_var": self.noise_var,
            "weights": list(self.weights),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(int(d["num_bs"]), int(d["num_antennas"]), int(d["num_users"]),
                   tuple(d["assignment"]), tuple(d["power_budget"]),
                   float(d.get("noise_var", 1.0)), tuple(d.get("weights", ())))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def _complex_to_pairs(a: np.ndarray):
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _pairs_to_complex(data, name: str) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] != 2:
        raise ValueError(f"field '{name}' must hold [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """Complex channel rows ``h[b, k]`` of shape ``(B, K, N)``."""

    h: np.ndarray

    def __post_init__(self):
        h = _frozen(self.h)
        if h.ndim != 3:
            raise ValueError("channel array must have shape (B, K, N)")
        if not np.all(np.isfinite(h)):
            raise ValueError("channel entries must be finite")
        object.__setattr__(self, "h", h)

    def check(self, config: NetworkConfig) -> None:
        expected = (config.num_bs, config.num_users, config.num_antennas)
        if self.h.shape != expected:
            raise ValueError(f"channel shape {self.h.shape} does not match config {expected}")

    def direct(self, config: NetworkConfig) -> np.ndarray:
        """Rows ``h[b_k, k]`` of every user's serving link, shape ``(K, N)``."""
        return self.h[list(config.assignment), np.arange(config.num_users)]

    def to_json(self) -> dict:
        B, K, N = self.h.shape
        return {"kind": "channels", "num_bs": B, "num_users": K,
                "num_antennas": N, "h": _complex_to_pairs(self.h)}

    @classmethod
    def from_json(cls, d: dict) -> "ChannelSet":
        if d.get("kind") != "channels":
            raise ValueError("field 'kind' must be 'channels'")
        if "h" not in d:
            raise ValueError("missing field 'h'")
        h = _pairs_to_complex(d["h"], "h")
        shape = (d.get("num_bs"), d.get("num_users"), d.get("num_antennas"))
        if h.shape != shape:
            raise ValueError(f"field 'h' has shape {h.shape}, header says {shape}")
        return cls(h)


@dataclass(frozen=True, eq=False)
class BeamformerSet:
    """Complex beamformers ``w[k]`` of shape ``(K, N)``."""

    w: np.ndarray

    def __post_init__(self):
        w = _frozen(self.w)
        if w.ndim != 2:
            raise ValueError("beamformer array must have shape (K, N)")
        if not np.all(np.isfinite(w)):
            raise ValueError("beamformer entries must be finite")
        object.__setattr__(self, "w", w)

    @classmethod
    def zeros(cls, config: NetworkConfig) -> "BeamformerSet":
        return cls(np.zeros((config.num_users, config.num_antennas), complex))

    def to_json(self) -> dict:
        K, N = self.w.shape
        return {"kind": "beams", "num_users": K, "num_antennas": N,
                "w": _complex_to_pairs(self.w)}

    @classmethod
    def from_json(cls, d: dict) -> "BeamformerSet":
        if d.get("kind") != "beams":
            raise ValueError("field 'kind' must be 'beams'")
        if "w" not in d:
            raise ValueError("missing field 'w'")
        return cls(_pairs_to_complex(d["w"], "w"))


def rng_stream(master_seed: int, trial: int = 0, entity: int = 0) -> np.random.Generator:
    """Independent PCG64 substream for one ``(trial, entity)`` pair.

    Streams are keyed with ``SeedSequence(master_seed, spawn_key=(trial, entity))``
    so every consumer draws from its own reproducible, platform-independent
    sequence no matter in which order trials are executed.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(trial), int(entity)))
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(int(seed)))


def generate_rayleigh_channels(config: NetworkConfig, seed) -> ChannelSet:
    """i.i.d. CN(0, 1) entries for every (BS, user, antenna) triple."""
    rng = as_generator(seed)
    shape = (config.num_bs, config.num_users, config.num_antennas)
    h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return ChannelSet(h)


def link_gains(config: NetworkConfig, channels: ChannelSet, beams: BeamformerSet) -> np.ndarray:
    """``g[k, i] = h[b_i, k] @ w[i]`` (complex), the contribution of stream ``i`` at user ``k``."""
    h = channels.h[list(config.assignment)]  # (i, k, N): channel of i's BS to every user k
    return np.einsum("ikn,in->ki", h, beams.w)


def sinr_all(config: NetworkConfig, channels: ChannelSet, beams: BeamformerSet) -> np.ndarray:
    p = np.abs(link_gains(config, channels, beams)) ** 2
    signal = np.diag(p).copy()
    interference = p.sum(axis=1) - signal
    return signal / (config.noise_var + interference)


def sinr(config: NetworkConfig, channels: ChannelSet, beams: BeamformerSet, k: int) -> float:
    if not 0 <= k < config.num_users:
        raise IndexError(f"user index {k} out of range")
    return float(sinr_all(config, channels, beams)[k])


def weighted_sum_rate(config: NetworkConfig, channels: ChannelSet, beams: BeamformerSet,
                      weights: Sequence[float] | None = None) -> float:
    """Weighted sum rate in bits/s/Hz; ``weights`` defaults to ``config.weights``."""
    alpha = np.asarray(config.weights if weights is None else weights, dtype=float)
    return float(alpha @ np.log2(1.0 + sinr_all(config, channels, beams)))


def per_bs_power(config: NetworkConfig, beams: BeamformerSet, b: int) -> float:
    if not 0 <= b < config.num_bs:
        raise IndexError(f"BS index {b} out of range")
    users = config.users_of(b)
    return float(np.sum(np.abs(beams.w[users]) ** 2))


def is_power_feasible(config: NetworkConfig, beams: BeamformerSet, tol: float = 0.0) -> bool:
    if tol < 0:
        raise ValueError("tol must be >= 0")
    return all(per_bs_power(config, beams, b) <= config.power_budget[b] + tol
               for b in range(config.num_bs))
