"""Stochastic volatility market model, payoffs and path simulation.

The model is

    dS = (mu - r) S dt + sigma(V) S dW1,        S_0 = s0   (discounted asset)
    dV = vol_drift(V) dt + vol_diff(V) dW2,     V_0 = v0

with corr(W1, W2) = rho.  The arctangent preset uses
sigma(y) = (a/pi)(arctan(y - 1) + pi/2) + b and vol_drift = alpha (m - V),
vol_diff = nu sqrt(2 alpha).  Discretization is standard Euler-Maruyama on an
equidistant grid; negative asset values are floored at zero and absorbed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rng
from .errors import DomainError, ParameterError

__all__ = [
    "MarketModel", "TimeGrid", "PathBundle", "Payoff",
    "arctangent_model", "euler_step", "simulate", "payoff_path", "sharpe",
    "write_bundle", "read_bundle",
]


@dataclass(frozen=True)
class MarketModel:
    """Market coefficients plus initial state.

    ``sigma_fn``, ``vol_drift_fn`` and ``vol_diff_fn`` must accept numpy
    arrays.  Rates are per year, sigma per sqrt(year).
    """

    r: float
    mu: float
    sigma_fn: Callable[[np.ndarray], np.ndarray]
    vol_drift_fn: Callable[[np.ndarray], np.ndarray]
    vol_diff_fn: Callable[[np.ndarray], np.ndarray]
    rho: float
    s0: float
    v0: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not abs(self.rho) <= 1.0:
            raise ParameterError(f"|rho| must be <= 1, got {self.rho}")
        if self.s0 < 0:
            raise ParameterError(f"s0 must be nonnegative, got {self.s0}")


def arctangent_model(r: float, mu: float, a: float, b: float, alpha: float,
                     m_level: float, nu: float, rho: float,
                     s0: float, v0: float) -> MarketModel:
    """Arctangent stochastic volatility preset.

    sigma(y) = (a/pi)(arctan(y - 1) + pi/2) + b is bounded in [b, a + b] and
    nondecreasing, so the Sharpe ratio stays below (mu - r)/b.
    """
    if b <= 0:
        raise ParameterError(f"volatility floor b must be > 0, got {b}")
    if a < 0:
        raise ParameterError(f"volatility range a must be >= 0, got {a}")
    if alpha < 0:
        raise ParameterError(f"mean-reversion speed alpha must be >= 0, got {alpha}")

    def sigma_fn(y):
        return (a / np.pi) * (np.arctan(np.asarray(y, dtype=float) - 1.0) + np.pi / 2) + b

    def vol_drift_fn(v):
        return alpha * (m_level - np.asarray(v, dtype=float))

    vol_diff_const = nu * np.sqrt(2.0 * alpha)

    def vol_diff_fn(v):
        return np.full_like(np.asarray(v, dtype=float), vol_diff_const)

    return MarketModel(
        r=r, mu=mu, sigma_fn=sigma_fn, vol_drift_fn=vol_drift_fn,
        vol_diff_fn=vol_diff_fn, rho=rho, s0=s0, v0=v0,
        params={"a": a, "b": b, "alpha": alpha, "m": m_level, "nu": nu},
    )


@dataclass(frozen=True)
class TimeGrid:
    """Equidistant partition of [0, T] into N steps, t_i = i T / N."""

    T: float
    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ParameterError(f"N must be >= 1, got {self.N}")
        if self.T <= 0:
            raise ParameterError(f"T must be > 0, got {self.T}")

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * (self.T / self.N)


@dataclass(frozen=True)
class PathBundle:
    """Simulated paths of (S, V) with their driving Brownian increments.

    Shapes: s, v are (n_paths, N+1); dw1, dw2 are (n_paths, N).  Identical
    (seed, stream_id, grid, n_paths, model) give a bit-identical bundle.
    """

    grid: TimeGrid
    n_paths: int
    s: np.ndarray
    v: np.ndarray
    dw1: np.ndarray
    dw2: np.ndarray
    seed: int
    stream_id: int


def euler_step(model: MarketModel, s, v, dw1, dw2, dt):
    """One Euler-Maruyama step for the (S, V) pair; S is floored at zero.

    Shared by the Monte Carlo engine and the exact tree oracle so both
    propagate states through the identical map.
    """
    s = np.asarray(s, dtype=float)
    v = np.asarray(v, dtype=float)
    s_next = s + (model.mu - model.r) * s * dt + model.sigma_fn(v) * s * dw1
    v_next = v + model.vol_drift_fn(v) * dt + model.vol_diff_fn(v) * dw2
    return np.maximum(s_next, 0.0), v_next


def simulate(model: MarketModel, grid: TimeGrid, n_paths: int,
             seed: int, stream_id: int = 0) -> PathBundle:
    """Simulate ``n_paths`` Euler paths on ``grid``.

    The correlated pair is built as dW2 = rho dW1 + sqrt(1 - rho^2) dWp with
    dW1, dWp independent N(0, dt) drawn from the counter-based generator.
    """
    if n_paths < 1:
        raise DomainError(f"n_paths must be >= 1, got {n_paths}")

    dt = grid.dt
    sqdt = np.sqrt(dt)
    rho = model.rho
    rho_perp = np.sqrt(max(1.0 - rho * rho, 0.0))
    idx = np.arange(n_paths)

    s = np.empty((n_paths, grid.N + 1))
    v = np.empty((n_paths, grid.N + 1))
    dw1 = np.empty((n_paths, grid.N))
    dw2 = np.empty((n_paths, grid.N))
    s[:, 0] = model.s0
    v[:, 0] = model.v0

    for i in range(grid.N):
        z1 = rng.standard_normals(seed, stream_id, idx, i, 0)
        zp = rng.standard_normals(seed, stream_id, idx, i, 1)
        dw1[:, i] = z1 * sqdt
        dw2[:, i] = (rho * z1 + rho_perp * zp) * sqdt
        s[:, i + 1], v[:, i + 1] = euler_step(model, s[:, i], v[:, i],
                                              dw1[:, i], dw2[:, i], dt)

    return PathBundle(grid=grid, n_paths=n_paths, s=s, v=v, dw1=dw1, dw2=dw2,
                      seed=seed, stream_id=stream_id)


@dataclass(frozen=True)
class Payoff:
    """American claim on the discounted asset.

    The put pays zeta_t = (e^{-rt} K - S_t)^+, the call the mirror image;
    ``kind="zero"`` is the null claim and ``kind="custom"`` evaluates
    ``custom_fn(t, s)`` on arrays.  ``rate`` is the discounting rate of the
    strike leg.
    """

    kind: str
    strike: float = 0.0
    rate: float = 0.0
    custom_fn: Callable[[float, np.ndarray], np.ndarray] | None = None

    _KINDS = ("american_put", "american_call", "zero", "custom")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ParameterError(f"unknown payoff kind {self.kind!r}")
        if self.kind == "custom" and self.custom_fn is None:
            raise ParameterError("custom payoff requires custom_fn")

    def value(self, t: float, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind == "american_put":
            return np.maximum(np.exp(-self.rate * t) * self.strike - s, 0.0)
        if self.kind == "american_call":
            return np.maximum(s - np.exp(-self.rate * t) * self.strike, 0.0)
        if self.kind == "zero":
            return np.zeros_like(s)
        return np.asarray(self.custom_fn(t, s), dtype=float)


def payoff_path(payoff: Payoff, bundle: PathBundle) -> np.ndarray:
    """Discounted exercise value zeta[p, i] along every path and grid node."""
    times = bundle.grid.times
    zeta = np.empty_like(bundle.s)
    for i, t in enumerate(times):
        zeta[:, i] = payoff.value(t, bundle.s[:, i])
    return zeta


def sharpe(model: MarketModel, v) -> np.ndarray:
    """Sharpe ratio lambda(v) = (mu - r) / sigma(v)."""
    sig = model.sigma_fn(v)
    if np.any(sig <= 0):
        raise DomainError("sigma(v) must be positive for the Sharpe ratio")
    return (model.mu - model.r) / sig


# binary path-bundle cache ("RDPB"): header then little-endian f64 blocks
# s, v, dw1, dw2 in row-major order
_RDPB_MAGIC = b"RDPB"
_RDPB_VERSION = 1
_RDPB_HEADER = struct.Struct("<4sIqqqq")


def write_bundle(bundle: PathBundle, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(_RDPB_HEADER.pack(_RDPB_MAGIC, _RDPB_VERSION, bundle.seed,
                                   bundle.stream_id, bundle.grid.N,
                                   bundle.n_paths))
        for block in (bundle.s, bundle.v, bundle.dw1, bundle.dw2):
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def read_bundle(path: str, grid: TimeGrid) -> PathBundle:
    """Load a bundle written by :func:`write_bundle`.

    The cache header does not carry T, so the grid must be supplied and is
    checked against the stored step count.
    """
    with open(path, "rb") as fh:
        magic, version, seed, stream_id, n_steps, n_paths = _RDPB_HEADER.unpack(
            fh.read(_RDPB_HEADER.size))
        if magic != _RDPB_MAGIC:
            raise DomainError(f"not a path-bundle cache: bad magic {magic!r}")
        if version != _RDPB_VERSION:
            raise DomainError(f"unsupported bundle version {version}")
        if n_steps != grid.N:
            raise DomainError(f"bundle has N={n_steps}, grid has N={grid.N}")

        def block(cols):
            data = np.frombuffer(fh.read(8 * n_paths * cols), dtype="<f8")
            return data.reshape(n_paths, cols).copy()

        s = block(grid.N + 1)
        v = block(grid.N + 1)
        dw1 = block(grid.N)
        dw2 = block(grid.N)
    return PathBundle(grid=grid, n_paths=n_paths, s=s, v=v, dw1=dw1, dw2=dw2,
                      seed=seed, stream_id=stream_id)
