"""Convex BSDE drivers, partial Fenchel conjugates and driver certification.

A driver g(z1, z2) induces a fully dynamic convex risk measure; hedging in
the traded direction replaces g by its partial conjugate
g*(zeta, z2) = sup_{z1} {zeta z1 - g(z1, z2)}.  The distorted entropic
family is

    g(z1, z2) = (gamma/2) ((z1 + eta z2)^2 + z2^2)
    g*(zeta, z2) = zeta^2 / (2 gamma) - eta zeta z2 - (gamma/2) z2^2

(the closed form is derived from the sup definition and cross-checked by
``numerical_conjugate``).  The effective drivers of the backward pricing
equations, in the convention Y_i = E[Y_{i+1}] + f dt, are

    seller: f(lam, z1, z2) = -(g*(-lam, z2) + lam z1)
    buyer:  f(lam, z1, z2) =   g*(-lam, -z2) - lam z1
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConjugateRadiusError, ParameterError
from .model import MarketModel, sharpe

__all__ = [
    "Driver", "EffectiveDriver", "ValidationReport",
    "entropic_driver", "numerical_conjugate", "validate_driver",
    "effective_driver", "conjugate_driver",
]


@dataclass(frozen=True)
class Driver:
    """A convex driver g with its partial conjugate and optional gradients.

    All callables must be vectorized over numpy arrays.  ``grad_g`` and
    ``grad_g_star`` return the pair of partials; when absent, central finite
    differences with step h = 1e-6 (1 + |z|) are used.
    """

    g: Callable
    g_star: Callable
    grad_g: Callable | None = None
    grad_g_star: Callable | None = None
    params: dict = field(default_factory=dict)

    def g_grad(self, z1, z2):
        if self.grad_g is not None:
            return self.grad_g(z1, z2)
        return _fd_grad(self.g, z1, z2)

    def g_star_grad(self, zeta, z2):
        if self.grad_g_star is not None:
            return self.grad_g_star(zeta, z2)
        return _fd_grad(self.g_star, zeta, z2)


def _fd_grad(fn, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    hx = 1e-6 * (1.0 + np.abs(x))
    hy = 1e-6 * (1.0 + np.abs(y))
    gx = (fn(x + hx, y) - fn(x - hx, y)) / (2.0 * hx)
    gy = (fn(x, y + hy) - fn(x, y - hy)) / (2.0 * hy)
    return gx, gy


def entropic_driver(gamma: float, eta: float) -> Driver:
    """Distorted entropic driver with risk tolerance gamma > 0 and
    volatility risk premium eta."""
    if gamma <= 0:
        raise ParameterError(f"gamma must be > 0, got {gamma}")

    def g(z1, z2):
        z1 = np.asarray(z1, dtype=float)
        z2 = np.asarray(z2, dtype=float)
        return 0.5 * gamma * ((z1 + eta * z2) ** 2 + z2 ** 2)

    def g_star(zeta, z2):
        zeta = np.asarray(zeta, dtype=float)
        z2 = np.asarray(z2, dtype=float)
        return zeta ** 2 / (2.0 * gamma) - eta * zeta * z2 - 0.5 * gamma * z2 ** 2

    def grad_g(z1, z2):
        z1 = np.asarray(z1, dtype=float)
        z2 = np.asarray(z2, dtype=float)
        common = gamma * (z1 + eta * z2)
        return common, eta * common + gamma * z2

    def grad_g_star(zeta, z2):
        zeta = np.asarray(zeta, dtype=float)
        z2 = np.asarray(z2, dtype=float)
        return zeta / gamma - eta * z2, -eta * zeta - gamma * z2

    return Driver(g=g, g_star=g_star, grad_g=grad_g, grad_g_star=grad_g_star,
                  params={"family": "entropic", "gamma": gamma, "eta": eta})


def conjugate_driver(d: Driver) -> Driver:
    """Wrap g* as a driver in its own right (for certification of g*)."""
    return Driver(g=d.g_star, g_star=d.g, grad_g=d.grad_g_star,
                  grad_g_star=d.grad_g,
                  params={"conjugate_of": d.params.get("family", "unknown")})


_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


def numerical_conjugate(d: Driver, zeta: float, z2: float,
                        search_radius: float = 50.0,
                        grid_points: int = 201) -> float:
    """Brute-force oracle for g*: maximize zeta z1 - g(z1, z2) over
    [-search_radius, search_radius].

    Coarse grid locates the bracket; golden-section refines it to 1e-10
    width.  A maximizer on the boundary raises ConjugateRadiusError.
    """
    def phi(z1):
        return zeta * z1 - float(d.g(z1, z2))

    grid = np.linspace(-search_radius, search_radius, grid_points)
    vals = np.array([phi(x) for x in grid])
    k = int(np.argmax(vals))
    if k == 0 or k == grid_points - 1:
        raise ConjugateRadiusError(
            f"maximizer at search boundary (radius {search_radius}); enlarge it")

    lo, hi = grid[k - 1], grid[k + 1]
    # golden-section on the strictly concave section
    x1 = hi - _INV_PHI * (hi - lo)
    x2 = lo + _INV_PHI * (hi - lo)
    f1, f2 = phi(x1), phi(x2)
    while hi - lo > 1e-10:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INV_PHI * (hi - lo)
            f2 = phi(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INV_PHI * (hi - lo)
            f1 = phi(x1)
    return phi(0.5 * (lo + hi))


@dataclass
class ConditionResult:
    condition: str
    constant: float
    worst_point: tuple
    margin: float
    violated: bool


@dataclass
class ValidationReport:
    """Outcome of the strictly-quadratic / linear-growth certification.

    ``conditions`` covers g, ``conjugate_conditions`` covers g* (the
    conjugate of a strictly quadratic driver must itself pass).
    """

    conditions: list
    conjugate_conditions: list

    @property
    def violations(self) -> list:
        return [c for c in self.conditions + self.conjugate_conditions if c.violated]

    def passed(self) -> bool:
        return not self.violations

    def to_json(self) -> str:
        def enc(c, which):
            return {"function": which, "condition": c.condition,
                    "constant": c.constant, "worst_point": list(c.worst_point),
                    "margin": c.margin, "violated": c.violated}
        return json.dumps(
            [enc(c, "g") for c in self.conditions]
            + [enc(c, "g_star") for c in self.conjugate_conditions], indent=2)


def _certify(fn, grad_fn, box, n_samples, rng_):
    """Check conditions 1-5 of the strictly-quadratic definition on samples.

    Constants are fitted as max-ratios on an inner half-box and re-checked
    with 10% slack on the full box, so super-quadratic growth shows up as a
    violation instead of being absorbed into the fit.
    """
    z = rng_.uniform(-box, box, size=(n_samples, 2))
    # structured lines through the axes catch kinks at zero
    line = np.linspace(-box, box, 101)
    z = np.vstack([z, np.column_stack([line, np.zeros_like(line)]),
                   np.column_stack([np.zeros_like(line), line])])
    z1, z2 = z[:, 0], z[:, 1]
    inner = (np.abs(z1) <= box / 2) & (np.abs(z2) <= box / 2)

    g = np.asarray(fn(z1, z2), dtype=float)
    g1, g2 = grad_fn(z1, z2)
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)

    results = []

    def record(name, constant, margins):
        worst = int(np.argmin(margins))
        results.append(ConditionResult(
            condition=name, constant=float(constant),
            worst_point=(float(z1[worst]), float(z2[worst])),
            margin=float(margins[worst]), violated=bool(margins[worst] < 0)))

    # condition 1 (C^{2,1}): Richardson consistency of the second difference
    # in z1; a kink makes the h and h/2 estimates disagree wildly
    h = 1e-3 * (1.0 + np.abs(z1))
    d2_h = (fn(z1 + h, z2) - 2 * g + fn(z1 - h, z2)) / h ** 2
    d2_h2 = (fn(z1 + h / 2, z2) - 2 * g + fn(z1 - h / 2, z2)) / (h / 2) ** 2
    smooth_margin = 0.05 * (1.0 + np.abs(d2_h)) - np.abs(d2_h - d2_h2)
    record("1_smoothness", 0.0, smooth_margin)

    # condition 2: g_{z1 z1} > 0 everywhere
    record("2_strict_convexity_z1", 0.0, np.asarray(d2_h2) - 1e-12)

    slack = 1.1

    # condition 3 upper: g <= c2 (1 + z1^2 + z2^2)
    quad = 1.0 + z1 ** 2 + z2 ** 2
    c2 = max(float(np.max(g[inner] / quad[inner])), 1e-12)
    record("3_upper_quadratic", c2, slack * c2 * quad - g)

    # condition 3 lower: z1^2/(4 c1) - c1 (1 + z2^2) <= g; scan for the
    # smallest feasible c1 on the inner box
    c1_grid = np.logspace(-3, 3, 121)
    c1 = None
    for cand in c1_grid:
        lower = z1[inner] ** 2 / (4 * cand) - cand * (1 + z2[inner] ** 2)
        if np.all(lower <= g[inner] + 1e-12):
            c1 = cand
            break
    if c1 is None:
        record("3_lower_coercive", float("nan"),
               np.full_like(g, -np.inf))
    else:
        lower = z1 ** 2 / (4 * slack * c1) - slack * c1 * (1 + z2 ** 2)
        record("3_lower_coercive", c1, g - lower)

    # condition 4: |z1|/c3 - (1 + |z2|) <= |g_{z1}| <= c3 (1 + |z1| + |z2|)
    lin = 1.0 + np.abs(z1) + np.abs(z2)
    c3_up = np.max(np.abs(g1[inner]) / lin[inner])
    c3_low = np.max(np.abs(z1[inner]) / (np.abs(g1[inner]) + 1.0 + np.abs(z2[inner])))
    c3 = max(float(c3_up), float(c3_low), 1e-12)
    record("4_grad_z1_upper", c3, slack * c3 * lin - np.abs(g1))
    record("4_grad_z1_lower", c3,
           np.abs(g1) - (np.abs(z1) / (slack * c3) - (1.0 + np.abs(z2))))

    # condition 5: |g_{z2}| <= c4 (1 + |z1| + |z2|)
    c4 = max(float(np.max(np.abs(g2[inner]) / lin[inner])), 1e-12)
    record("5_grad_z2_upper", c4, slack * c4 * lin - np.abs(g2))

    return results


def validate_driver(d: Driver, box: float = 10.0, n_samples: int = 10_000,
                    seed: int = 0) -> ValidationReport:
    """Numerically certify the strictly-quadratic conditions for g and g*.

    Violations are reported, not raised; the caller decides whether they are
    fatal.
    """
    rng_ = np.random.default_rng(seed)
    conditions = _certify(d.g, d.g_grad, box, n_samples, rng_)
    conj = conjugate_driver(d)
    conj_conditions = _certify(conj.g, conj.g_grad, box, n_samples, rng_)
    return ValidationReport(conditions=conditions,
                            conjugate_conditions=conj_conditions)


@dataclass(frozen=True)
class EffectiveDriver:
    """Sign-resolved backward driver for one pricing side.

    ``model`` supplies the Sharpe ratio; it may be None for tests that pass
    lambda values directly to :meth:`f`.
    """

    side: str
    base: Driver
    model: MarketModel | None = None

    def __post_init__(self):
        if self.side not in ("seller", "buyer"):
            raise ParameterError(f"side must be 'seller' or 'buyer', got {self.side!r}")

    def lam(self, v):
        if self.model is None:
            raise ParameterError("EffectiveDriver has no model bound for sharpe")
        return sharpe(self.model, v)

    def f(self, lam, z1, z2):
        lam = np.asarray(lam, dtype=float)
        if self.side == "seller":
            return -(self.base.g_star(-lam, z2) + lam * np.asarray(z1, dtype=float))
        return self.base.g_star(-lam, -np.asarray(z2, dtype=float)) \
            - lam * np.asarray(z1, dtype=float)

    def f_grad(self, lam, z1, z2):
        """Partials (f_z1, f_z2) used by network backprop."""
        lam = np.asarray(lam, dtype=float)
        if self.side == "seller":
            _, gs2 = self.base.g_star_grad(-lam, z2)
            return -lam * np.ones_like(np.asarray(z1, dtype=float)), -np.asarray(gs2)
        _, gs2 = self.base.g_star_grad(-lam, -np.asarray(z2, dtype=float))
        return -lam * np.ones_like(np.asarray(z1, dtype=float)), -np.asarray(gs2)


def effective_driver(side: str, d: Driver,
                     model: MarketModel | None = None) -> EffectiveDriver:
    """Build the seller's or buyer's effective driver from a base driver."""
    return EffectiveDriver(side=side, base=d, model=model)
