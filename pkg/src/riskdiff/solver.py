"""Backward dynamic-programming solver for the BSDE / reflected-BSDE system.

Backward recursion in the convention Y_i = E_i[Y_{i+1}] + f(lam, z1, z2) dt,
z_k = E_i[Y_{i+1} dW_k] / dt, with the reflected variant taking the
pointwise max against the barrier (exercise value plus the boundary BSDE).
Prices are assembled as (reflected value) - (boundary value) at time zero,
using the same path bundle for every component solve.

Three regression backends fit the conditional expectations per step:
``PolyScheme`` (two-stage explicit least squares), ``NetScheme`` (one-shot
residual minimization by the MLP, as in the deep backward scheme) and
``TableScheme`` (exact group averaging on an enumerated tree path space).
At the root the state is deterministic, so conditional expectations are
plain sample means for every backend.
"""

from __future__ import annotations

import csv
import dataclasses
import inspect
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .approx import (NetConfig, SquaredErrorLoss, fit_net, fit_poly, fit_table)
from .errors import SolverError
from .model import MarketModel, PathBundle, Payoff, TimeGrid, payoff_path, simulate
from .risk import Driver, EffectiveDriver, effective_driver

__all__ = [
    "BackwardSolution", "PricingResult", "PolyScheme", "NetScheme",
    "TableScheme", "solve_boundary_bsde", "solve_reflected", "price", "smile",
    "fold_estimates", "joint_std_error", "combine_ensemble", "results_to_csv",
    "write_solution",
]

_N_JACKKNIFE = 10


@dataclass
class BackwardSolution:
    """Value/control processes of one backward solve.

    ``y`` is (n_paths, N+1); ``z1``, ``z2``, ``k_increments`` are
    (n_paths, N).  ``root_samples`` holds the per-path time-zero estimator
    samples whose mean (maxed against the barrier for reflected solves)
    defines the reported value; they feed the jackknife error bars.
    """

    grid: TimeGrid
    y: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    k_increments: np.ndarray
    regressors: list
    root_samples: np.ndarray
    barrier0: float | None = None
    metadata: dict = field(default_factory=dict)

    def value0(self) -> float:
        return float(self.y[0, 0])


class PolyScheme:
    """Two-stage explicit scheme on the polynomial basis.

    Controls come from regressing target * dW_k / dt, the value from
    regressing the target and applying the driver at the fitted controls.
    """

    kind = "poly"

    def __init__(self, degree: int = 2, ridge: float = 1e-10):
        self.degree = degree
        self.ridge = ridge

    def fit_step(self, i, inputs, target, dw1, dw2, lam, eff, dt, barrier):
        stacked = np.column_stack([target, target * dw1 / dt, target * dw2 / dt])
        reg = fit_poly(inputs, stacked, self.degree, self.ridge)
        pred = reg.predict(inputs)
        ey, z1, z2 = pred[:, 0], pred[:, 1], pred[:, 2]
        cont = ey + eff.f(lam, z1, z2) * dt
        if barrier is None:
            y = cont
        else:
            y = np.maximum(barrier, cont)
        return y, z1, z2, cont, reg, 0.0


class _StepResidualLoss:
    """The one-shot regression residual of the backward scheme.

    residual = phi0 - G with G = target + f(lam, phi1, phi2) dt
    - phi1 dW1 - phi2 dW2, wrapped in max(barrier, .) for reflected steps.
    Returns mean squared residual and its gradient wrt the three heads.
    """

    def __init__(self, target, dw1, dw2, lam, eff, dt, barrier=None):
        self.target = target
        self.dw1 = dw1
        self.dw2 = dw2
        self.lam = lam
        self.eff = eff
        self.dt = dt
        self.barrier = barrier

    def __call__(self, outputs, rows):
        phi0, phi1, phi2 = outputs[:, 0], outputs[:, 1], outputs[:, 2]
        lam = self.lam[rows]
        cont = (self.target[rows] + self.eff.f(lam, phi1, phi2) * self.dt
                - phi1 * self.dw1[rows] - phi2 * self.dw2[rows])
        if self.barrier is None:
            g_val = cont
            active = 1.0
        else:
            bar = self.barrier[rows]
            g_val = np.maximum(bar, cont)
            active = (cont > bar).astype(float)
        r = phi0 - g_val
        n = len(rows)
        fz1, fz2 = self.eff.f_grad(lam, phi1, phi2)
        grad = np.empty_like(outputs)
        grad[:, 0] = 2.0 * r / n
        grad[:, 1] = -2.0 * r / n * active * (fz1 * self.dt - self.dw1[rows])
        grad[:, 2] = -2.0 * r / n * active * (fz2 * self.dt - self.dw2[rows])
        return float(np.mean(r * r)), grad


class NetScheme:
    """One-shot deep-backward regression per step, warm-started backwards.

    By default the barrier is applied outside the fit (train on the plain
    residual, then take max with the barrier), as in the reflected deep
    backward dynamic-programming scheme.  Putting the max inside the loss
    (``reflect_in_loss=True``) is degenerate whenever the driver is concave
    in z2: arbitrarily large fitted controls clamp the regression target at
    the barrier and the zero-loss minimizer is the barrier itself.
    """

    kind = "net"

    def __init__(self, config: NetConfig, warm_start: bool = True,
                 reflect_in_loss: bool = False):
        self.config = config
        self.warm_start = warm_start
        self.reflect_in_loss = reflect_in_loss
        self._previous = None

    def fit_step(self, i, inputs, target, dw1, dw2, lam, eff, dt, barrier):
        loss_barrier = barrier if self.reflect_in_loss else None
        loss = _StepResidualLoss(target, dw1, dw2, lam, eff, dt, loss_barrier)
        if i < self.config.late_window:
            epochs = self.config.epochs_late
        else:
            epochs = self.config.epochs_first
        cfg = dataclasses.replace(self.config, seed=self.config.seed + 7919 * (i + 1))
        warm = self._previous if self.warm_start else None
        bias_target = target if barrier is None else np.maximum(barrier, target)
        reg = fit_net(inputs, loss, cfg, epochs=epochs, warm_start=warm,
                      init_output_bias=(float(np.mean(bias_target)), 0.0, 0.0))
        if self.warm_start:
            self._previous = reg
        pred = reg.predict(inputs)
        phi0, z1, z2 = pred[:, 0], pred[:, 1], pred[:, 2]
        # pathwise continuation is only a diagnostic for the net backend
        cont = (target + eff.f(lam, z1, z2) * dt - z1 * dw1 - z2 * dw2)
        if barrier is None:
            return phi0, z1, z2, cont, reg, 0.0
        clip = float(np.max(np.maximum(barrier - phi0, 0.0)))
        return np.maximum(barrier, phi0), z1, z2, cont, reg, clip


class TableScheme:
    """Exact conditional expectations by node on an enumerated path space."""

    kind = "table"

    def __init__(self, node_index: np.ndarray):
        # node_index[p, i] = tree node id of path p at step i
        self.node_index = np.asarray(node_index, dtype=int)

    def fit_step(self, i, inputs, target, dw1, dw2, lam, eff, dt, barrier):
        gi = self.node_index[:, i]
        reg = fit_table(gi, np.column_stack([target, target * dw1 / dt,
                                             target * dw2 / dt]))
        pred = reg.predict(gi)
        ey, z1, z2 = pred[:, 0], pred[:, 1], pred[:, 2]
        cont = ey + eff.f(lam, z1, z2) * dt
        if barrier is None:
            y = cont
        else:
            y = np.maximum(barrier, cont)
        return y, z1, z2, cont, reg, 0.0


def _backward_solve(bundle: PathBundle, eff: EffectiveDriver, scheme,
                    terminal: np.ndarray, barrier: np.ndarray | None):
    grid = bundle.grid
    n, big_n = bundle.n_paths, grid.N
    dt = grid.dt

    y = np.empty((n, big_n + 1))
    z1 = np.zeros((n, big_n))
    z2 = np.zeros((n, big_n))
    k_inc = np.zeros((n, big_n))
    regressors = [None] * big_n
    clip_max = 0.0

    y[:, big_n] = terminal
    if barrier is not None and np.any(terminal < barrier[:, big_n] - 1e-9):
        raise SolverError("terminal values below the barrier", step_index=big_n)

    for i in range(big_n - 1, 0, -1):
        target = y[:, i + 1]
        lam = eff.lam(bundle.v[:, i])
        bar_i = None if barrier is None else barrier[:, i]
        yi, z1i, z2i, cont, reg, clip = scheme.fit_step(
            i, np.column_stack([bundle.s[:, i], bundle.v[:, i]]), target,
            bundle.dw1[:, i], bundle.dw2[:, i], lam, eff, dt, bar_i)
        if not np.all(np.isfinite(yi)):
            raise SolverError("non-finite values in backward solve", step_index=i)
        y[:, i] = yi
        z1[:, i] = z1i
        z2[:, i] = z2i
        if barrier is not None:
            k_inc[:, i] = np.maximum(yi - cont, 0.0)
        regressors[i] = reg
        clip_max = max(clip_max, clip)

    # root step: the state is deterministic, conditional expectations are means
    target = y[:, 1]
    lam0 = float(np.asarray(eff.lam(bundle.v[0, 0])))
    z10 = float(np.mean(target * bundle.dw1[:, 0])) / dt
    z20 = float(np.mean(target * bundle.dw2[:, 0])) / dt
    root_samples = target + float(np.asarray(eff.f(lam0, z10, z20))) * dt
    cont0 = float(np.mean(root_samples))
    barrier0 = None if barrier is None else float(barrier[0, 0])
    y0 = cont0 if barrier is None else max(barrier0, cont0)
    if not np.isfinite(y0):
        raise SolverError("non-finite root value", step_index=0)
    y[:, 0] = y0
    z1[:, 0] = z10
    z2[:, 0] = z20
    if barrier is not None:
        k_inc[:, 0] = max(y0 - cont0, 0.0)

    metadata = {"scheme": scheme.kind, "clip_max": clip_max}
    if barrier is not None:
        tol = 1e-6 * (1.0 + np.abs(y[:, :-1]))
        viol = k_inc * (y[:, :-1] - barrier[:, :-1]) > tol
        metadata["skorokhod_violations"] = int(np.count_nonzero(viol))

    return BackwardSolution(grid=grid, y=y, z1=z1, z2=z2, k_increments=k_inc,
                            regressors=regressors, root_samples=root_samples,
                            barrier0=barrier0, metadata=metadata)


def solve_boundary_bsde(bundle: PathBundle, eff: EffectiveDriver, scheme,
                        terminal=None) -> BackwardSolution:
    """Solve the plain BSDE (zero terminal by default: the boundary process)."""
    if terminal is None:
        terminal = np.zeros(bundle.n_paths)
    else:
        terminal = np.broadcast_to(np.asarray(terminal, dtype=float),
                                   (bundle.n_paths,)).copy()
    return _backward_solve(bundle, eff, scheme, terminal, barrier=None)


def solve_reflected(bundle: PathBundle, eff: EffectiveDriver,
                    barrier: np.ndarray, scheme,
                    terminal=None) -> BackwardSolution:
    """Solve the reflected BSDE with the given barrier matrix.

    ``terminal`` defaults to the barrier at maturity (the two conventions
    agree there since the boundary process vanishes at T).
    """
    barrier = np.asarray(barrier, dtype=float)
    if terminal is None:
        terminal = barrier[:, -1].copy()
    else:
        terminal = np.broadcast_to(np.asarray(terminal, dtype=float),
                                   (bundle.n_paths,)).copy()
    return _backward_solve(bundle, eff, scheme, terminal, barrier=barrier)


@dataclass
class PricingResult:
    """One indifference price with its component risks and diagnostics."""

    side: str
    strike: float
    style: str                 # "american" or "european"
    price: float
    risk_with_claim: float
    risk_without: float
    mc_std_error: float
    meta: dict = field(default_factory=dict)
    with_samples: np.ndarray | None = None
    without_samples: np.ndarray | None = None
    barrier0: float | None = None


def _price_estimate(res: PricingResult, mask) -> float:
    with_val = float(np.mean(res.with_samples[mask]))
    if res.style == "american" and res.barrier0 is not None:
        with_val = max(res.barrier0, with_val)
    return with_val - float(np.mean(res.without_samples[mask]))


def fold_estimates(res: PricingResult, n_folds: int = _N_JACKKNIFE) -> np.ndarray:
    """Leave-one-fold-out price estimates over contiguous path batches."""
    n = len(res.with_samples)
    bounds = np.linspace(0, n, n_folds + 1).astype(int)
    out = np.empty(n_folds)
    for k in range(n_folds):
        mask = np.ones(n, dtype=bool)
        mask[bounds[k]:bounds[k + 1]] = False
        out[k] = _price_estimate(res, mask)
    return out


def _jackknife_se(estimates: np.ndarray) -> float:
    g = len(estimates)
    center = estimates.mean()
    return float(np.sqrt((g - 1) / g * np.sum((estimates - center) ** 2)))


def joint_std_error(res_a: PricingResult, res_b: PricingResult,
                    n_folds: int = _N_JACKKNIFE) -> float:
    """Std error of price_a - price_b over shared (paired) paths.

    The path component is a paired jackknife; ensemble results additionally
    carry an independent training-noise component per result.
    """
    if len(res_a.with_samples) != len(res_b.with_samples):
        raise ValueError("results must share the same path bundle")
    path = _jackknife_se(fold_estimates(res_a, n_folds)
                         - fold_estimates(res_b, n_folds))
    tr_a = res_a.meta.get("train_std_error", 0.0)
    tr_b = res_b.meta.get("train_std_error", 0.0)
    return float(np.sqrt(path * path + tr_a * tr_a + tr_b * tr_b))


def combine_ensemble(members) -> PricingResult:
    """Average pricing results from independently trained solves.

    All members must share the path bundle; root samples are averaged
    pointwise and the spread of member prices becomes an extra
    training-noise term in mc_std_error.
    """
    base = members[0]
    if len(members) == 1:
        base.meta.setdefault("ensemble", 1)
        base.meta.setdefault("train_std_error", 0.0)
        return base
    with_avg = np.mean([m.with_samples for m in members], axis=0)
    without_avg = np.mean([m.without_samples for m in members], axis=0)
    with_val = float(np.mean(with_avg))
    if base.style == "american" and base.barrier0 is not None:
        with_val = max(base.barrier0, with_val)
    without_val = float(np.mean(without_avg))
    prices = [m.price for m in members]
    train_var = float(np.var(prices, ddof=1)) / len(members)
    meta = dict(base.meta)
    meta["ensemble"] = len(members)
    meta["member_prices"] = prices
    meta["train_std_error"] = float(np.sqrt(train_var))
    res = PricingResult(
        side=base.side, strike=base.strike, style=base.style,
        price=with_val - without_val,
        risk_with_claim=with_val, risk_without=without_val,
        mc_std_error=0.0, meta=meta, with_samples=with_avg,
        without_samples=without_avg, barrier0=base.barrier0)
    path_se = _jackknife_se(fold_estimates(res))
    res.mc_std_error = float(np.sqrt(path_se * path_se + train_var))
    return res


def _assemble(side, strike, style, rsol: BackwardSolution,
              ysol: BackwardSolution, meta) -> PricingResult:
    with_val = rsol.value0()
    without_val = ysol.value0()
    res = PricingResult(
        side=side, strike=strike, style=style,
        price=with_val - without_val,
        risk_with_claim=with_val, risk_without=without_val,
        mc_std_error=0.0, meta=meta,
        with_samples=rsol.root_samples, without_samples=ysol.root_samples,
        barrier0=rsol.barrier0)
    res.mc_std_error = _jackknife_se(fold_estimates(res))
    return res


def _make_scheme(scheme_factory, member: int):
    """Build a scheme; factories may take the ensemble member index."""
    try:
        params = [p for p in inspect.signature(scheme_factory).parameters.values()
                  if p.kind in (inspect.Parameter.POSITIONAL_ONLY,
                                inspect.Parameter.POSITIONAL_OR_KEYWORD)]
    except (TypeError, ValueError):
        params = []
    if params:
        return scheme_factory(member)
    return scheme_factory()


def _price_components(bundle, eff, ysol, payoff, scheme_factory, style,
                      force_double_solve=False, member=0):
    zeta = payoff_path(payoff, bundle)
    if style == "american":
        barrier = zeta + ysol.y
        rsol = solve_reflected(bundle, eff, barrier,
                               _make_scheme(scheme_factory, member),
                               terminal=zeta[:, -1])
    elif style == "european":
        rsol = solve_boundary_bsde(bundle, eff,
                                   _make_scheme(scheme_factory, member),
                                   terminal=zeta[:, -1])
    else:
        raise ValueError(f"unknown style {style!r}")
    if force_double_solve:
        # literal zeta = 0 reflected solve instead of the boundary shortcut
        without = solve_reflected(bundle, eff, ysol.y,
                                  _make_scheme(scheme_factory, member),
                                  terminal=np.zeros(bundle.n_paths))
    else:
        without = ysol
    return rsol, without


def price(side: str, model: MarketModel, grid: TimeGrid, payoff: Payoff,
          driver: Driver, n_paths: int, seed: int, scheme_factory,
          stream_id: int = 0, style: str = "american",
          bundle: PathBundle | None = None,
          force_double_solve: bool = False,
          n_ensemble: int = 1) -> PricingResult:
    """Simulate, solve the boundary BSDE and the (reflected) claim equation,
    and assemble the indifference price for one side and strike.

    The same bundle drives every component solve; the risk of the zero
    claim is computed from the boundary BSDE unless ``force_double_solve``.
    With ``n_ensemble`` > 1 the whole solve is repeated with independently
    seeded training runs (factories receive the member index) and the
    averaged result carries the training spread in its std error.
    """
    eff = effective_driver(side, driver, model)
    if bundle is None:
        bundle = simulate(model, grid, n_paths, seed, stream_id)
    members = []
    for member in range(n_ensemble):
        ysol = solve_boundary_bsde(bundle, eff,
                                   _make_scheme(scheme_factory, member))
        rsol, without = _price_components(bundle, eff, ysol, payoff,
                                          scheme_factory, style,
                                          force_double_solve, member)
        meta = {"N": grid.N, "n_paths": bundle.n_paths, "seed": bundle.seed,
                "regressor_kind": rsol.metadata.get("scheme", "?"),
                "clip_max": rsol.metadata.get("clip_max", 0.0),
                "sigma_v0": float(np.asarray(model.sigma_fn(model.v0)))}
        members.append(_assemble(side, payoff.strike, style, rsol, without,
                                 meta))
    return combine_ensemble(members)


def _thread_cap(n_tasks: int) -> int:
    env = os.environ.get("RISKDIFF_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_tasks))


def smile(sides, model: MarketModel, grid: TimeGrid, strikes, driver: Driver,
          n_paths: int, seed: int, scheme_factory, stream_id: int = 0,
          payoff_kind: str = "american_put",
          include_european: bool = True, n_ensemble: int = 1) -> dict:
    """Price a strike sweep for each side over one shared path bundle.

    Returns {"american": {side: [PricingResult, ...]}, "european": {...}}
    with results ordered by strike.  Strikes are priced concurrently
    (capped by RISKDIFF_THREADS); the boundary BSDE is solved once per side
    and ensemble member.
    """
    strikes = list(strikes)
    if not strikes:
        raise ValueError("strikes must be nonempty")
    bundle = simulate(model, grid, n_paths, seed, stream_id)
    out = {"american": {}, "european": {}}
    styles = ["american"] + (["european"] if include_european else [])
    tasks = [(k, st) for st in styles for k in strikes]
    for side in sides:
        eff = effective_driver(side, driver, model)
        per_task = [[] for _ in tasks]
        for member in range(n_ensemble):
            ysol = solve_boundary_bsde(bundle, eff,
                                       _make_scheme(scheme_factory, member))

            def run(strike, style):
                payoff = Payoff(kind=payoff_kind, strike=strike, rate=model.r)
                rsol, without = _price_components(bundle, eff, ysol, payoff,
                                                  scheme_factory, style,
                                                  member=member)
                meta = {"N": grid.N, "n_paths": bundle.n_paths, "seed": seed,
                        "regressor_kind": rsol.metadata.get("scheme", "?")}
                return _assemble(side, strike, style, rsol, without, meta)

            with ThreadPoolExecutor(max_workers=_thread_cap(len(tasks))) as pool:
                results = list(pool.map(lambda t: run(*t), tasks))
            for slot, res in zip(per_task, results):
                slot.append(res)
        for (strike, style), members in zip(tasks, per_task):
            out[style].setdefault(side, []).append(combine_ensemble(members))
    return out


_CSV_COLUMNS = ["strike", "side", "price", "risk_with_claim", "risk_without",
                "mc_std_error", "N", "n_paths", "seed", "regressor_kind"]


def results_to_csv(results, path: str) -> None:
    """RFC-4180 CSV of pricing results ('.' decimal separator)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_COLUMNS)
        for r in results:
            writer.writerow([
                repr(float(r.strike)), r.side, repr(r.price),
                repr(r.risk_with_claim), repr(r.risk_without),
                repr(r.mc_std_error), r.meta.get("N", ""),
                r.meta.get("n_paths", ""), r.meta.get("seed", ""),
                r.meta.get("regressor_kind", "")])


_RDBS_MAGIC = b"RDBS"
_RDBS_VERSION = 1


def write_solution(sol: BackwardSolution, path: str, seed: int = 0,
                   stream_id: int = 0) -> None:
    """Binary dump of a backward solution (RDPB-style layout, magic RDBS)."""
    import struct
    n_paths = sol.y.shape[0]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIqqqq", _RDBS_MAGIC, _RDBS_VERSION, seed,
                             stream_id, sol.grid.N, n_paths))
        for block in (sol.y, sol.z1, sol.z2, sol.k_increments):
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())
