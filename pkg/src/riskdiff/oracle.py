"""Exact small-tree oracle for the backward pricing equations.

A non-recombining quaternary tree: per step the pair (dW1, dWp) takes the
four sign combinations of +-sqrt(dt) with probability 1/4 each, and
dW2 = rho dW1 + sqrt(1 - rho^2) dWp.  This two-point measure matches the
Brownian mean, variance and correlation exactly, so conditional
expectations in the discrete scheme are exact 4-point sums; the oracle
validates the discrete recursion, not the continuous limit.  States are
propagated through the identical Euler map as the Monte Carlo engine.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import TreeSizeError
from .model import MarketModel, PathBundle, Payoff, TimeGrid, euler_step
from .risk import Driver, EffectiveDriver, effective_driver
from .solver import PricingResult

__all__ = [
    "Tree", "build_tree", "oracle_bsde", "oracle_reflected", "oracle_price",
    "payoff_levels", "enumerate_stopping_values", "tree_path_bundle",
    "tree_to_csv", "MAX_LEVELS",
]

MAX_LEVELS = 8

# branch order: (dW1 sign, dWp sign) = (+,+), (+,-), (-,+), (-,-)
_SIGN1 = np.array([1.0, 1.0, -1.0, -1.0])
_SIGNP = np.array([1.0, -1.0, 1.0, -1.0])


@dataclass(frozen=True)
class Tree:
    """Non-recombining tree of (S, V) states; level i holds 4^i nodes.

    Child c of node j at level i is node 4 j + c at level i + 1.
    """

    model: MarketModel
    grid: TimeGrid
    s_levels: list
    v_levels: list
    dw1_branch: np.ndarray
    dw2_branch: np.ndarray


def build_tree(model: MarketModel, grid: TimeGrid) -> Tree:
    if grid.N > MAX_LEVELS:
        raise TreeSizeError(f"tree capped at N <= {MAX_LEVELS}, got {grid.N}")
    dt = grid.dt
    sqdt = np.sqrt(dt)
    rho = model.rho
    dw1 = _SIGN1 * sqdt
    dw2 = rho * dw1 + np.sqrt(max(1.0 - rho * rho, 0.0)) * _SIGNP * sqdt

    s_levels = [np.array([model.s0])]
    v_levels = [np.array([model.v0])]
    for i in range(grid.N):
        s, v = s_levels[i], v_levels[i]
        # expand each node into its four children
        s_rep = np.repeat(s, 4)
        v_rep = np.repeat(v, 4)
        dw1_rep = np.tile(dw1, s.size)
        dw2_rep = np.tile(dw2, s.size)
        s_next, v_next = euler_step(model, s_rep, v_rep, dw1_rep, dw2_rep, dt)
        s_levels.append(s_next)
        v_levels.append(v_next)
    return Tree(model=model, grid=grid, s_levels=s_levels, v_levels=v_levels,
                dw1_branch=dw1, dw2_branch=dw2)


def payoff_levels(tree: Tree, payoff: Payoff) -> list:
    """Exercise value at every node, level by level."""
    times = tree.grid.times
    return [payoff.value(times[i], tree.s_levels[i])
            for i in range(tree.grid.N + 1)]


def _recurse(tree: Tree, eff: EffectiveDriver, terminal, barrier_levels,
             start_level: int, end_level: int):
    """Shared backward recursion; barrier_levels None gives the plain BSDE."""
    dt = tree.grid.dt
    n_levels = end_level - start_level
    y_levels = [None] * (n_levels + 1)
    z1_levels = [None] * n_levels
    z2_levels = [None] * n_levels
    exercised = [None] * n_levels

    y_levels[n_levels] = np.asarray(terminal, dtype=float)
    for i in range(end_level - 1, start_level - 1, -1):
        k = i - start_level
        child = y_levels[k + 1].reshape(-1, 4)
        mean = child.mean(axis=1)
        z1 = child @ tree.dw1_branch / (4.0 * dt)
        z2 = child @ tree.dw2_branch / (4.0 * dt)
        lam = eff.lam(tree.v_levels[i])
        cont = mean + np.asarray(eff.f(lam, z1, z2)) * dt
        if barrier_levels is None:
            y = cont
            exercised[k] = np.zeros(cont.shape, dtype=bool)
        else:
            bar = barrier_levels[i]
            y = np.maximum(bar, cont)
            exercised[k] = bar >= cont
        y_levels[k] = y
        z1_levels[k] = z1
        z2_levels[k] = z2
    return y_levels, z1_levels, z2_levels, exercised


def oracle_bsde(tree: Tree, eff: EffectiveDriver, terminal,
                start_level: int = 0, end_level: int | None = None):
    """Exact backward recursion of the plain BSDE.

    Returns (y_levels, z1_levels, z2_levels); ``start_level``/``end_level``
    allow solving a sub-span (used by the time-consistency splice test).
    """
    if end_level is None:
        end_level = tree.grid.N
    y, z1, z2, _ = _recurse(tree, eff, terminal, None, start_level, end_level)
    return y, z1, z2


def oracle_reflected(tree: Tree, eff: EffectiveDriver, barrier_levels,
                     terminal, start_level: int = 0,
                     end_level: int | None = None):
    """Exact reflected recursion y = max(barrier, E[y_child] + f dt).

    Returns (y_levels, z1_levels, z2_levels, exercised_levels).
    """
    if end_level is None:
        end_level = tree.grid.N
    return _recurse(tree, eff, terminal, barrier_levels, start_level, end_level)


def oracle_price(side: str, model: MarketModel, grid: TimeGrid,
                 payoff: Payoff, driver: Driver,
                 style: str = "american") -> PricingResult:
    """Price by exact expectations on the tree; mc_std_error is zero."""
    tree = build_tree(model, grid)
    eff = effective_driver(side, driver, model)
    zeta = payoff_levels(tree, payoff)

    y_levels, _, _ = oracle_bsde(tree, eff, np.zeros(4 ** grid.N))
    y0 = float(y_levels[0][0])

    if style == "american":
        barrier = [zeta[i] + y_levels[i] for i in range(grid.N + 1)]
        r_levels, _, _, _ = oracle_reflected(tree, eff, barrier, zeta[grid.N])
    elif style == "european":
        r_levels, _, _ = oracle_bsde(tree, eff, zeta[grid.N])
    else:
        raise ValueError(f"unknown style {style!r}")
    r0 = float(r_levels[0][0])

    return PricingResult(
        side=side, strike=payoff.strike, style=style, price=r0 - y0,
        risk_with_claim=r0, risk_without=y0, mc_std_error=0.0,
        meta={"N": grid.N, "n_paths": 4 ** grid.N, "seed": "",
              "regressor_kind": "oracle"})


def enumerate_stopping_values(tree: Tree, barrier_levels, terminal,
                              max_levels: int = 3) -> np.ndarray:
    """Values of ALL adapted stopping rules under the f = 0 recursion.

    Independent cross-check of the reflected solve: returns one expected
    stopped value per rule (1 + R^4 rules per internal node, so N <= 3).
    The reflected root value must equal the max of this array.
    """
    if tree.grid.N > max_levels:
        raise TreeSizeError(f"stopping-rule enumeration capped at N <= {max_levels}")

    def values(level, node):
        if level == tree.grid.N:
            return np.array([terminal[node]])
        child_vals = [values(level + 1, 4 * node + c) for c in range(4)]
        # all cross combinations of the four children's rule values
        combo = child_vals[0][:, None, None, None] \
            + child_vals[1][None, :, None, None] \
            + child_vals[2][None, None, :, None] \
            + child_vals[3][None, None, None, :]
        cont = (combo / 4.0).ravel()
        return np.concatenate([[barrier_levels[level][node]], cont])

    return values(0, 0)


def tree_path_bundle(tree: Tree):
    """Enumerate all 4^N scenario paths of the tree as a PathBundle.

    Also returns node_index (n_paths, N+1) with the tree node id of each
    path at each level, the grouping key for the exact table regressor.
    """
    n_steps = tree.grid.N
    n_paths = 4 ** n_steps
    paths = np.arange(n_paths)

    node_index = np.empty((n_paths, n_steps + 1), dtype=int)
    branch = np.empty((n_paths, n_steps), dtype=int)
    for i in range(n_steps + 1):
        node_index[:, i] = paths >> (2 * (n_steps - i))
    for i in range(n_steps):
        branch[:, i] = (paths >> (2 * (n_steps - 1 - i))) & 3

    s = np.empty((n_paths, n_steps + 1))
    v = np.empty((n_paths, n_steps + 1))
    dw1 = np.empty((n_paths, n_steps))
    dw2 = np.empty((n_paths, n_steps))
    for i in range(n_steps + 1):
        s[:, i] = tree.s_levels[i][node_index[:, i]]
        v[:, i] = tree.v_levels[i][node_index[:, i]]
    for i in range(n_steps):
        dw1[:, i] = tree.dw1_branch[branch[:, i]]
        dw2[:, i] = tree.dw2_branch[branch[:, i]]

    bundle = PathBundle(grid=tree.grid, n_paths=n_paths, s=s, v=v,
                        dw1=dw1, dw2=dw2, seed=0, stream_id=0)
    return bundle, node_index


def _node_path_string(level: int, node: int) -> str:
    digits = []
    for i in range(level):
        digits.append(str((node >> (2 * (level - 1 - i))) & 3))
    return "".join(digits) if digits else "root"


def tree_to_csv(tree: Tree, path: str, y_levels=None, z1_levels=None,
                z2_levels=None, exercised_levels=None) -> None:
    """Dump node states (and solve values, if given) to CSV."""
    times = tree.grid.times
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "t", "S", "V", "y", "z1", "z2", "exercised"])
        for level in range(tree.grid.N + 1):
            s, v = tree.s_levels[level], tree.v_levels[level]
            for node in range(s.size):
                y = y_levels[level][node] if y_levels is not None else ""
                has_z = z1_levels is not None and level < len(z1_levels) \
                    and z1_levels[level] is not None
                z1 = z1_levels[level][node] if has_z else ""
                z2 = z2_levels[level][node] if has_z else ""
                ex = ""
                if exercised_levels is not None and level < len(exercised_levels) \
                        and exercised_levels[level] is not None:
                    ex = int(exercised_levels[level][node])
                writer.writerow([_node_path_string(level, node),
                                 repr(float(times[level])), repr(float(s[node])),
                                 repr(float(v[node])), y, z1, z2, ex])
