import numpy as np
import pytest

from riskdiff import (Payoff, TimeGrid, arctangent_model, build_tree,
                      effective_driver, entropic_driver, oracle_price,
                      simulate)
from riskdiff.errors import TreeSizeError
from riskdiff.oracle import (enumerate_stopping_values, oracle_bsde,
                             oracle_reflected, payoff_levels, tree_path_bundle,
                             tree_to_csv)
from riskdiff.risk import Driver

from conftest import fig1_model


def test_tree_sizes(model):
    grid = TimeGrid(T=0.25, N=3)
    tree = build_tree(model, grid)
    for i in range(4):
        assert tree.s_levels[i].size == 4 ** i
        assert tree.v_levels[i].size == 4 ** i
    assert tree.s_levels[0][0] == model.s0
    assert tree.v_levels[0][0] == model.v0


def test_tree_size_cap(model):
    with pytest.raises(TreeSizeError):
        build_tree(model, TimeGrid(T=0.25, N=9))


def test_branch_moments_exact(model):
    # the 4-point measure matches mean, variance and correlation of the
    # Brownian increments exactly
    grid = TimeGrid(T=0.25, N=2)
    tree = build_tree(model, grid)
    dt = grid.dt
    w1, w2 = tree.dw1_branch, tree.dw2_branch
    assert abs(w1.mean()) < 1e-15
    assert abs(w2.mean()) < 1e-15
    assert abs(np.mean(w1 * w1) - dt) < 1e-15
    assert abs(np.mean(w2 * w2) - dt) < 1e-14
    assert abs(np.mean(w1 * w2) - model.rho * dt) < 1e-15


def test_zero_payoff_prices_to_zero(model, driver):
    grid = TimeGrid(T=0.25, N=3)
    payoff = Payoff(kind="zero")
    for side in ("buyer", "seller"):
        res = oracle_price(side, model, grid, payoff, driver)
        assert res.price == 0.0


def test_bsde_linear_driver_closed_form(model):
    # with g* = 0 and mu = r the recursion is a plain expectation, so a
    # terminal equal to a constant propagates unchanged
    zero = Driver(g=lambda z1, z2: np.zeros_like(np.asarray(z1, float)),
                  g_star=lambda z, z2: np.zeros_like(np.asarray(z, float)))
    m0 = fig1_model(mu=model.r)
    grid = TimeGrid(T=0.25, N=4)
    tree = build_tree(m0, grid)
    eff = effective_driver("seller", zero, m0)
    y, _, _ = oracle_bsde(tree, eff, np.full(4 ** 4, 3.25))
    assert abs(float(y[0][0]) - 3.25) < 1e-12


def test_snell_duality():
    # with a vanishing driver the reflected solve is the Snell envelope:
    # its root value equals the best of ALL adapted stopping rules
    zero = Driver(g=lambda z1, z2: np.zeros_like(np.asarray(z1, float)),
                  g_star=lambda z, z2: np.zeros_like(np.asarray(z, float)))
    m0 = fig1_model(mu=0.02)
    grid = TimeGrid(T=0.25, N=3)
    tree = build_tree(m0, grid)
    zl = payoff_levels(tree, Payoff(kind="american_put", strike=100.0,
                                    rate=m0.r))
    eff = effective_driver("seller", zero, m0)
    rl, _, _, ex = oracle_reflected(tree, eff, zl, zl[3])
    vals = enumerate_stopping_values(tree, zl, zl[3])
    assert abs(float(rl[0][0]) - float(vals.max())) < 1e-12
    # at least one rule is strictly worse than the optimum
    assert vals.min() < vals.max()


def test_enumeration_size_cap(model):
    tree = build_tree(model, TimeGrid(T=0.25, N=4))
    with pytest.raises(TreeSizeError):
        enumerate_stopping_values(tree, [np.zeros(4 ** i) for i in range(5)],
                                  np.zeros(4 ** 4))


def test_splice_time_consistency(model, driver):
    # solving [0, T] in one pass equals solving [t_k, T] first and feeding
    # the result back as terminal data for [0, t_k]
    grid = TimeGrid(T=0.25, N=4)
    tree = build_tree(model, grid)
    for side in ("buyer", "seller"):
        eff = effective_driver(side, driver, model)
        terminal = np.zeros(4 ** 4)
        full, _, _ = oracle_bsde(tree, eff, terminal)
        for k in (1, 2, 3):
            tail, _, _ = oracle_bsde(tree, eff, terminal, start_level=k)
            head, _, _ = oracle_bsde(tree, eff, tail[0], end_level=k)
            assert np.max(np.abs(head[0] - full[0])) < 1e-10


def test_reflected_dominates_barrier(model, driver):
    grid = TimeGrid(T=0.25, N=4)
    tree = build_tree(model, grid)
    payoff = Payoff(kind="american_put", strike=100.0, rate=model.r)
    zl = payoff_levels(tree, payoff)
    eff = effective_driver("seller", driver, model)
    y, _, _ = oracle_bsde(tree, eff, np.zeros(4 ** 4))
    barrier = [zl[i] + y[i] for i in range(5)]
    rl, _, _, ex = oracle_reflected(tree, eff, barrier, zl[4])
    for i in range(4):
        assert np.min(rl[i] - barrier[i]) >= -1e-12
        # flagged nodes sit exactly on the barrier (Skorokhod condition)
        on = ex[i]
        if on.any():
            assert np.max(np.abs(rl[i][on] - barrier[i][on])) < 1e-12


def test_tree_path_bundle_consistency(model):
    grid = TimeGrid(T=0.25, N=3)
    tree = build_tree(model, grid)
    bundle, node_index = tree_path_bundle(tree)
    assert bundle.n_paths == 64
    assert bundle.s.shape == (64, 4)
    # every path's states coincide with its tree nodes
    for i in range(4):
        assert np.array_equal(bundle.s[:, i], tree.s_levels[i][node_index[:, i]])
    # each leaf node appears exactly once
    assert sorted(node_index[:, 3]) == list(range(64))
    # path-wise increments reproduce the child relation
    from riskdiff.model import euler_step
    s_next, v_next = euler_step(model, bundle.s[:, 1], bundle.v[:, 1],
                                bundle.dw1[:, 1], bundle.dw2[:, 1], grid.dt)
    assert np.max(np.abs(s_next - bundle.s[:, 2])) < 1e-12


def test_oracle_matches_bundle_group_means(model, driver):
    # conditional expectations computed as group means over the enumerated
    # path bundle equal the tree recursion input (sanity of the table route)
    grid = TimeGrid(T=0.25, N=3)
    tree = build_tree(model, grid)
    bundle, node_index = tree_path_bundle(tree)
    eff = effective_driver("buyer", driver, model)
    y, _, _ = oracle_bsde(tree, eff, np.zeros(64))
    # group paths by their level-1 node and average the level-2 values
    y2_on_paths = y[2][node_index[:, 2]]
    for node in range(4):
        mask = node_index[:, 1] == node
        child = y2_on_paths[mask]
        # f contribution aside, the mean over the node's 16 paths equals
        # the mean over its 4 children
        kids = y[2][4 * node: 4 * node + 4]
        assert abs(child.mean() - kids.mean()) < 1e-12


def test_tree_to_csv(model, driver, tmp_path):
    import csv as _csv
    grid = TimeGrid(T=0.25, N=2)
    tree = build_tree(model, grid)
    eff = effective_driver("seller", driver, model)
    y, z1, z2 = oracle_bsde(tree, eff, np.zeros(16))
    p = str(tmp_path / "tree.csv")
    tree_to_csv(tree, p, y_levels=y, z1_levels=z1, z2_levels=z2)
    with open(p) as fh:
        rows = list(_csv.reader(fh))
    assert rows[0][0] == "node"
    assert len(rows) == 1 + 1 + 4 + 16
    assert rows[1][0] == "root"
    # repr round trip of the stored state
    assert float(rows[1][2]) == model.s0
