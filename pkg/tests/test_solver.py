import csv as _csv
import os

import numpy as np
import pytest

from riskdiff import (NetConfig, NetScheme, Payoff, PolyScheme, TableScheme,
                      TimeGrid, effective_driver, entropic_driver, payoff_path,
                      price, simulate, smile, solve_boundary_bsde,
                      solve_reflected)
from riskdiff.errors import SolverError
from riskdiff.oracle import build_tree, oracle_price, tree_path_bundle
from riskdiff.solver import (combine_ensemble, fold_estimates, joint_std_error,
                             results_to_csv, write_solution)

from conftest import fig1_model


def _tree_setup(model, n_levels=4):
    grid = TimeGrid(T=0.25, N=n_levels)
    tree = build_tree(model, grid)
    bundle, node_index = tree_path_bundle(tree)
    return grid, bundle, node_index


def test_boundary_bsde_zero_sharpe_is_zero(driver):
    # mu = r gives lam = 0; with zero terminal the controls vanish level by
    # level and the exact solve is identically zero
    m0 = fig1_model(mu=0.02)
    grid, bundle, node_index = _tree_setup(m0)
    eff = effective_driver("seller", driver, m0)
    sol = solve_boundary_bsde(bundle, eff, TableScheme(node_index))
    assert np.max(np.abs(sol.y)) < 1e-14
    assert np.max(np.abs(sol.z1)) < 1e-14
    assert np.max(np.abs(sol.z2)) < 1e-14


def test_boundary_bsde_constant_vol_closed_form():
    # a = 0 freezes sigma at b, so lam is constant; with zero terminal the
    # recursion is the explicit ODE y_i = y_{i+1} + f(lam, 0, 0) dt
    from riskdiff import arctangent_model
    m = arctangent_model(r=0.02, mu=0.08, a=0.0, b=0.3, alpha=5.0, m_level=0.0,
                         nu=1.0, rho=-0.2, s0=100.0, v0=0.15)
    driver = entropic_driver(2.0, 0.4)
    lam = (0.08 - 0.02) / 0.3
    grid, bundle, node_index = _tree_setup(m)
    for side, sign in (("seller", -1.0), ("buyer", 1.0)):
        eff = effective_driver(side, driver, m)
        sol = solve_boundary_bsde(bundle, eff, TableScheme(node_index))
        # at z1 = z2 = 0 both effective drivers reduce to -/+ lam^2/(2 gamma)
        expected = sign * lam * lam / (2.0 * 2.0) * grid.T
        assert abs(sol.value0() - expected) < 1e-12


def test_reflected_matches_oracle_price(model, driver):
    # full pricing pipeline on the enumerated tree == exact oracle
    grid, bundle, node_index = _tree_setup(model, n_levels=3)
    payoff = Payoff(kind="american_put", strike=100.0, rate=model.r)
    for side in ("buyer", "seller"):
        res = price(side, model, grid, payoff, driver, bundle.n_paths, 0,
                    lambda: TableScheme(node_index), bundle=bundle)
        exact = oracle_price(side, model, grid, payoff, driver)
        assert abs(res.price - exact.price) < 1e-10


def test_zero_payoff_prices_to_zero_mc(model, driver, grid10):
    payoff = Payoff(kind="zero")
    res = price("seller", model, grid10, payoff, driver, 2048, 0,
                lambda: PolyScheme(degree=2))
    # claim and no-claim solves are the same backward pass
    assert res.price == 0.0


def test_reflected_with_zero_claim_equals_plain(model, driver):
    # solving the reflected equation with the zero claim (barrier = Y)
    # reproduces the plain BSDE: the barrier never binds strictly
    grid, bundle, node_index = _tree_setup(model)
    payoff = Payoff(kind="zero")
    for side in ("buyer", "seller"):
        res = price(side, model, grid, payoff, driver, bundle.n_paths, 0,
                    lambda: TableScheme(node_index), bundle=bundle,
                    force_double_solve=True)
        assert res.price == 0.0


def test_deep_itm_put_floors_at_intrinsic(driver):
    # with K >> S and mu = r the buyer's driver penalizes waiting (it is
    # concave in z2), so the buyer exercises immediately and the price is
    # exactly the intrinsic value; the seller keeps at least the floor
    m0 = fig1_model(mu=0.02)
    grid, bundle, node_index = _tree_setup(m0)
    payoff = Payoff(kind="american_put", strike=1000.0, rate=m0.r)
    intrinsic = 1000.0 - m0.s0
    buyer = price("buyer", m0, grid, payoff, driver, bundle.n_paths, 0,
                  lambda: TableScheme(node_index), bundle=bundle)
    assert abs(buyer.price - intrinsic) < 1e-10
    seller = price("seller", m0, grid, payoff, driver, bundle.n_paths, 0,
                   lambda: TableScheme(node_index), bundle=bundle)
    assert seller.price >= intrinsic - 1e-10


def test_barrier_far_below_never_binds(model, driver):
    grid, bundle, node_index = _tree_setup(model)
    eff = effective_driver("seller", driver, model)
    plain = solve_boundary_bsde(bundle, eff, TableScheme(node_index))
    low = np.full_like(bundle.s, -1e9)
    low[:, -1] = 0.0  # terminal stays consistent with the plain solve
    refl = solve_reflected(bundle, eff, low, TableScheme(node_index),
                           terminal=np.zeros(bundle.n_paths))
    assert np.max(np.abs(refl.y - plain.y)) < 1e-10
    assert np.max(refl.k_increments) == 0.0


def test_terminal_below_barrier_raises(model, driver):
    grid, bundle, node_index = _tree_setup(model)
    eff = effective_driver("seller", driver, model)
    bad = np.ones_like(bundle.s)
    with pytest.raises(SolverError):
        solve_reflected(bundle, eff, bad, TableScheme(node_index),
                        terminal=np.zeros(bundle.n_paths))


def test_reflection_and_skorokhod_invariants(model, driver):
    grid, bundle, node_index = _tree_setup(model)
    eff = effective_driver("buyer", driver, model)
    payoff = Payoff(kind="american_put", strike=105.0, rate=model.r)
    zeta = payoff_path(payoff, bundle)
    ysol = solve_boundary_bsde(bundle, eff, TableScheme(node_index))
    barrier = zeta + ysol.y
    rsol = solve_reflected(bundle, eff, barrier, TableScheme(node_index),
                           terminal=zeta[:, -1])
    assert np.min(rsol.y - barrier) > -1e-10          # domination
    assert np.min(rsol.k_increments) >= 0.0           # K nondecreasing
    assert rsol.metadata["skorokhod_violations"] == 0
    assert rsol.k_increments.max() > 0.0              # the barrier does bind


def test_poly_price_within_mc_error(model, driver, grid10):
    # the quadratic-basis scheme reproduces the buyer price at coarse
    # tolerance; exactness is certified on the tree, this guards the MC path
    payoff = Payoff(kind="american_put", strike=100.0, rate=model.r)
    res = price("buyer", model, grid10, payoff, driver, 4096, 0,
                lambda: PolyScheme(degree=2))
    assert np.isfinite(res.price)
    assert 0.0 < res.price < 25.0
    assert res.mc_std_error > 0.0


def test_price_determinism_and_seed_sensitivity(model, driver, grid10):
    payoff = Payoff(kind="american_put", strike=100.0, rate=model.r)
    kwargs = dict(n_paths=1024, seed=3, scheme_factory=lambda: PolyScheme())
    a = price("seller", model, grid10, payoff, driver, **kwargs)
    b = price("seller", model, grid10, payoff, driver, **kwargs)
    assert a.price == b.price
    c = price("seller", model, grid10, payoff, driver, 1024, 4,
              lambda: PolyScheme())
    assert c.price != a.price


def test_smile_shape_and_ordering(model, driver):
    grid, bundle, node_index = _tree_setup(model, n_levels=3)
    strikes = [90.0, 100.0, 110.0]
    out = smile(["buyer", "seller"], model, grid, strikes, driver,
                bundle.n_paths, 0, lambda: TableScheme(node_index))
    for style in ("american", "european"):
        for side in ("buyer", "seller"):
            res = out[style][side]
            assert [r.strike for r in res] == strikes
    buyer = [r.price for r in out["american"]["buyer"]]
    seller = [r.price for r in out["american"]["seller"]]
    assert all(s >= b - 1e-12 for s, b in zip(seller, buyer))
    assert np.all(np.diff(buyer) > 0)  # put value grows with the strike


def test_smile_thread_cap_determinism(model, driver):
    grid, bundle, node_index = _tree_setup(model, n_levels=3)
    strikes = [95.0, 105.0]
    old = os.environ.get("RISKDIFF_THREADS")
    try:
        os.environ["RISKDIFF_THREADS"] = "1"
        a = smile(["buyer"], model, grid, strikes, driver, bundle.n_paths, 0,
                  lambda: TableScheme(node_index))
        os.environ["RISKDIFF_THREADS"] = "4"
        b = smile(["buyer"], model, grid, strikes, driver, bundle.n_paths, 0,
                  lambda: TableScheme(node_index))
    finally:
        if old is None:
            os.environ.pop("RISKDIFF_THREADS", None)
        else:
            os.environ["RISKDIFF_THREADS"] = old
    for ra, rb in zip(a["american"]["buyer"], b["american"]["buyer"]):
        assert ra.price == rb.price


def test_jackknife_error_scales(model, driver, grid10):
    payoff = Payoff(kind="american_put", strike=100.0, rate=model.r)
    small = price("buyer", model, grid10, payoff, driver, 1024, 0,
                  lambda: PolyScheme())
    big = price("buyer", model, grid10, payoff, driver, 8192, 0,
                lambda: PolyScheme())
    # error bar shrinks roughly like 1/sqrt(n); allow generous slack
    assert big.mc_std_error < small.mc_std_error
    folds = fold_estimates(small)
    assert len(folds) == 10
    assert abs(np.mean(folds) - small.price) < 5 * small.mc_std_error


def test_joint_std_error_requires_shared_bundle(model, driver, grid10):
    payoff = Payoff(kind="american_put", strike=100.0, rate=model.r)
    a = price("buyer", model, grid10, payoff, driver, 1024, 0,
              lambda: PolyScheme())
    b = price("buyer", model, grid10, payoff, driver, 2048, 0,
              lambda: PolyScheme())
    with pytest.raises(ValueError):
        joint_std_error(a, b)
    # a result paired with itself has zero path error
    assert joint_std_error(a, a) < 1e-14


def test_combine_ensemble_statistics(model, driver, grid10):
    payoff = Payoff(kind="american_put", strike=100.0, rate=model.r)
    def factory_for(d):
        def factory():
            return PolyScheme(degree=d)
        return factory

    members = [price("buyer", model, grid10, payoff, driver, 1024, 0,
                     factory_for(d))
               for d in (1, 2, 3)]
    combo = combine_ensemble(members)
    assert combo.meta["ensemble"] == 3
    assert len(combo.meta["member_prices"]) == 3
    assert combo.meta["train_std_error"] > 0.0
    lo, hi = min(combo.meta["member_prices"]), max(combo.meta["member_prices"])
    assert lo - 1e-12 <= combo.price <= hi + 1e-12
    single = combine_ensemble(members[:1])
    assert single.meta["ensemble"] == 1
    assert single.meta["train_std_error"] == 0.0


def test_ensemble_member_seeds_differ(model, driver):
    # the net factory receives the member index; members must not coincide
    grid = TimeGrid(T=0.25, N=4)
    payoff = Payoff(kind="american_put", strike=100.0, rate=model.r)
    cfg = NetConfig(hidden=(8,), epochs_first=20, epochs_late=10,
                    late_window=2, batch_size=128, seed=0)
    import dataclasses as dc
    res = price("buyer", model, grid, payoff, driver, 512, 0,
                lambda member=0: NetScheme(dc.replace(cfg, seed=1000003 * member)),
                n_ensemble=2)
    assert res.meta["ensemble"] == 2
    p1, p2 = res.meta["member_prices"]
    assert p1 != p2


def test_results_to_csv(model, driver, tmp_path):
    grid, bundle, node_index = _tree_setup(model, n_levels=3)
    payoff = Payoff(kind="american_put", strike=100.0, rate=model.r)
    res = price("seller", model, grid, payoff, driver, bundle.n_paths, 0,
                lambda: TableScheme(node_index), bundle=bundle)
    p = str(tmp_path / "out.csv")
    results_to_csv([res], p)
    with open(p) as fh:
        rows = list(_csv.reader(fh))
    assert rows[0] == ["strike", "side", "price", "risk_with_claim",
                       "risk_without", "mc_std_error", "N", "n_paths", "seed",
                       "regressor_kind"]
    assert float(rows[1][2]) == res.price  # repr round trip


def test_write_solution_binary_layout(model, driver, tmp_path):
    import struct
    grid, bundle, node_index = _tree_setup(model, n_levels=2)
    eff = effective_driver("seller", driver, model)
    sol = solve_boundary_bsde(bundle, eff, TableScheme(node_index))
    p = str(tmp_path / "sol.rdbs")
    write_solution(sol, p, seed=7, stream_id=1)
    with open(p, "rb") as fh:
        magic, version, seed, stream, n, paths = struct.unpack(
            "<4sIqqqq", fh.read(40))
        body = np.frombuffer(fh.read(), dtype="<f8")
    assert magic == b"RDBS" and version == 1
    assert (seed, stream, n, paths) == (7, 1, 2, 16)
    y = body[: 16 * 3].reshape(16, 3)
    assert np.array_equal(y, sol.y)
