"""Command-line front end: experiment configs, smile runs, reports.

Subcommands
    smile      strike sweep -> smile.csv, panel data files, optional SVG
    price      one strike, one side -> key=value line
    validate   driver certification + oracle agreement + property suite
    simulate   dump a path bundle to a binary cache file
    oracle     dump tree nodes (and solve values) to CSV

Exit codes: 0 success, 2 bad config/arguments, 3 solver failure,
4 validation failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import json
import os
import sys

import numpy as np
import jsonschema

from .approx import NetConfig
from .errors import (FitError, InversionError, ParameterError, RiskdiffError,
                     SolverError, TrainingDivergedError, TreeSizeError)
from .model import Payoff, TimeGrid, arctangent_model, simulate, write_bundle
from .oracle import (build_tree, oracle_price, payoff_levels, oracle_bsde,
                     oracle_reflected, tree_path_bundle, tree_to_csv)
from .quote import Quote, implied_vol, log_moneyness
from .risk import Driver, effective_driver, entropic_driver, validate_driver
from .solver import (NetScheme, PolyScheme, TableScheme, joint_std_error,
                     price, results_to_csv, smile)

__all__ = ["main", "build_config", "run_smile", "run_price", "run_validate",
           "PRESETS"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_VALIDATION = 4


# ---------------------------------------------------------------------------
# configuration

PRESETS = {
    # parameter-faithful reproduction profile
    "paper-fig1": {
        "model": {"r": 0.02, "mu": 0.08, "a": 0.7, "b": 0.03, "alpha": 5.0,
                  "m": 0.0, "nu": 1.0, "rho": -0.2, "s0": 100.0, "v0": 0.15},
        "grid": {"T": 0.25, "N": 10},
        "driver": {"family": "entropic", "gamma": 1.0, "eta": 0.2},
        "payoff": {"kind": "american_put",
                   "strikes": [85.0, 90.0, 95.0, 100.0, 105.0, 110.0, 115.0]},
        "solver": {"regressor": "net", "n_paths": 8192, "seed": 0,
                   "ensemble": 3,
                   "net": {"hidden": [32, 32], "epochs_first": 1000,
                           "epochs_late": 300, "late_window": 5,
                           "batch_size": 1100, "learning_rate": 0.01},
                   "poly_degree": 2},
        "output": {"dir": ".", "svg": False},
    },
}

# desk-scale profile: same market, shorter training, fewer paths
PRESETS["paper-fig1-lite"] = copy.deepcopy(PRESETS["paper-fig1"])
PRESETS["paper-fig1-lite"]["solver"]["n_paths"] = 4096
PRESETS["paper-fig1-lite"]["solver"]["net"]["epochs_first"] = 200
PRESETS["paper-fig1-lite"]["solver"]["net"]["epochs_late"] = 100

_NUM = {"type": "number"}
CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "grid", "driver", "payoff", "solver"],
    "properties": {
        "model": {
            "type": "object", "additionalProperties": False,
            "required": ["r", "mu", "a", "b", "alpha", "m", "nu", "rho",
                         "s0", "v0"],
            "properties": {k: _NUM for k in
                           ("r", "mu", "a", "b", "alpha", "m", "nu", "rho",
                            "s0", "v0")},
        },
        "grid": {
            "type": "object", "additionalProperties": False,
            "required": ["T", "N"],
            "properties": {"T": {"type": "number", "exclusiveMinimum": 0},
                           "N": {"type": "integer", "minimum": 1}},
        },
        "driver": {
            "type": "object", "additionalProperties": False,
            "required": ["family"],
            "properties": {"family": {"enum": ["entropic", "quartic"]},
                           "gamma": {"type": "number", "exclusiveMinimum": 0},
                           "eta": _NUM},
        },
        "payoff": {
            "type": "object", "additionalProperties": False,
            "required": ["kind", "strikes"],
            "properties": {
                "kind": {"enum": ["american_put", "american_call", "zero"]},
                "strikes": {"type": "array", "minItems": 1,
                            "items": _NUM},
            },
        },
        "solver": {
            "type": "object", "additionalProperties": False,
            "required": ["regressor", "n_paths", "seed"],
            "properties": {
                "regressor": {"enum": ["poly", "net", "table"]},
                "n_paths": {"type": "integer", "minimum": 2},
                "seed": {"type": "integer", "minimum": 0},
                "ensemble": {"type": "integer", "minimum": 1},
                "poly_degree": {"type": "integer", "minimum": 0, "maximum": 4},
                "net": {
                    "type": "object", "additionalProperties": False,
                    "properties": {
                        "hidden": {"type": "array",
                                   "items": {"type": "integer", "minimum": 1}},
                        "epochs_first": {"type": "integer", "minimum": 1},
                        "epochs_late": {"type": "integer", "minimum": 1},
                        "late_window": {"type": "integer", "minimum": 0},
                        "batch_size": {"type": "integer", "minimum": 1},
                        "learning_rate": {"type": "number",
                                          "exclusiveMinimum": 0},
                    },
                },
            },
        },
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {"dir": {"type": "string"},
                           "svg": {"type": "boolean"}},
        },
    },
}


class ConfigError(Exception):
    pass


def build_config(args) -> dict:
    """Assemble the experiment config from preset/file plus flag overrides."""
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON "
                              f"(line {exc.lineno}, col {exc.colno}): {exc.msg}")
    else:
        cfg = copy.deepcopy(PRESETS[args.preset])

    if getattr(args, "seed", None) is not None:
        cfg.setdefault("solver", {})["seed"] = args.seed
    if getattr(args, "regressor", None):
        cfg.setdefault("solver", {})["regressor"] = args.regressor
    if getattr(args, "out_dir", None):
        cfg.setdefault("output", {})["dir"] = args.out_dir
    cfg.setdefault("output", {"dir": ".", "svg": False})
    if getattr(args, "svg", False):
        cfg["output"]["svg"] = True

    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "$" + "".join(f"[{p!r}]" for p in exc.absolute_path)
        raise ConfigError(f"config field {where}: {exc.message}")
    return cfg


def _model_from(cfg):
    m = cfg["model"]
    return arctangent_model(r=m["r"], mu=m["mu"], a=m["a"], b=m["b"],
                            alpha=m["alpha"], m_level=m["m"], nu=m["nu"],
                            rho=m["rho"], s0=m["s0"], v0=m["v0"])


def _grid_from(cfg):
    return TimeGrid(T=cfg["grid"]["T"], N=cfg["grid"]["N"])


def _quartic_test_driver() -> Driver:
    # deliberately outside the admissible class: quartic growth in z1
    def g(z1, z2):
        z1 = np.asarray(z1, dtype=float)
        z2 = np.asarray(z2, dtype=float)
        return 0.5 * (z1 ** 4 + z2 * z2)

    def g_star(zeta, z2):
        zeta = np.asarray(zeta, dtype=float)
        z2 = np.asarray(z2, dtype=float)
        # sup_z1 (zeta z1 - z1^4 / 2) attained at z1 = cbrt(zeta / 2)
        return 0.75 * zeta * np.cbrt(zeta / 2.0) - 0.5 * z2 * z2

    return Driver(g=g, g_star=g_star, params={"family": "quartic"})


def _driver_from(cfg) -> Driver:
    d = cfg["driver"]
    if d["family"] == "entropic":
        return entropic_driver(d.get("gamma", 1.0), d.get("eta", 0.0))
    return _quartic_test_driver()


def _scheme_factory_from(cfg, tree_node_index=None):
    s = cfg["solver"]
    kind = s["regressor"]
    if kind == "poly":
        degree = s.get("poly_degree", 2)
        return lambda member=0: PolyScheme(degree=degree)
    if kind == "net":
        n = s.get("net", {})
        nc = NetConfig(hidden=tuple(n.get("hidden", (32, 32))),
                       epochs_first=n.get("epochs_first", 1000),
                       epochs_late=n.get("epochs_late", 300),
                       late_window=n.get("late_window", 5),
                       batch_size=n.get("batch_size", 1100),
                       learning_rate=n.get("learning_rate", 0.01),
                       seed=s["seed"])
        return lambda member=0: NetScheme(
            dataclasses.replace(nc, seed=nc.seed + 1000003 * member))
    if tree_node_index is None:
        raise ConfigError("table regressor requires a tree path space "
                          "(grid N <= 8); use it with small N only")
    return lambda member=0: TableScheme(tree_node_index)


def _ensemble_from(cfg) -> int:
    s = cfg["solver"]
    # deterministic backends gain nothing from repeated training
    return s.get("ensemble", 1) if s["regressor"] == "net" else 1


def _sides_from(args):
    return ["buyer", "seller"] if args.side == "both" else [args.side]


# ---------------------------------------------------------------------------
# smile

def _run_smile_results(cfg, sides):
    """Price the strike sweep; returns the smile() result dictionary."""
    model = _model_from(cfg)
    grid = _grid_from(cfg)
    driver = _driver_from(cfg)
    s = cfg["solver"]
    if s["regressor"] == "table":
        # exact pricing on the enumerated tree path space
        tree = build_tree(model, grid)
        bundle, node_index = tree_path_bundle(tree)
        factory = _scheme_factory_from(cfg, node_index)
        out = {"american": {}, "european": {}}
        for side in sides:
            for style in ("american", "european"):
                res = []
                for k in cfg["payoff"]["strikes"]:
                    payoff = Payoff(kind=cfg["payoff"]["kind"], strike=k,
                                    rate=model.r)
                    res.append(price(side, model, grid, payoff, driver,
                                     bundle.n_paths, s["seed"], factory,
                                     style=style, bundle=bundle))
                out[style][side] = res
        return out
    factory = _scheme_factory_from(cfg)
    return smile(sides, model, grid, cfg["payoff"]["strikes"], driver,
                 s["n_paths"], s["seed"], factory,
                 payoff_kind=cfg["payoff"]["kind"],
                 n_ensemble=_ensemble_from(cfg))


def _iv_or_blank(model, grid, strike, px):
    q = Quote(spot=model.s0, strike=strike, rate=model.r, maturity=grid.T,
              price=px, side="put")
    try:
        return implied_vol(q), log_moneyness(q)
    except InversionError:
        return None, log_moneyness(q)


_SMILE_COLUMNS = ["strike", "log_moneyness", "price_buyer", "price_seller",
                  "iv_buyer", "iv_seller", "stderr_buyer", "stderr_seller"]


def _smile_rows(cfg, out, sides):
    model = _model_from(cfg)
    grid = _grid_from(cfg)
    rows = []
    for idx, k in enumerate(cfg["payoff"]["strikes"]):
        row = {"strike": k}
        for side in sides:
            res = out["american"][side][idx]
            iv, lm = _iv_or_blank(model, grid, k, res.price)
            row["log_moneyness"] = lm
            row[f"price_{side}"] = res.price
            row[f"iv_{side}"] = iv
            row[f"stderr_{side}"] = res.mc_std_error
        rows.append(row)
    return rows


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_smile_csv(path, rows, footer_lines=()):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_SMILE_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in _SMILE_COLUMNS])
        for line in footer_lines:
            fh.write(line + "\r\n")


def _comparison_footer(rows, other_csv):
    """Per-strike price deltas against a previously written smile.csv."""
    other = {}
    with open(other_csv, newline="") as fh:
        for rec in csv.DictReader(fh):
            if not rec.get("strike") or rec["strike"].startswith("#"):
                continue
            other[float(rec["strike"])] = rec
    lines = [f"# comparison vs {os.path.basename(other_csv)}"]
    for row in rows:
        k = row["strike"]
        if k not in other:
            continue
        parts = [f"K={k:g}"]
        for side in ("buyer", "seller"):
            mine = row.get(f"price_{side}")
            theirs = other[k].get(f"price_{side}")
            if mine is None or theirs in (None, ""):
                continue
            parts.append(f"|dprice_{side}|={abs(mine - float(theirs))!r}")
        lines.append("# " + " ".join(parts))
    return lines


def _write_panel(path, xs, ys):
    """Two-column numeric text, one (x, y) pair per line."""
    with open(path, "w") as fh:
        for x, y in zip(xs, ys):
            if y is None:
                continue
            fh.write(f"{x!r} {y!r}\n")


def write_panels(out_dir, cfg, out, rows, sides):
    strikes = [row["strike"] for row in rows]
    lms = [row["log_moneyness"] for row in rows]
    written = []

    def emit(name, xs, ys):
        p = os.path.join(out_dir, name)
        _write_panel(p, xs, ys)
        written.append(p)

    for side in sides:
        emit(f"panel1_price_{side}.txt", strikes,
             [row[f"price_{side}"] for row in rows])
    for side in sides:
        emit(f"panel2_iv_{side}.txt", lms,
             [row.get(f"iv_{side}") for row in rows])
    panel3_side = "buyer" if "buyer" in sides else sides[0]
    emit(f"panel3_american_{panel3_side}.txt", strikes,
         [r.price for r in out["american"][panel3_side]])
    emit(f"panel3_european_{panel3_side}.txt", strikes,
         [r.price for r in out["european"][panel3_side]])
    return written


def _svg_plot(path, series, title):
    """Self-contained SVG line plot; series is {label: (xs, ys)}."""
    w, h, pad = 640, 420, 50
    pts = [(x, y) for xs, ys in series.values()
           for x, y in zip(xs, ys) if y is not None]
    if not pts:
        return
    x_lo = min(p[0] for p in pts)
    x_hi = max(p[0] for p in pts)
    y_lo = min(p[1] for p in pts)
    y_hi = max(p[1] for p in pts)
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0

    def sx(x):
        return pad + (x - x_lo) / x_span * (w - 2 * pad)

    def sy(y):
        return h - pad - (y - y_lo) / y_span * (h - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" '
             f'height="{h}" viewBox="0 0 {w} {h}">',
             f'<rect width="{w}" height="{h}" fill="white"/>',
             f'<text x="{w / 2}" y="20" text-anchor="middle" '
             f'font-family="sans-serif" font-size="14">{title}</text>',
             f'<line x1="{pad}" y1="{h - pad}" x2="{w - pad}" y2="{h - pad}" '
             f'stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{h - pad}" '
             f'stroke="black"/>']
    for j, (label, (xs, ys)) in enumerate(series.items()):
        color = colors[j % len(colors)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}"
                          for x, y in zip(xs, ys) if y is not None)
        parts.append(f'<polyline points="{coords}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{w - pad - 120}" y="{pad + 16 * j}" '
                     f'font-family="sans-serif" font-size="12" '
                     f'fill="{color}">{label}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))


def run_smile(cfg, sides, compare_with=None):
    out_dir = cfg["output"]["dir"]
    os.makedirs(out_dir, exist_ok=True)
    out = _run_smile_results(cfg, sides)
    rows = _smile_rows(cfg, out, sides)

    footer = []
    if compare_with:
        footer = _comparison_footer(rows, compare_with)
    csv_path = os.path.join(out_dir, "smile.csv")
    write_smile_csv(csv_path, rows, footer)
    written = [csv_path] + write_panels(out_dir, cfg, out, rows, sides)

    if cfg["output"].get("svg"):
        strikes = [row["strike"] for row in rows]
        series = {f"price_{side}": (strikes,
                                    [row[f"price_{side}"] for row in rows])
                  for side in sides}
        svg_path = os.path.join(out_dir, "smile.svg")
        _svg_plot(svg_path, series, "indifference prices vs strike")
        written.append(svg_path)
    return written, out, rows


# ---------------------------------------------------------------------------
# price / validate / simulate / oracle

def run_price(cfg, side, strike, csv_path=None):
    model = _model_from(cfg)
    grid = _grid_from(cfg)
    driver = _driver_from(cfg)
    s = cfg["solver"]
    payoff = Payoff(kind=cfg["payoff"]["kind"], strike=strike, rate=model.r)
    if s["regressor"] == "table":
        tree = build_tree(model, grid)
        bundle, node_index = tree_path_bundle(tree)
        factory = _scheme_factory_from(cfg, node_index)
        res = price(side, model, grid, payoff, driver, bundle.n_paths,
                    s["seed"], factory, bundle=bundle)
    else:
        factory = _scheme_factory_from(cfg)
        res = price(side, model, grid, payoff, driver, s["n_paths"],
                    s["seed"], factory, n_ensemble=_ensemble_from(cfg))
    if csv_path:
        results_to_csv([res], csv_path)
    return res


def _oracle_property_report(cfg, strikes):
    """Exact spread / floor / monotonicity / early-exercise checks at N=4."""
    model = _model_from(cfg)
    driver = _driver_from(cfg)
    grid = TimeGrid(T=cfg["grid"]["T"], N=4)
    report = {"N": grid.N, "strikes": list(strikes), "checks": {}}
    prices = {}
    for side in ("buyer", "seller"):
        for style in ("american", "european"):
            prices[(side, style)] = []
            for k in strikes:
                payoff = Payoff(kind="american_put", strike=k, rate=model.r)
                prices[(side, style)].append(
                    oracle_price(side, model, grid, payoff, driver,
                                 style=style).price)

    tol = 1e-12
    spread = [s - b for s, b in zip(prices[("seller", "american")],
                                    prices[("buyer", "american")])]
    report["checks"]["spread_nonnegative"] = bool(min(spread) >= -tol)
    floors = [(k - model.s0) if k > model.s0 else 0.0 for k in strikes]
    report["checks"]["price_floors"] = bool(all(
        prices[(side, "american")][j] >= floors[j] - tol
        for side in ("buyer", "seller") for j in range(len(strikes))))
    report["checks"]["strike_monotone"] = bool(all(
        np.all(np.diff(prices[(side, "american")]) >= -tol)
        for side in ("buyer", "seller")))
    # Reflection raises node values, but a driver that is nonlinear in z2
    # can transmit that increase with a sign flip, so the discrete
    # American-vs-European ordering holds only up to an O(dt) term.
    am_eu_tol = 1e-2
    report["checks"]["american_dominates_european"] = bool(all(
        prices[(side, "american")][j]
        >= prices[(side, "european")][j] - am_eu_tol
        for side in ("buyer", "seller") for j in range(len(strikes))))
    report["prices"] = {f"{side}_{style}": vals
                        for (side, style), vals in prices.items()}
    return report


def _oracle_agreement_report(cfg):
    """Table-regressor solve on the tree path space vs the oracle, N=3."""
    model = _model_from(cfg)
    driver = _driver_from(cfg)
    grid = TimeGrid(T=cfg["grid"]["T"], N=3)
    tree = build_tree(model, grid)
    bundle, node_index = tree_path_bundle(tree)
    payoff = Payoff(kind="american_put", strike=100.0, rate=model.r)
    worst = 0.0
    for side in ("buyer", "seller"):
        solver_px = price(side, model, grid, payoff, driver, bundle.n_paths,
                          0, lambda: TableScheme(node_index),
                          bundle=bundle).price
        oracle_px = oracle_price(side, model, grid, payoff, driver).price
        worst = max(worst, abs(solver_px - oracle_px))
    return {"N": grid.N, "max_abs_diff": worst, "passed": bool(worst < 1e-10)}


def run_validate(cfg):
    out_dir = cfg["output"]["dir"]
    os.makedirs(out_dir, exist_ok=True)
    driver = _driver_from(cfg)

    report = validate_driver(driver)
    summary = {"driver": json.loads(report.to_json()),
               "driver_passed": report.passed()}
    ok = report.passed()

    if ok and cfg["driver"]["family"] == "entropic":
        agreement = _oracle_agreement_report(cfg)
        props = _oracle_property_report(cfg, strikes=(85.0, 100.0, 115.0))
        summary["oracle_agreement"] = agreement
        summary["properties"] = props
        ok = agreement["passed"] and all(props["checks"].values())
    summary["passed"] = bool(ok)

    path = os.path.join(out_dir, "validation.json")
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary, path


def run_simulate(cfg, out_path):
    model = _model_from(cfg)
    grid = _grid_from(cfg)
    s = cfg["solver"]
    bundle = simulate(model, grid, s["n_paths"], s["seed"])
    write_bundle(bundle, out_path)
    return bundle


def run_oracle(cfg, side, strike, out_path):
    model = _model_from(cfg)
    driver = _driver_from(cfg)
    n = min(cfg["grid"]["N"], 4)
    grid = TimeGrid(T=cfg["grid"]["T"], N=n)
    tree = build_tree(model, grid)
    eff = effective_driver(side, driver, model)
    payoff = Payoff(kind=cfg["payoff"]["kind"], strike=strike, rate=model.r)
    zeta = payoff_levels(tree, payoff)
    y_levels, _, _ = oracle_bsde(tree, eff, np.zeros(4 ** grid.N))
    barrier = [zeta[i] + y_levels[i] for i in range(grid.N + 1)]
    y, z1, z2, ex = oracle_reflected(tree, eff, barrier, zeta[grid.N])
    tree_to_csv(tree, out_path, y_levels=y, z1_levels=z1, z2_levels=z2,
                exercised_levels=ex)
    return grid


# ---------------------------------------------------------------------------
# argument parsing and dispatch

def _add_common(p):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--preset", choices=sorted(PRESETS),
                   default="paper-fig1-lite",
                   help="named parameter bundle (ignored if --config given)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--regressor", choices=["poly", "net", "table"],
                   default=None)
    p.add_argument("--side", choices=["buyer", "seller", "both"],
                   default="both")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="riskdiff",
        description="Buyer's and seller's risk-indifference prices for "
                    "American options under stochastic volatility.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("smile", help="price a strike sweep")
    _add_common(p)
    p.add_argument("--svg", action="store_true",
                   help="also write a self-contained SVG plot")
    p.add_argument("--compare-with", default=None, metavar="CSV",
                   help="append a per-strike price-delta footer vs this "
                        "previously written smile.csv")

    p = sub.add_parser("price", help="price a single strike")
    _add_common(p)
    p.add_argument("--strike", type=float, required=True)
    p.add_argument("--csv", default=None, help="also write a one-row CSV")

    p = sub.add_parser("validate", help="driver and solver property reports")
    _add_common(p)

    p = sub.add_parser("simulate", help="dump a simulated path bundle")
    _add_common(p)
    p.add_argument("--out", default=None, help="bundle file (default "
                                               "<out-dir>/paths.rdpb)")

    p = sub.add_parser("oracle", help="dump tree node values to CSV")
    _add_common(p)
    p.add_argument("--strike", type=float, default=100.0)
    p.add_argument("--out", default=None, help="CSV file (default "
                                               "<out-dir>/oracle.csv)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = build_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    sides = _sides_from(args)
    try:
        if args.command == "smile":
            written, _, _ = run_smile(cfg, sides,
                                      compare_with=args.compare_with)
            for path in written:
                print(f"wrote {path}")
            return EXIT_OK

        if args.command == "price":
            if args.side == "both":
                print("config error: price needs --side buyer or seller",
                      file=sys.stderr)
                return EXIT_CONFIG
            res = run_price(cfg, args.side, args.strike, csv_path=args.csv)
            print(f"side={res.side} strike={res.strike:g} "
                  f"price={res.price!r} "
                  f"risk_with_claim={res.risk_with_claim!r} "
                  f"risk_without={res.risk_without!r} "
                  f"std_error={res.mc_std_error!r} "
                  f"regressor={res.meta.get('regressor_kind')} "
                  f"seed={res.meta.get('seed')}")
            return EXIT_OK

        if args.command == "validate":
            summary, path = run_validate(cfg)
            print(f"wrote {path}")
            print("validation " + ("passed" if summary["passed"]
                                   else "FAILED"))
            return EXIT_OK if summary["passed"] else EXIT_VALIDATION

        if args.command == "simulate":
            out_dir = cfg["output"]["dir"]
            os.makedirs(out_dir, exist_ok=True)
            out = args.out or os.path.join(out_dir, "paths.rdpb")
            bundle = run_simulate(cfg, out)
            print(f"wrote {out} ({bundle.n_paths} paths, "
                  f"{bundle.grid.N} steps)")
            return EXIT_OK

        if args.command == "oracle":
            if args.side == "both":
                print("config error: oracle needs --side buyer or seller",
                      file=sys.stderr)
                return EXIT_CONFIG
            out_dir = cfg["output"]["dir"]
            os.makedirs(out_dir, exist_ok=True)
            out = args.out or os.path.join(out_dir, "oracle.csv")
            grid = run_oracle(cfg, args.side, args.strike, out)
            print(f"wrote {out} (N={grid.N})")
            return EXIT_OK
    except (ParameterError, ConfigError, TreeSizeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, TrainingDivergedError, FitError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except RiskdiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
