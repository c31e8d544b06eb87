"""Batch command line front end.

Subcommands::

    modphi tail    --portfolio P --method M [--order r] --x 120[,130,...]
    modphi var-es  --portfolio P --method M [--order r] --alpha 0.95,0.99
    modphi cdo     --portfolio P --method M [--order r] [--tranches T.json]
                   [--maturity 5 --freq 4 --rate 0.03]
    modphi bench   PRESET

``--portfolio`` takes a JSON file or one of the built-in names
``risk-benchmark`` and ``cdo-benchmark``. Results go to ``--output`` (default
stdout) as CSV or JSON. Exit status is 2 for configuration errors, 3 for
numerical failures and 4 when a memory budget would be exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import benchmarks as bm
from .cdo import STANDARD_TRANCHES, PaymentSchedule, load_tranches, price_tranches
from .engines import Engine, TAIL_METHODS, mixed_calls, mixed_tail, tail
from .errors import InputError, ModPhiError, NumericError, ResourceError
from .estimators import mc_loss_distribution
from .model import Portfolio, default_quadrature, load_portfolio
from .risk import es_from_pmf, risk_report, var_from_pmf

__all__ = ["main", "run", "COLUMNS", "PRESETS"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_RESOURCE = 0, 2, 3, 4

COLUMNS = {
    "tail": ["method", "order", "x", "estimate", "std_error", "runs", "seconds"],
    "var-es": ["method", "order", "alpha", "var", "es", "seconds"],
    "cdo": ["tranche", "attach", "detach", "default_leg_bp", "premium_leg_bp", "fair_spread_bp", "engine", "seconds"],
}
BP_COLUMNS = {"default_leg_bp", "premium_leg_bp", "fair_spread_bp", "reference_bp", "rel_error_bp"}
METHODS = ("recursive", "modpoisson", "modcompound", "ld", "stein-gauss", "stein-poisson", "mc", "is1", "is2")
ORDERED = ("modpoisson", "modcompound")
VAR_ES_METHODS = ("recursive", "modpoisson", "modcompound", "ld", "mc")
CDO_METHODS = ("recursive", "modpoisson", "modcompound", "stein-gauss", "stein-poisson")


class ConfigError(InputError):
    """A command line value is invalid; the message names the field."""


# --------------------------------------------------------------------------
# Formatting
# --------------------------------------------------------------------------


def _fmt(key: str, value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            return str(v)
        return f"{v:.4f}" if key in BP_COLUMNS else f"{v:.12g}"
    return str(value)


def _json_value(key: str, value):
    if value is None:
        return None
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        # same rounding as the CSV; JSON has no representation for nan or inf
        return float(_fmt(key, value)) if math.isfinite(value) else None
    return str(value)


def render(rows: Sequence[dict], columns: Sequence[str], fmt: str) -> str:
    """Serialise rows; CSV keeps the column order, JSON is a list of objects."""
    if fmt == "json":
        data = [{c: _json_value(c, r.get(c)) for c in columns} for r in rows]
        return json.dumps(data, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(c, r.get(c)) for c in columns])
    return buf.getvalue()


def _emit(text: str, output: str | None, stdout):
    if output is None or output == "-":
        stdout.write(text)
    else:
        Path(output).write_text(text)


# --------------------------------------------------------------------------
# Argument handling
# --------------------------------------------------------------------------


def _floats(text: str, field: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"field '{field}' must be a comma-separated list of numbers, got {text!r}") from None
    if not vals:
        raise ConfigError(f"field '{field}' is empty")
    return vals


def _engine(args) -> Engine:
    method, order = args.method, args.order
    if "(" in method:
        head, _, rest = method.partition("(")
        try:
            order = int(rest.rstrip(")"))
        except ValueError:
            raise ConfigError(f"field 'method' has a malformed order: {args.method!r}") from None
        method = head.strip()
    if method not in METHODS:
        raise ConfigError(f"field 'method' must be one of {list(METHODS)}, got {method!r}")
    if method in ORDERED:
        if order is None:
            raise ConfigError(f"field 'order' is required for method {method!r}")
        if order < 0:
            raise ConfigError(f"field 'order' must be non-negative, got {order}")
        return Engine(method, order)
    return Engine(method)


def _portfolio(text: str) -> Portfolio:
    if text in bm.BUILTIN_PORTFOLIOS:
        return bm.BUILTIN_PORTFOLIOS[text]()
    path = Path(text)
    if not path.exists():
        raise ConfigError(f"field 'portfolio': no file {text!r} and no built-in of that name")
    return load_portfolio(path)


def _quadrature(args):
    if args.nodes < 1:
        raise ConfigError(f"field 'nodes' must be positive, got {args.nodes}")
    return default_quadrature(args.nodes, args.rule)


def _check_runs(args):
    if args.runs < 1:
        raise ConfigError(f"field 'runs' must be positive, got {args.runs}")


def _seconds(args, value: float):
    return None if args.no_timing else value


def _order_of(engine: Engine):
    return engine.order if engine.method in ORDERED else None


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_tail(args, stderr) -> tuple[list[dict], list[str]]:
    engine = _engine(args)
    if engine.method not in TAIL_METHODS:
        raise ConfigError(f"field 'method': {engine.method!r} does not estimate tails")
    _check_runs(args)
    port = _portfolio(args.portfolio)
    quad = _quadrature(args)
    rows = []
    for x in _floats(args.x, "x"):
        start = time.perf_counter()
        est = tail(port, x, engine, quad, runs=args.runs, seed=args.seed)
        rows.append(
            {
                "method": engine.method,
                "order": _order_of(engine),
                "x": x,
                "estimate": est.mean,
                "std_error": est.std_error,
                "runs": est.runs,
                "seconds": _seconds(args, time.perf_counter() - start),
            }
        )
    return rows, COLUMNS["tail"]


def _mc_var_es(port, alphas, runs, seed):
    dist = mc_loss_distribution(port, runs, seed)
    return [var_from_pmf(dist, a) for a in alphas], [es_from_pmf(dist, a) for a in alphas]


def cmd_var_es(args, stderr) -> tuple[list[dict], list[str]]:
    engine = _engine(args)
    if engine.method not in VAR_ES_METHODS:
        raise ConfigError(f"field 'method': {engine.method!r} is not supported for var-es; use one of {list(VAR_ES_METHODS)}")
    alphas = _floats(args.alpha, "alpha")
    for a in alphas:
        if not 0 < a < 1:
            raise ConfigError(f"field 'alpha' values must lie in (0, 1), got {a}")
    _check_runs(args)
    port = _portfolio(args.portfolio)
    quad = _quadrature(args)
    start = time.perf_counter()
    if engine.method == "mc":
        stderr.write("note: mc var-es uses the empirical distribution and is high-variance in the tail\n")
        var, es = _mc_var_es(port, alphas, args.runs, args.seed)
    else:
        rep = risk_report(port, alphas, engine, quad)
        var, es = rep.var, rep.es
    seconds = _seconds(args, time.perf_counter() - start)
    rows = [
        {"method": engine.method, "order": _order_of(engine), "alpha": a, "var": v, "es": e, "seconds": seconds}
        for a, v, e in zip(alphas, var, es)
    ]
    return rows, COLUMNS["var-es"]


def _cdo_rows(port, tranches, sched, engine, quad, args) -> list[dict]:
    prices = price_tranches(port, tranches, sched, engine, quad)
    total = port.total_notional
    return [
        {
            "tranche": p.tranche.label,
            "attach": p.tranche.attach,
            "detach": p.tranche.detach,
            "default_leg_bp": 1e4 * p.default_leg / total,
            "premium_leg_bp": 1e4 * p.premium_leg / total,
            "fair_spread_bp": p.fair_spread_bp,
            "engine": str(engine),
            "seconds": _seconds(args, p.seconds),
        }
        for p in prices
    ]


def cmd_cdo(args, stderr) -> tuple[list[dict], list[str]]:
    engine = _engine(args)
    if engine.method == "ld":
        raise ConfigError("field 'method': ld is unstable for call spreads and is not offered for cdo")
    if engine.method not in CDO_METHODS:
        raise ConfigError(f"field 'method': {engine.method!r} cannot price tranches; use one of {list(CDO_METHODS)}")
    port = _portfolio(args.portfolio)
    quad = _quadrature(args)
    tranches = load_tranches(args.tranches) if args.tranches else list(STANDARD_TRANCHES)
    try:
        sched = PaymentSchedule.regular(args.maturity, args.freq, args.rate)
    except InputError as exc:
        raise ConfigError(f"field 'maturity'/'freq': {exc}") from None
    return _cdo_rows(port, tranches, sched, engine, quad, args), COLUMNS["cdo"]


# --------------------------------------------------------------------------
# Bench presets
# --------------------------------------------------------------------------

SEMI = ["recursive", "modpoisson(4)", "modpoisson(6)", "modpoisson(10)", "ld"]


def _parse(text: str) -> Engine:
    from .engines import parse_engine

    return parse_engine(text)


def _timed(fn: Callable):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


def _tail_rows(port, xs, methods, args, quad) -> list[dict]:
    rows = []
    for m in methods:
        e = _parse(m)
        for x in xs:
            est, sec = _timed(lambda: tail(port, x, e, quad, runs=args.runs, seed=args.seed))
            rows.append(
                {
                    "method": e.method,
                    "order": _order_of(e),
                    "x": x,
                    "estimate": est.mean,
                    "std_error": est.std_error,
                    "runs": est.runs,
                    "seconds": _seconds(args, sec),
                }
            )
    return rows


def bench_fig1(args, quad):
    """Tail function of the risk benchmark for every tail method."""
    port = bm.risk_benchmark()
    xs = list(range(0, port.n + 1, 10))
    return _tail_rows(port, xs, SEMI + ["mc", "is2"], args, quad), COLUMNS["tail"]


def bench_fig2(args, quad):
    """Signed relative tail errors against the recursive benchmark."""
    port = bm.risk_benchmark()
    xs = list(range(0, port.n + 1, 10))
    ref = {x: mixed_tail(port, x, _parse("recursive"), quad) for x in xs}
    rows = _tail_rows(port, xs, SEMI[1:] + ["mc", "is2"], args, quad)
    for r in rows:
        r["reference"] = ref[r["x"]]
        r["rel_error"] = r["estimate"] / ref[r["x"]] - 1.0 if ref[r["x"]] > 0 else None
    cols = ["method", "order", "x", "estimate", "reference", "rel_error", "std_error", "runs", "seconds"]
    return rows, cols


def bench_fig3(args, quad):
    """Signed relative VaR errors over confidence levels 1 - 10^-k."""
    port = bm.risk_benchmark()
    alphas = [1.0 - 10.0 ** (-k) for k in np.arange(1.0, 6.01, 0.25)]
    ref = risk_report(port, alphas, _parse("recursive"), quad)
    rows = []
    for m in SEMI + ["mc"]:
        e = _parse(m)
        if m == "mc":
            (var, es), sec = _timed(lambda: _mc_var_es(port, alphas, args.runs, args.seed))
        else:
            rep, sec = _timed(lambda: risk_report(port, alphas, e, quad))
            var, es = rep.var, rep.es
        for a, v, rv in zip(alphas, var, ref.var):
            rows.append(
                {
                    "method": e.method,
                    "order": _order_of(e),
                    "alpha": a,
                    "var": v,
                    "reference_var": rv,
                    "rel_error": v / rv - 1.0,
                    "seconds": _seconds(args, sec),
                }
            )
    return rows, ["method", "order", "alpha", "var", "reference_var", "rel_error", "seconds"]


def _scaling_portfolio(n: int) -> Portfolio:
    from .model import pd_grid

    return Portfolio(pd_grid(n, 0.02, 0.08), 0.3)


def _sizes(text: str) -> list[int]:
    values = _floats(text, "sizes")
    if any(v < 1 or v != int(v) for v in values):
        raise ConfigError("field 'sizes' must hold positive integers")
    return [int(v) for v in values]


def bench_fig4(args, quad):
    """Wall-clock time of one tail evaluation against the obligor count."""
    sizes = [100, 250, 1000, 2500, 10000] if args.sizes is None else _sizes(args.sizes)
    methods = ["recursive", "modpoisson(6)", "ld", "mc", "is2"] if args.methods is None else args.methods.split(",")
    rows = []
    for n in sizes:
        port = _scaling_portfolio(n)
        x = float(math.ceil(0.15 * n))
        for m in methods:
            e = _parse(m)
            est, sec = _timed(lambda: tail(port, x, e, quad, runs=args.runs, seed=args.seed))
            rows.append(
                {"method": e.method, "order": _order_of(e), "n": n, "x": x, "estimate": est.mean,
                 "seconds": _seconds(args, sec)}
            )
    return rows, ["method", "order", "n", "x", "estimate", "seconds"]


def bench_fig5(args, quad):
    """Wall-clock time of one mod-Poisson tail evaluation against the order."""
    port = bm.risk_benchmark()
    x = 120.0
    rows = []
    for r in range(0, 31, 2):
        e = Engine("modpoisson", r)
        est, sec = _timed(lambda: mixed_tail(port, x, e, quad))
        rows.append({"method": "modpoisson", "order": r, "n": port.n, "x": x, "estimate": est,
                     "seconds": _seconds(args, sec)})
    return rows, ["method", "order", "n", "x", "estimate", "seconds"]


def bench_fig6(args, quad):
    """Signed relative call errors in bp against the strike, for several mean pds."""
    methods = ["stein-gauss", "stein-poisson", "modpoisson(4)", "modpoisson(6)", "modpoisson(10)"]
    rows = []
    for p in (0.01, 0.05, 0.2, 0.5):
        port = bm.cdo_benchmark(p)
        strikes = [float(k) for k in range(0, port.n + 1, 2)]
        ref = mixed_calls(port, strikes, _parse("recursive"), quad)
        for m in methods:
            e = _parse(m)
            vals, sec = _timed(lambda: mixed_calls(port, strikes, e, quad))
            for K, v, rv in zip(strikes, vals, ref):
                rows.append(
                    {"p": p, "method": e.method, "order": _order_of(e), "strike": K, "estimate": v,
                     "reference": rv, "rel_error_bp": 1e4 * (v / rv - 1.0) if rv > 0 else None,
                     "seconds": _seconds(args, sec)}
                )
    return rows, ["p", "method", "order", "strike", "estimate", "reference", "rel_error_bp", "seconds"]


TABLE2_ENGINES = ["recursive", "stein-gauss", "stein-poisson", "modpoisson(4)", "modpoisson(6)", "modpoisson(10)"]


def bench_fig7(args, quad):
    """Decimal places to which each engine's fair spread matches the benchmark."""
    port, sched = bm.cdo_benchmark(), bm.cdo_schedule()
    ref = price_tranches(port, STANDARD_TRANCHES, sched, _parse("recursive"), quad)
    rows = []
    for m in TABLE2_ENGINES[1:]:
        prices = price_tranches(port, STANDARD_TRANCHES, sched, _parse(m), quad)
        for p, rp in zip(prices, ref):
            gap = abs(p.fair_spread_bp - rp.fair_spread_bp)
            places = int(math.floor(-math.log10(gap))) if gap > 0 else None
            rows.append({"tranche": p.tranche.label, "engine": p.engine, "fair_spread_bp": p.fair_spread_bp,
                         "reference_bp": rp.fair_spread_bp, "decimal_places": places})
    return rows, ["tranche", "engine", "fair_spread_bp", "reference_bp", "decimal_places"]


def bench_table1(args, quad):
    """VaR and ES of the risk benchmark at the four standard levels."""
    port = bm.risk_benchmark()
    alphas = list(bm.RISK_ALPHAS)
    rows = []
    for m in SEMI + ["mc"]:
        e = _parse(m)
        if m == "mc":
            (var, es), sec = _timed(lambda: _mc_var_es(port, alphas, args.runs, args.seed))
        else:
            rep, sec = _timed(lambda: risk_report(port, alphas, e, quad))
            var, es = rep.var, rep.es
        for a, v, x in zip(alphas, var, es):
            rows.append({"method": e.method, "order": _order_of(e), "alpha": a, "var": v, "es": x,
                         "seconds": _seconds(args, sec)})
    return rows, COLUMNS["var-es"]


def bench_table2(args, quad):
    """Legs and fair spreads of the five standard tranches for every call engine."""
    port, sched = bm.cdo_benchmark(), bm.cdo_schedule()
    rows = []
    for m in TABLE2_ENGINES:
        rows.extend(_cdo_rows(port, STANDARD_TRANCHES, sched, _parse(m), quad, args))
    return rows, COLUMNS["cdo"]


PRESETS = {
    "fig1": bench_fig1,
    "fig2": bench_fig2,
    "fig3": bench_fig3,
    "fig4": bench_fig4,
    "fig5": bench_fig5,
    "fig6": bench_fig6,
    "fig7": bench_fig7,
    "table1": bench_table1,
    "table2": bench_table2,
}


def cmd_bench(args, stderr) -> tuple[list[dict], list[str]]:
    _check_runs(args)
    quad = _quadrature(args)
    return PRESETS[args.preset](args, quad)


# --------------------------------------------------------------------------
# Entry points
# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--nodes", type=int, default=64, help="quadrature nodes for the factor")
    common.add_argument("--rule", choices=("gauss-hermite", "trapezoid"), default="gauss-hermite",
                        help="factor quadrature rule")
    common.add_argument("--runs", type=int, default=10_000, help="simulation runs")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--output", "-o", default=None, help="output file (default stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--no-timing", action="store_true", help="leave the seconds column empty")

    engine = _Parser(add_help=False)
    engine.add_argument("--portfolio", required=True, help="portfolio JSON or a built-in name")
    engine.add_argument("--method", required=True, help="engine name, optionally with an order: modpoisson(6)")
    engine.add_argument("--order", type=int, default=None)

    p = _Parser(prog="modphi", description="Credit portfolio losses with mod-Poisson schemes.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    t = sub.add_parser("tail", parents=[common, engine], help="tail probabilities P{L > x}")
    t.add_argument("--x", required=True, help="comma-separated loss levels")
    v = sub.add_parser("var-es", parents=[common, engine], help="Value-at-Risk and Expected Shortfall")
    v.add_argument("--alpha", required=True, help="comma-separated confidence levels")
    c = sub.add_parser("cdo", parents=[common, engine], help="tranche legs and fair spreads")
    c.add_argument("--tranches", default=None, help="JSON array of {attach, detach}; default standard ladder")
    c.add_argument("--maturity", type=float, default=bm.CDO_MATURITY)
    c.add_argument("--freq", type=int, default=bm.CDO_FREQ)
    c.add_argument("--rate", type=float, default=bm.CDO_RATE)
    b = sub.add_parser("bench", parents=[common], help="regenerate a figure or table as CSV")
    b.add_argument("preset", choices=sorted(PRESETS))
    b.add_argument("--sizes", default=None, help="fig4 only: comma-separated obligor counts")
    b.add_argument("--methods", default=None, help="fig4 only: comma-separated engines")
    return p


COMMANDS = {"tail": cmd_tail, "var-es": cmd_var_es, "cdo": cmd_cdo, "bench": cmd_bench}


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    """Run one command and return its exit status."""
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    try:
        args = build_parser().parse_args(argv)
        rows, cols = COMMANDS[args.command](args, stderr)
        _emit(render(rows, cols, args.format), args.output, stdout)
        return EXIT_OK
    except ResourceError as exc:
        stderr.write(f"error: resource limit: {exc}\n")
        return EXIT_RESOURCE
    except NumericError as exc:
        node = "" if exc.node_index is None else f" (node {exc.node_index})"
        stderr.write(f"error: numeric failure{node}: {exc}\n")
        return EXIT_NUMERIC
    except (InputError, OSError) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except ModPhiError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_NUMERIC


def main(argv: Sequence[str] | None = None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
