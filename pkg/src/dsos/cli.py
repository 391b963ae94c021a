"""Command-line interface.

Exit codes: 0 success / no adverse shift, 3 adverse shift detected at
``--alpha`` (``test`` only), 1 usage, data or I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Optional

from . import __version__
from .errors import DsosError
from .forest import ForestHyperparams
from .report import SCHEMA_VERSION, TestReport, dumps, format_report, load_report, write_atomic

EXIT_OK, EXIT_ERROR, EXIT_SHIFT = 0, 1, 3
REFERENCE_S = round(-math.log2(0.05), 2)  # 4.32 bits, p = 0.05
SCORER_CHOICES = ("two-sample", "anomaly", "residual", "uncertainty")


class UsageError(DsosError):
    pass


# --------------------------------------------------------------------------
# config files


def read_config(path) -> Dict[str, str]:
    """Flat ``key = value`` file; keys are long flag names (``-`` or ``_``).

    Blank lines and lines starting with ``#`` are ignored.
    """
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, config: Dict[str, str]) -> None:
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, raw in config.items():
        if key not in actions or key in ("config", "help", "command"):
            raise UsageError(f"unknown config key {key!r}")
        action = actions[key]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            value = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                value = action.type(raw)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from exc
        else:
            value = raw
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config key {key!r}: {value!r} not in {list(action.choices)}")
        defaults[key] = value
    parser.set_defaults(**defaults)


# --------------------------------------------------------------------------
# shared flags


def _add_data_flags(p):
    g = p.add_argument_group("data")
    g.add_argument("--train", help="training CSV (two-file mode)")
    g.add_argument("--test", help="test CSV (two-file mode)")
    g.add_argument("--data", help="single CSV with an origin column")
    g.add_argument("--origin-column", help="column marking test rows (test/1/true)")
    g.add_argument("--iris", choices=("random", "stratified", "in-distribution", "out-of-distribution"),
                   help="use the bundled iris data with this split preset")
    g.add_argument("--label", help="label column (needed by residual and uncertainty)")
    g.add_argument("--one-hot", action="store_true", help="one-hot encode non-numeric columns")


def _add_forest_flags(p):
    p.add_argument("--n-trees", type=int, default=500, help="trees per forest (default 500)")


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="flat key = value file; flags take precedence")


def _load_data(args):
    from .ingest import IngestOptions, dataset_summary, ingest_origin_column, ingest_two_files
    from .iris import iris_split

    modes = [args.iris is not None, args.data is not None, args.train is not None or args.test is not None]
    if sum(modes) != 1:
        raise UsageError("give exactly one of --train/--test, --data/--origin-column or --iris")
    if args.iris:
        data = iris_split(args.iris, args.seed)
        names = ["sepal_length", "sepal_width", "petal_length", "petal_width"]
        summary = dataset_summary(data)
        summary["source"] = f"iris:{args.iris}"
        return data, names, summary
    opts = IngestOptions(label_column=args.label, origin_column=args.origin_column, one_hot=args.one_hot)
    if args.data:
        if not args.origin_column:
            raise UsageError("--data needs --origin-column")
        data, names = ingest_origin_column(args.data, opts)
    else:
        if not (args.train and args.test):
            raise UsageError("two-file mode needs both --train and --test")
        data, names = ingest_two_files(args.train, args.test, opts)
    return data, names, dataset_summary(data)


def _forest(args) -> ForestHyperparams:
    if args.n_trees < 1:
        raise UsageError("--n-trees must be >= 1")
    return ForestHyperparams(n_trees=args.n_trees)


def _invocation(args, keys) -> dict:
    return {k: getattr(args, k) for k in keys}


_DATA_KEYS = ["train", "test", "data", "origin_column", "iris", "label", "one_hot"]


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# commands


def cmd_test(args) -> int:
    from .scorers import Notion, ScorerConfig
    from .testing import run_test

    if not 0.0 <= args.alpha <= 1.0:
        raise UsageError("--alpha must lie in [0, 1]")
    data, names, summary = _load_data(args)
    notion = Notion.parse(args.scorer)
    if notion.needs_label and data.label is None:
        raise UsageError(f"--scorer {args.scorer} needs --label")
    start = time.perf_counter()
    result = run_test(data, ScorerConfig(notion, _forest(args)), args.method, seed=args.seed,
                      permutations=args.permutations, alpha=args.alpha,
                      paper_exact=args.paper_exact_pvalue)
    elapsed = time.perf_counter() - start
    shifted = args.alpha > 0 and result.p_value <= args.alpha
    verdict = (f"adverse shift detected at alpha={args.alpha}" if shifted
               else f"no adverse shift detected at alpha={args.alpha}")
    report = TestReport(
        result=result,
        notion=notion.value,
        dataset=summary,
        invocation=_invocation(args, _DATA_KEYS + ["method", "scorer", "permutations", "seed", "alpha",
                                                   "paper_exact_pvalue", "n_trees"]),
        verdict=verdict,
        wall_clock_seconds=round(elapsed, 3) if args.wall_clock else None,
        feature_names=names,
    )
    _emit(report.to_json(), args.out)
    if args.out:
        sys.stderr.write(f"{verdict} (p = {result.p_value:.4g}, s = {result.s_value:.2f} bits)\n")
    return EXIT_SHIFT if shifted else EXIT_OK


def panel_plot_rows(panel: List[dict]) -> List[dict]:
    """Plot data: one row per notion, s-values winsorized to [1, 10]."""
    rows = []
    for e in panel:
        if e["result"] is None:
            continue
        s = e["result"]["s_value"]
        rows.append({"notion": e["notion"], "s_value": min(10.0, max(1.0, s)),
                     "p_value": e["result"]["p_value"], "reference_s_value": REFERENCE_S})
    return rows


def cmd_panel(args) -> int:
    from .scorers import Notion
    from .testing import run_notion_panel

    data, names, summary = _load_data(args)
    notions = [Notion.parse(n) for n in (args.notions or SCORER_CHOICES)]
    if data.label is None:
        dropped = [n for n in notions if n.needs_label]
        if dropped:
            sys.stderr.write("warning: no --label; skipping " + ", ".join(n.value for n in dropped) + "\n")
        notions = [n for n in notions if not n.needs_label]
    if not notions:
        raise UsageError("no runnable notions")
    entries = run_notion_panel(data, notions, args.method, args.seed, _forest(args),
                               permutations=args.permutations)
    panel = [{"notion": e.notion.value, "result": e.result.to_dict() if e.result else None,
              "error": e.error} for e in entries]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "dataset": summary,
        "invocation": _invocation(args, _DATA_KEYS + ["method", "notions", "permutations", "seed", "n_trees"]),
        "panel": panel,
    }
    _emit(dumps(doc), args.out)
    if args.plot_data:
        buf = io.StringIO()
        w = csv.DictWriter(buf, ["notion", "s_value", "p_value", "reference_s_value"], lineterminator="\n")
        w.writeheader()
        w.writerows(panel_plot_rows(panel))
        write_atomic(args.plot_data, buf.getvalue())
    return EXIT_OK


def _spec(args, shift=None, intensity=None):
    from .simgen import GmmShiftSpec

    return GmmShiftSpec(args.n, args.d, shift or args.shift,
                        args.intensity if intensity is None else intensity, args.seed,
                        mean_shift_sign=args.mean_shift_sign, unsafe=args.unsafe_grid)


def cmd_simulate(args) -> int:
    from .simgen import generate

    train, test = generate(_spec(args))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{j + 1}" for j in range(args.d)] + ["origin"])
    for side, rows in (("train", train), ("test", test)):
        for r in rows:
            w.writerow([repr(float(v)) for v in r] + [side])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import BenchGrid, compare_grid, records_fieldnames, run_grid, summarize_table

    shifts = args.shifts or ["none", "label", "corrupted", "mean", "noise", "dependency"]
    specs = [_spec(args, s, 0 if s == "none" else args.intensity) for s in shifts]
    grid = BenchGrid(specs, args.methods or ["DSOS_PT", "DSOS_SS", "DSOS_AT", "CTST", "ENERGY"],
                     replicates=args.replicates, seed=args.seed, forest=_forest(args),
                     permutations=args.permutations, energy_permutations=args.energy_permutations)

    def progress(si, rep):
        if args.verbose:
            sys.stderr.write(f"cell {si + 1}/{len(specs)} replicate {rep + 1}/{grid.replicates}\n")

    records = run_grid(grid, progress)
    comparisons = compare_grid(records, rope=args.rope, mc_draws=args.mc_draws, seed=args.seed)
    out = Path(args.out_dir)
    buf = io.StringIO()
    w = csv.DictWriter(buf, records_fieldnames(), lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                    for k, v in asdict(r).items()})
    write_atomic(out / "records.csv", buf.getvalue())
    summary = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "grid": {
            "specs": [{"shift": s.shift, "intensity": s.intensity, "n_per_side": s.n_per_side, "d": s.d,
                       "mean_shift_sign": s.mean_shift_sign} for s in specs],
            "methods": [m.value for m in grid.methods],
            "replicates": grid.replicates,
            "seed": grid.seed,
            "n_trees": args.n_trees,
            "permutations": grid.permutations,
            "energy_permutations": grid.energy_permutations,
            "rope": args.rope,
            "mc_draws": args.mc_draws,
        },
        "table": summarize_table(comparisons),
        "comparisons": comparisons,
        "failures": sum(r.error is not None for r in records),
    }
    write_atomic(out / "summary.json", dumps(summary))
    return EXIT_OK


def cmd_show_report(args) -> int:
    sys.stdout.write(format_report(load_report(args.report)))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsos", description="Tests of no adverse dataset shift.")
    parser.add_argument("--version", action="version", version=f"dsos {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="run one test and write a JSON report")
    _add_data_flags(p)
    p.add_argument("--method", choices=("pt", "ss", "at"), default="at", type=str.lower)
    p.add_argument("--scorer", choices=SCORER_CHOICES, default="two-sample")
    p.add_argument("--permutations", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.05, help="threshold for the verdict and exit code only")
    p.add_argument("--paper-exact-pvalue", action="store_true",
                   help="permutation p-value without the add-one correction")
    p.add_argument("--out", help="report path (default: stdout)")
    p.add_argument("--wall-clock", action="store_true", help="record elapsed time in the report")
    _add_forest_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("panel", help="one test per notion of outlyingness")
    _add_data_flags(p)
    p.add_argument("--method", choices=("pt", "ss", "at"), default="at", type=str.lower)
    p.add_argument("--notions", nargs="+", choices=SCORER_CHOICES)
    p.add_argument("--permutations", type=int, default=1000)
    p.add_argument("--out", help="panel report path (default: stdout)")
    p.add_argument("--plot-data", help="CSV of winsorized s-values per notion")
    _add_forest_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_panel)

    def sim_flags(p, single=True):
        p.add_argument("--n", type=int, default=400, help="rows per side")
        p.add_argument("--d", type=int, default=4)
        if single:
            p.add_argument("--shift", default="none",
                           choices=("none", "label", "corrupted", "mean", "noise", "dependency"))
        p.add_argument("--intensity", type=int, default=2 if not single else 0, choices=(0, 1, 2))
        p.add_argument("--mean-shift-sign", type=int, default=1, choices=(1, -1))
        p.add_argument("--unsafe-grid", action="store_true", help="allow n and d outside the standard grid")

    p = sub.add_parser("simulate", help="draw a train/test pair from the mixture simulator")
    sim_flags(p)
    p.add_argument("--out", help="CSV path (default: stdout)")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="head-to-head comparison on simulated shifts")
    sim_flags(p, single=False)
    p.add_argument("--shifts", nargs="+", choices=("none", "label", "corrupted", "mean", "noise", "dependency"))
    p.add_argument("--methods", nargs="+", choices=("DSOS_PT", "DSOS_SS", "DSOS_AT", "CTST", "ENERGY"))
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--permutations", type=int, default=199)
    p.add_argument("--energy-permutations", type=int, default=199)
    p.add_argument("--rope", type=float, default=1.0)
    p.add_argument("--mc-draws", type=int, default=10000)
    p.add_argument("--out-dir", default="bench-out")
    p.add_argument("--verbose", action="store_true")
    _add_forest_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("show-report", help="pretty-print a JSON report")
    p.add_argument("report")
    p.set_defaults(func=cmd_show_report)
    return parser


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    config = getattr(args, "config", None)
    if config:
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        _apply_config(subparser, read_config(config))
        args = parser.parse_args(argv)
    return args


def _set_threads():
    value = os.environ.get("DSOS_NUM_THREADS")
    if not value:
        return
    try:
        n = int(value)
    except ValueError:
        raise UsageError(f"DSOS_NUM_THREADS must be an integer, got {value!r}") from None
    import numba

    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def main(argv=None) -> int:
    try:
        args = _parse(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    except DsosError as exc:
        sys.stderr.write(f"dsos: error: {exc}\n")
        return EXIT_ERROR
    try:
        _set_threads()
        return args.func(args)
    except (DsosError, OSError, ValueError) as exc:
        sys.stderr.write(f"dsos: error: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
