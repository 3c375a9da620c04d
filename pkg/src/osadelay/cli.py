"""Command-line entry point: run, sweep, cluster and compare."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiments as ex
from .core import ParameterError

EXIT_OK, EXIT_VALIDATION, EXIT_NONCONVERGENCE = 0, 2, 3


def _methods(text):
    return [m.strip() for m in text.split(",") if m.strip()] if text else None


def _grid(text):
    return ex.parse_floats(text) if text else None


def _select(scenarios, names):
    if not names:
        return scenarios
    chosen = [s for s in scenarios if s.name in names]
    missing = set(names) - {s.name for s in chosen}
    if missing:
        raise ParameterError("scenario", f"not in config: {sorted(missing)}")
    return chosen


def _load(args):
    scenarios = _select(ex.load_config(args.config), args.scenario)
    return [ex.override(s, args.seed, _methods(args.methods)) for s in scenarios]


def _status(rows) -> int:
    for r in rows:
        if r.error:
            print(f"[{r.scenario} {r.method} {r.sweep_value}] {r.error}", file=sys.stderr)
    if any(r.error.startswith("non-convergence") for r in rows):
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def _emit(rows, out: Path, stem: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{stem}.csv"
    ex.write_csv(rows, csv_path)
    (out / f"{stem}.gp").write_text(ex.gnuplot_script(csv_path.name, rows, stem))
    print(f"wrote {csv_path} ({len(rows)} rows)")


def cmd_run(args, sweep: bool) -> int:
    rows = []
    for s in _load(args):
        if sweep and s.sweep_param is None:
            raise ParameterError("sweep_param", f"scenario [{s.name}] has no sweep")
        rows += ex.run_scenario(s, workers=args.workers, timing=not args.no_timing, sweep=sweep)
    _emit(rows, Path(args.out), "sweep" if sweep else "run")
    return _status(rows)


def cmd_cluster(args) -> int:
    rows = []
    lines = ["lambda,p_single,p_clustered,single_slots,clustered_slots,single_stable,clustered_stable"]
    for s in _load(args):
        pts = ex.cluster_experiment(s, args.clusters, _grid(args.lambdas), _grid(args.p_grid))
        for pt in pts:
            rows += [pt.single, pt.clustered]
            lines.append(",".join(ex.fmt_value(v) for v in (
                pt.lam, pt.p_single, pt.p_clustered, pt.single.mean, pt.clustered.mean,
                int(pt.single.stable), int(pt.clustered.stable))))
    _emit(rows, Path(args.out), "cluster")
    (Path(args.out) / "cluster_pairs.csv").write_text("\n".join(lines) + "\n")
    return _status(rows)


def cmd_compare(args) -> int:
    if args.csv:
        rows = ex.read_csv(args.csv)
    else:
        if not args.config:
            raise ParameterError("config", "compare needs --config or --csv")
        rows = []
        for s in _load(args):
            methods = s.methods if args.baseline in s.methods else (args.baseline,) + s.methods
            s = ex.override(s, methods=methods)
            rows += ex.run_scenario(s, workers=args.workers, timing=not args.no_timing,
                                    sweep=s.sweep_param is not None)
        _emit(rows, Path(args.out), "compare_input")
    tolerances = {}
    for item in args.tolerance or []:
        name, _, val = item.partition("=")
        tolerances[name] = ex.parse_float("tolerance", val)
    try:
        text, table, _ = ex.compare_report(rows, args.baseline, tolerances)
    except ValueError as exc:
        raise ParameterError("baseline", str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "compare.csv").write_text(table)
    (out / "compare.txt").write_text(text)
    print(text, end="")
    return _status(rows)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="osadelay", description=__doc__)
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="INI file, one section per scenario")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override every scenario's base_seed")
        p.add_argument("--methods", help="comma-separated method list")
        p.add_argument("--scenario", action="append", help="restrict to named sections")
        p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
        p.add_argument("--no-timing", action="store_true", help="write runtime_ms as 0")

    common(sub.add_parser("run", help="evaluate each scenario at its base point"))
    common(sub.add_parser("sweep", help="evaluate each scenario over its sweep grid"))
    pc = sub.add_parser("cluster", help="one system versus c independent clusters")
    common(pc)
    pc.add_argument("--clusters", type=int, required=True)
    pc.add_argument("--lambdas", help="lambda grid (defaults to the scenario's lambda sweep)")
    pc.add_argument("--p-grid", help="access probabilities to optimise over per point")
    pm = sub.add_parser("compare", help="relative error of each method against a baseline")
    common(pm, config_required=False)
    pm.add_argument("--baseline", default="sim")
    pm.add_argument("--csv", help="compare an existing results CSV instead of running")
    pm.add_argument("--tolerance", action="append", help="METHOD=REL, may repeat")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb in ("run", "sweep"):
            return cmd_run(args, sweep=args.verb == "sweep")
        if args.verb == "cluster":
            return cmd_cluster(args)
        return cmd_compare(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
