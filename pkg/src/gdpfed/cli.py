"""Command-line entry point: ``gdpfed {ingest-check,run,plot,leakage-demo,dp-check}``."""
from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import experiments as ex
from .data import DEFAULT_DATA_PATH, clean_and_normalize, parse_bcwd
from .exceptions import ParseError
from .linear import leakage_demo
from .privacy import dp_bound_check, gaussian_delta

log = logging.getLogger("gdpfed")


def cmd_ingest_check(args) -> int:
    path = args.data or DEFAULT_DATA_PATH
    try:
        records = parse_bcwd(path)
    except (OSError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    data = clean_and_normalize(records)
    raw_malignant = sum(r.class_code == 4 for r in records)
    clean_malignant = int((data.y > 0).sum())
    print(f"file: {path}")
    print(f"records: {len(records)} ({len(records) - raw_malignant} benign, {raw_malignant} malignant)")
    print(f"dropped (missing values): {data.n_dropped}")
    print(f"clean: {len(data)} ({len(data) - clean_malignant} benign, {clean_malignant} malignant)")
    print(f"features: {data.X.shape[1]}, range [{data.X.min():g}, {data.X.max():g}]")
    return 0


def _settings_from_args(args) -> dict:
    settings = ex.read_config(args.config) if args.config else {}
    overrides = {"epsilons": args.epsilons, "clients": args.clients, "seeds": args.seeds,
                 "rounds": args.rounds, "baselines": args.baselines,
                 "exposures": args.exposures, "data": args.data}
    settings.update({k: v for k, v in overrides.items() if v is not None})
    return settings


def _write_plots(rows, out_dir: Path, epsilon, V) -> None:
    try:
        series = ex.emit_put_plot(rows, out_dir / "put.svg")
        for v, points in series.items():
            pts = ", ".join(f"eps={e:g}: {a:.3f}" for e, a in points)
            print(f"  V={v}: {pts}")
    except ValueError as exc:
        log.warning("put.svg skipped: %s", exc)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            ex.emit_epochs_plot(rows, out_dir / "epochs.svg", epsilon=epsilon, V=V)
        for w in caught:
            log.warning("epochs.svg: %s", w.message)
    except ValueError as exc:
        log.warning("epochs.svg skipped: %s", exc)


def _epochs_cell(rows, epsilon, V):
    """Prefer the requested (epsilon, V) pair; otherwise the largest private cell present."""
    private = [r for r in rows if r.baseline == ex.PRIVATE]
    if any(r.epsilon == epsilon and r.V == V for r in private) or not private:
        return epsilon, V
    Vs = sorted({r.V for r in private})
    V = V if V in Vs else Vs[-1]
    eps = sorted({r.epsilon for r in private if r.V == V})
    return (epsilon if epsilon in eps else eps[-1]), V


def cmd_run(args) -> int:
    try:
        grid = ex.grid_from_settings(_settings_from_args(args))
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_cells = len(grid.cells())
    print(f"running {n_cells} cells into {out_dir}")
    result = ex.run_grid(grid, trace_dir=out_dir / "traces", n_jobs=args.n_jobs)
    for failure in result.failures:
        print(f"cell failed {failure.cell}: {failure.error}", file=sys.stderr)
    if not result.rows:
        print("error: no cell produced results", file=sys.stderr)
        return 1
    ex.emit_csv(result.rows, out_dir / "results.csv")
    print(f"wrote {len(result.rows)} rows to {out_dir / 'results.csv'}")
    _write_plots(result.rows, out_dir, *_epochs_cell(result.rows, args.plot_epsilon, args.plot_clients))
    return 0 if result.ok else 1


def cmd_plot(args) -> int:
    try:
        rows = ex.read_csv(args.csv)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot read {args.csv}: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(args.out_dir) if args.out_dir else Path(args.csv).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_plots(rows, out_dir, *_epochs_cell(rows, args.plot_epsilon, args.plot_clients))
    return 0


def cmd_leakage_demo(args) -> int:
    rng = np.random.default_rng(args.seed)
    x = rng.uniform(0.0, 1.0, size=args.dim)
    w = rng.normal(size=args.dim)
    y = 1.0
    g, cosine = leakage_demo(w, x, y)
    scale = y - w @ x
    print("single-example squared-loss gradient g = x * (y - w.x)")
    print(f"x          = {np.array2string(x, precision=4)}")
    print(f"g          = {np.array2string(g, precision=4)}")
    print(f"g / (y-w.x) = {np.array2string(g / scale, precision=4)}")
    print(f"|cos(g, x)| = {cosine:.15f}")
    print("the gradient is the raw input rescaled; sharing it reveals x up to one scalar")
    return 0


def cmd_dp_check(args) -> int:
    try:
        ok = dp_bound_check(args.sensitivity, args.sigma, args.epsilon, args.delta)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    d = gaussian_delta(args.sensitivity, args.sigma, args.epsilon)
    print(f"delta*(eps={args.epsilon:g}) = {d:.6e} for sensitivity {args.sensitivity:g}, sigma {args.sigma:g}")
    print(f"({args.epsilon:g}, {args.delta:g})-DP: {'yes' if ok else 'no'}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gdpfed", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest-check", help="parse the dataset and print counts")
    p.add_argument("--data", help="path to breast-cancer-wisconsin.data")
    p.set_defaults(func=cmd_ingest_check)

    p = sub.add_parser("run", help="run an experiment grid")
    p.add_argument("--config", help="flat 'key = value' file; flags override it")
    p.add_argument("--out-dir", default="results")
    p.add_argument("--seeds", help="e.g. 0-9 or 0,3,7")
    p.add_argument("--epsilons", help="comma-separated, e.g. 5,10,20,30,50")
    p.add_argument("--clients", help="comma-separated client counts")
    p.add_argument("--rounds", type=int)
    p.add_argument("--exposures", help="E, or 'equal-T'")
    p.add_argument("--baselines", help="subset of private,nonprivate_federated,centralized")
    p.add_argument("--data")
    p.add_argument("--n-jobs", type=int, default=1)
    p.add_argument("--plot-epsilon", type=float, default=25.0)
    p.add_argument("--plot-clients", type=int, default=20)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plot", help="redraw figures from results.csv")
    p.add_argument("csv")
    p.add_argument("--out-dir")
    p.add_argument("--plot-epsilon", type=float, default=25.0)
    p.add_argument("--plot-clients", type=int, default=20)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("leakage-demo", help="show that a shared gradient is proportional to the input")
    p.add_argument("--dim", type=int, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_leakage_demo)

    p = sub.add_parser("dp-check", help="exact (eps, delta) check for a Gaussian mechanism")
    p.add_argument("sensitivity", type=float)
    p.add_argument("sigma", type=float)
    p.add_argument("epsilon", type=float)
    p.add_argument("delta", type=float)
    p.set_defaults(func=cmd_dp_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
