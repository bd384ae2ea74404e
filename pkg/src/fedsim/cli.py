"""``fedsim`` command line: run an experiment file, replicate a figure, or sweep the cost model.

Exit status is 0 on success, 2 for bad configuration or arguments and 1 for
failures during a run. All CSV output is UTF-8 with LF line endings, floats
in shortest round-trip form, and no timestamps.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import config as cfgfile
from . import cost, presets
from . import data as ds
from .federation import ConfigError, make_plan, run_experiment, sweep_exchange

log = logging.getLogger("fedsim")

ROUND_COLUMNS = ("round", "accuracy", "loss", "bytes_up", "bytes_down", "sim_time")
SUMMARY_COLUMNS = ("final_accuracy", "total_bytes", "sim_time")


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_csv(path, header, rows, stream=None):
    """Write ``rows`` under ``header`` to ``path`` (or to ``stream`` when given)."""
    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])

    if stream is not None:
        emit(stream)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        emit(fh)


def write_rounds(path, records):
    write_csv(path, ROUND_COLUMNS,
              ([getattr(r, c) for c in ROUND_COLUMNS] for r in records))


def write_summary(path, result):
    last = result.final
    write_csv(path, SUMMARY_COLUMNS,
              [(last.accuracy, result.ledger.total_bytes, last.sim_time)])


# --- commands ------------------------------------------------------------------

def cmd_run(args) -> int:
    exp = cfgfile.load(args.config)
    train, test = exp.load_data()
    result = run_experiment(exp.federation, train, test)
    write_rounds(exp.output_dir / "rounds.csv", result)
    write_summary(exp.output_dir / "summary.csv", result)
    print(f"{len(result)} rounds, final accuracy {result.final.accuracy:.4f} -> {exp.output_dir}")
    return 0


def _seed(args) -> int:
    env = os.environ.get("FEDSIM_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"FEDSIM_SEED={env!r} is not an integer") from None
    return args.seed


def _replicate_cost(out: Path):
    grid = cost.default_n_grid()
    written = []
    for a in cost.DEFAULT_AGENCIES:
        rows = cost.sweep_curve(grid, [a], cost.DEFAULT_MODEL_RATIO)
        path = out / f"A{a}.csv"
        write_csv(path, ("A", "N", "ratio"), rows)
        written.append(path)
    return written


def replicate(figure: str, out, mnist_dir=None, seed: int = 0) -> list[Path]:
    """Run the preset grid for ``figure`` and write one CSV per curve into ``out``."""
    out = Path(out)
    if figure == "fig4":
        return _replicate_cost(out)
    curves = presets.curves(figure, mnist=mnist_dir is not None, seed=seed)
    cache = {}

    def dataset(key):
        if key not in cache:
            if key == "mnist":
                cache[key] = ds.load_mnist(mnist_dir)
            else:
                cache[key] = ds.generate_synthetic(seed=seed, **presets.SYNTHETIC[key])
        return cache[key]

    written = []
    for curve in curves:
        train, test = dataset(curve.dataset)
        path = out / f"{curve.name}.csv"
        if figure == "fig10":
            table = sweep_exchange(curve.config, train, test, presets.EXCHANGE_SWEEP)
            write_csv(path, ("k", "accuracy"), sorted(table.items()))
        else:
            config = curve.config
            if figure == "fig7" and config.flavor == "centralized":
                plan = make_plan(replace(config, flavor="flavor2"), train)
                sizes = [len(v) for v in plan.assignments.values()]
                config = presets.relay_reference(config, sizes)
            log.info("%s/%s: %s", figure, curve.name, config)
            write_rounds(path, run_experiment(config, train, test))
        written.append(path)
    return written


def cmd_replicate(args) -> int:
    out = Path(args.out) if args.out else Path("fedsim-replicate") / args.figure
    mnist_dir = args.mnist
    if mnist_dir is not None and not Path(mnist_dir).is_dir():
        raise ConfigError(f"--mnist: no such directory {mnist_dir}")
    for path in replicate(args.figure, out, mnist_dir, _seed(args)):
        print(path)
    return 0


def cmd_cost(args) -> int:
    if args.N is not None:
        grid = [args.N]
    else:
        if args.N_steps < 1 or args.N_min < 0 or args.N_max < args.N_min:
            raise ConfigError("need N-steps >= 1 and 0 <= N-min <= N-max")
        grid = cost.default_n_grid(args.N_min, args.N_max, args.N_steps)
    if any(a < 1 for a in args.A) or args.Mr < 0:
        raise ConfigError("need A >= 1 and Mr >= 0")
    write_csv(None, ("A", "N", "ratio"), cost.sweep_curve(grid, args.A, args.Mr),
              stream=sys.stdout)
    return 0


# --- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedsim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment file")
    run.add_argument("config")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("replicate", help="run a figure's preset experiment grid")
    rep.add_argument("figure", choices=presets.FIGURES)
    src = rep.add_mutually_exclusive_group()
    src.add_argument("--mnist", metavar="DIR", help="directory with the MNIST IDX files")
    src.add_argument("--synthetic", action="store_true",
                     help="use the synthetic blob stand-in (default)")
    rep.add_argument("--out", metavar="DIR")
    rep.add_argument("--seed", type=int, default=0)
    rep.set_defaults(func=cmd_replicate)

    c = sub.add_parser("cost", help="print the training-time ratio sweep as CSV")
    c.add_argument("--A", type=int, nargs="+", default=list(cost.DEFAULT_AGENCIES))
    c.add_argument("--Mr", type=float, default=cost.DEFAULT_MODEL_RATIO)
    c.add_argument("--N", type=float, default=None, help="a single N instead of a grid")
    c.add_argument("--N-min", dest="N_min", type=float, default=0.1)
    c.add_argument("--N-max", dest="N_max", type=float, default=100.0)
    c.add_argument("--N-steps", dest="N_steps", type=int, default=50)
    c.set_defaults(func=cmd_cost)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"fedsim: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any failure mid-run maps to exit 1
        print(f"fedsim: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
