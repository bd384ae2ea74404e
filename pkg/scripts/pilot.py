"""Pilot sweep used to choose the synthetic presets before pinning acceptance thresholds.

Runs every federated configuration that the acceptance suite checks, on
several seeds, and writes one row per (seed, run) to ``pilot/results.csv``.
Usage::

    python scripts/pilot.py [--seeds 0 1 2 3] [--out pilot/results.csv]
"""

import argparse
import csv
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from fedsim import presets
from fedsim.data import generate_synthetic
from fedsim.federation import make_plan, run_experiment, sweep_exchange
from fedsim.nn import predict


def smoothed_min_diff(acc, window=10):
    s = np.convolve(acc, np.ones(window) / window, mode="valid")
    return float(np.diff(s).min()) if s.size > 1 else 0.0


def pilot(seed):
    rows = []
    sep = generate_synthetic(seed=seed, **presets.SYNTHETIC["separable"])
    ovl = generate_synthetic(seed=seed, **presets.SYNTHETIC["overlap"])

    def run(name, config, pair):
        t = time.perf_counter()
        res = run_experiment(config, *pair)
        acc = [r.accuracy for r in res]
        top = np.bincount(predict(res.params, config.network_for(pair[0]), pair[1].features),
                          minlength=pair[1].class_count).max() / len(pair[1])
        rows.append(dict(seed=seed, run=name, final_accuracy=acc[-1],
                         smoothed_min_diff=smoothed_min_diff(acc), top_class_share=top,
                         seconds=round(time.perf_counter() - t, 2)))
        return res

    f1 = presets.curves("fig6", seed=seed)[0].config
    run("fig6/flavor1_random", f1, sep)
    run("fig6/centralized", replace(f1, flavor="centralized"), sep)
    f2 = presets.curves("fig7", seed=seed)[0].config
    run("fig7/flavor2_random", f2, sep)
    sizes = [len(v) for v in make_plan(f2, sep[0]).assignments.values()]
    run("fig7/centralized_matched", presets.relay_reference(f2, sizes), sep)
    for c in presets.curves("fig9", seed=seed):
        run(f"fig9/{c.name}", c.config, sep if c.dataset == "separable" else ovl)
    skew = presets.curves("fig10", seed=seed)[0].config
    run("fig8/flavor1_random_reference", replace(skew, partition="random"), ovl)
    for k, acc in sweep_exchange(skew, *ovl, presets.EXCHANGE_SWEEP).items():
        rows.append(dict(seed=seed, run=f"fig10/k{k}", final_accuracy=acc,
                         smoothed_min_diff="", top_class_share="", seconds=""))
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3])
    ap.add_argument("--out", default="pilot/results.csv")
    args = ap.parse_args()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = [r for s in args.seeds for r in pilot(s)]
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(r)


if __name__ == "__main__":
    main()
