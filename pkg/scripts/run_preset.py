"""Run a named sweep and print a mean (std) table per estimator.

    python scripts/run_preset.py table1 --runs 20
    python scripts/run_preset.py fig7-fir --out results/
"""
import argparse
import math
import time
from pathlib import Path

from mccrobust.experiments import PRESETS, preset, run_sweep, write_summary


def format_table(summary) -> str:
    names = summary.spec.config.estimators
    head = f"{summary.spec.sweep_parameter:>12} " + " ".join(f"{n:>20}" for n in names) + f" {'xi':>10}"
    lines = [head, "-" * len(head)]
    for i, value in enumerate(summary.values):
        cells = []
        for name in names:
            st = summary.stats[(i, name)]
            std = "" if math.isnan(st.std) else f"({st.std:.4f})"
            cells.append(f"{st.mean:>11.4f} {std:>8}")
        xi = summary.points[i].xi
        lines.append(f"{value:>12g} " + " ".join(cells) + f" {'' if xi is None else format(xi, '.4f'):>10}")
    return "\n".join(lines)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("name", choices=sorted(PRESETS))
    ap.add_argument("--runs", type=int)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, help="directory for the summary CSV and manifest")
    args = ap.parse_args()

    overrides = {"seed": args.seed}
    if args.runs:
        overrides["runs"] = args.runs
    spec = preset(args.name, **overrides)
    t0 = time.perf_counter()
    summary = run_sweep(spec, jobs=args.jobs)
    print(format_table(summary))
    print(f"\n{spec.config.runs} runs per point, {time.perf_counter() - t0:.1f}s")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        path, manifest = write_summary(summary, args.out / f"{args.name}.csv", args.name)
        print(f"wrote {path} and {manifest}")


if __name__ == "__main__":
    main()
