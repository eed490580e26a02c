"""Run every preset at full size and write the summaries to one directory."""
import argparse
import time
from pathlib import Path

from mccrobust.experiments import PRESETS, preset, run_sweep, write_summary


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--only", nargs="*", choices=sorted(PRESETS))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name in args.only or sorted(PRESETS):
        t0 = time.perf_counter()
        summary = run_sweep(preset(name), jobs=args.jobs)
        path, _ = write_summary(summary, args.out / f"{name}.csv", name)
        print(f"{name:<12} {time.perf_counter() - t0:7.1f}s  -> {path}")


if __name__ == "__main__":
    main()
