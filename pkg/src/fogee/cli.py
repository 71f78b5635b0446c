"""Command line: ``fogee simulate`` runs a campaign, ``fogee report`` summarizes one."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .harness import (ExperimentConfig, aggregate_cdf, cdf_percentile, load_config, load_rows,
                      run_campaign, summarize)

EXIT_CONFIG = 2
EXIT_INVARIANT = 3
METRICS = ("ee", "rate-cdf", "active-faps", "sumrate")


def _floats(text: str) -> list:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fogee", description="Energy-efficient F-RAN simulation campaigns")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a Monte-Carlo campaign")
    s.add_argument("--config", required=True, help="YAML or JSON experiment file")
    s.add_argument("--seed", type=int)
    s.add_argument("--drops", type=int)
    s.add_argument("--algos", help="comma-separated subset of al,heuristic,ref_ee,ref_sr")
    s.add_argument("--sigma-e2", type=_floats, help="comma-separated CSI error variances")
    s.add_argument("--out", help="output directory")
    s.add_argument("--workers", type=int)
    s.add_argument("--force", action="store_true", help="allow the AL solver on the large scenario")

    r = sub.add_parser("report", help="tabulate a finished campaign")
    r.add_argument("--in", dest="in_dir", required=True)
    r.add_argument("--metric", choices=METRICS, required=True)
    return p


def _simulate(args) -> int:
    base = ExperimentConfig.load(args.config)
    cfg = base.with_overrides(seed=args.seed, drops=args.drops, algorithms=args.algos,
                              sigma_e2=args.sigma_e2, out=args.out, workers=args.workers,
                              force=True if args.force else None)

    def progress(i, n):
        if i == n or i % 10 == 0:
            print(f"  {i}/{n} drops", file=sys.stderr)

    result = run_campaign(cfg, cfg.out, progress)
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["users", "sigma_e2", "algorithm", "completed", "mean_ee_mbit_per_j", "mean_n_active"])
    for row in summarize(cfg, result.rows):
        out.writerow([row["users"], row["sigma_e2"], row["algorithm"], row["completed"],
                      f"{row['mean_ee_mbit_per_j']:.4f}", f"{row['mean_n_active']:.3f}"])
    print(f"results written to {result.out_dir}", file=sys.stderr)
    if result.violations:
        for v in result.violations:
            print(f"invariant violation: {v}", file=sys.stderr)
        return EXIT_INVARIANT
    return 0


def _report(args) -> int:
    in_dir = Path(args.in_dir)
    cfg = load_config(in_dir)
    rows = load_rows(in_dir)
    out = csv.writer(sys.stdout, lineterminator="\n")
    if args.metric in ("ee", "sumrate"):
        key = "mean_ee_mbit_per_j" if args.metric == "ee" else "mean_sum_rate_bps"
        out.writerow(["users", "sigma_e2", "algorithm", "completed", "partial", key])
        for row in summarize(cfg, rows):
            out.writerow([row["users"], row["sigma_e2"], row["algorithm"], row["completed"],
                          str(row["partial"]).lower(), repr(row[key])])
    elif args.metric == "active-faps":
        with open(in_dir / "active_faps.csv", newline="") as f:
            sys.stdout.write(f.read())
    else:
        with open(in_dir / "user_rates.csv", newline="") as f:
            rates = list(csv.DictReader(f))
        out.writerow(["users", "sigma_e2", "algorithm", "rate_bps", "cdf"])
        groups = {}
        for r in rates:
            groups.setdefault((int(r["users"]), float(r["sigma_e2"]), r["algorithm"]), []).append(float(r["rate_bps"]))
        for (n, s, algo), vals in sorted(groups.items()):
            for v, p in aggregate_cdf(vals):
                out.writerow([n, s, algo, repr(v), repr(p)])
        for (n, s, algo), vals in sorted(groups.items()):
            cdf = aggregate_cdf(vals)
            print(f"# users={n} sigma_e2={s} {algo}: median {cdf_percentile(cdf, 0.5):.4g}, "
                  f"80th pct {cdf_percentile(cdf, 0.8):.4g}, mean {np.mean(vals):.4g}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            return _simulate(args)
        return _report(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"missing input: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
