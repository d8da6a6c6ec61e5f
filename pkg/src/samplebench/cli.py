"""Command-line entry points: run experiments, ablations, or standalone metrics.

Exit codes: 0 success, 2 configuration/validation error, 3 runtime failure.
Set SAMPLEBENCH_THREADS to cap the BLAS thread pool.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path


def _apply_thread_override():
    threads = os.environ.get("SAMPLEBENCH_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                    "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, threads)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="samplebench",
                                     description="Benchmark variational sampling methods.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment from a JSON config")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--out", default=None, help="output directory override")
    run_p.add_argument("--desk-scale", action="store_true",
                       help="apply reduced desk-scale training budgets")

    abl_p = sub.add_parser("ablate", help="run an ablation grid around a base config")
    abl_p.add_argument("--kind", required=True)
    abl_p.add_argument("--config", required=True)
    abl_p.add_argument("--out", default=None)
    abl_p.add_argument("--desk-scale", action="store_true")

    met_p = sub.add_parser("metrics", help="evaluate criteria from CSV samples")
    met_p.add_argument("--samples", required=True,
                       help="CSV with columns x_1..x_d and optionally a log-weight column")
    met_p.add_argument("--weights-col", default="log_w")
    met_p.add_argument("--target", required=True)
    met_p.add_argument("--dim", type=int, default=None)
    met_p.add_argument("--target-seed", type=int, default=0)
    met_p.add_argument("--csv-path", default=None, help="dataset path for logistic targets")
    met_p.add_argument("--ipm-samples", type=int, default=512)
    met_p.add_argument("--out", default=None, help="write the JSON report here")
    return parser


def _cmd_run(args) -> int:
    from .harness import apply_desk_scale, emit_results, load_config, run_experiment

    config = load_config(args.config)
    if args.desk_scale:
        config = apply_desk_scale(config)
    if args.out:
        config.output_dir = args.out
    record = run_experiment(config)
    paths = emit_results(record, config.output_dir)
    print(f"wrote {paths['csv']} and {paths['summary']}")
    for name, stats in sorted(record.summary.items()):
        print(f"  {name:16s} {stats['mean']:.6g} +- {stats['std']:.3g}")
    if record.failures:
        print(f"  {len(record.failures)} seed(s) failed; see summary JSON")
        return 3
    return 0


def _cmd_ablate(args) -> int:
    from .harness import apply_desk_scale, emit_ablation, load_config, run_ablation

    config = load_config(args.config)
    if args.desk_scale:
        config = apply_desk_scale(config)
    if args.out:
        config.output_dir = args.out
    record = run_ablation(args.kind, config)
    paths = emit_ablation(record, config.output_dir)
    print(f"wrote {paths['csv']} and {paths['summary']}")
    return 0


def _load_samples_csv(path, weights_col):
    import numpy as np

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows, dtype=float)
    x_cols = [i for i, name in enumerate(header) if name.startswith("x_")]
    if not x_cols:
        raise ValueError("samples CSV needs x_1..x_d columns")
    log_w = None
    if weights_col in header:
        log_w = data[:, header.index(weights_col)]
    return data[:, x_cols], log_w


def _cmd_metrics(args) -> int:
    import numpy as np

    from .errors import ConfigError
    from .harness import build_target
    from .metrics import (
        REVERSE, WeightedSamples, ejs, elbo, emc, ess_estimates, log_z_estimates, mmd,
        sinkhorn_w2,
    )
    from .numerics.rng import RngStream

    x, log_w = _load_samples_csv(args.samples, args.weights_col)
    params = {}
    if args.dim is not None:
        params["dim"] = args.dim
    if args.target == "mog" or args.target == "mos":
        params["seed"] = args.target_seed
    if args.target == "logistic":
        if not args.csv_path:
            raise ConfigError("logistic target needs --csv-path")
        params["csv_path"] = args.csv_path
    target = build_target(args.target, params)
    if x.shape[1] != target.dim:
        raise ConfigError(f"samples have dimension {x.shape[1]}, target has {target.dim}")

    report = {}
    if log_w is not None:
        ws = WeightedSamples(x, log_w, REVERSE)
        report["elbo"] = elbo(ws)
        est, delta = log_z_estimates(ws, target.true_log_z)
        report["log_z_rev"] = est
        if delta is not None:
            report["delta_log_z_rev"] = delta
        report["ess_rev"] = ess_estimates(ws)
    if target.mode_model is not None:
        probs = target.mode_model.prob(x)
        report["emc"] = emc(probs)
        if target.mode_model.true_mode_probs is not None:
            report["ejs"] = ejs(probs, target.mode_model.true_mode_probs)
    if target.exact_sampler is not None:
        k = min(args.ipm_samples, len(x))
        y = target.exact_sampler(RngStream(args.target_seed, 999), k)
        report["mmd"] = mmd(x[:k], y)
        report["w2"], _ = sinkhorn_w2(x[:k], y, max_iters=300)

    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def main(argv=None) -> int:
    _apply_thread_override()
    args = build_parser().parse_args(argv)
    from .errors import ConfigError, IngestionError, UsageError

    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "ablate":
            return _cmd_ablate(args)
        if args.command == "metrics":
            return _cmd_metrics(args)
        return 2
    except (ConfigError, IngestionError, UsageError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
