"""
GP Adversarial Certify - Main Orchestrator

Command-line driver for certifying GP classifiers against adversarial
examples: dataset certificates, attack sweeps, kernel-parameter sweeps,
monotonicity scans and synthetic dataset generation.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

import argparse
import json
import logging
import math
import sys

import numpy as np

from attack_harness import run_attack_sweep
from bounds import dataset_certificate, monotonicity_scan
from dataset_io import (
    check_writable,
    emit_plot_data,
    fmt,
    load_dataset,
    save_dataset,
    write_json,
    write_records_csv,
    write_rows,
)
from errors import ConfigError, DomainError, NumericError
from kernel import KernelSpec, kernel_at_distance
from settings import get_settings
from sweep_service import SweepConfig, generate_blobs, run_sweep

SCAN_COLUMNS = ["s", "phi_bound", "exact_tail", "mu", "sigma2"]


def configure_logging():
    settings = get_settings()
    logging.basicConfig(level=settings.log_level, format="%(levelname)s %(name)s: %(message)s")


def _kernel(args) -> KernelSpec:
    try:
        return KernelSpec(args.theta1, args.theta2)
    except DomainError as e:
        raise ConfigError(str(e))


def _radius(kernel: KernelSpec, norm: float) -> float:
    if not (math.isfinite(norm) and norm > 0):
        raise ConfigError(f"--norm must be a positive number, got {norm!r}")
    return kernel_at_distance(kernel, norm)


def _outputs(*paths):
    for path in paths:
        if path:
            check_writable(path)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_certify(args) -> int:
    _outputs(args.output)
    dataset = load_dataset(args.dataset)
    kernel = _kernel(args)
    r = args.r if args.r is not None else _radius(kernel, args.norm)

    print(f"\n🔍 Certifying {dataset.n} points (D={dataset.dim}) at r={r:.6g}")
    result = dataset_certificate(dataset, r, args.epsilon, kernel,
                                 scan_points=args.scan_points, jitter=args.jitter)
    cert = result.certificate

    print(f"✓ Closest cross pair: ({cert.pair.plus_index}, {cert.pair.minus_index}), distance {cert.pair.distance:.6g}")
    print(f"  mu={cert.mu:.6g}  sigma^2={cert.sigma2:.6g}")
    print(f"  exact tail={cert.exact_tail:.6g}  MSP bound={cert.phi_bound:.6g}")
    print(f"  valid={cert.valid}  monotone in s={result.scan.monotone}  certifying={result.certifying}")
    if result.scan.reason:
        print(f"  ⚠️  {result.scan.reason}")

    if args.output:
        write_json(result.to_dict(), args.output)
        print(f"\n💾 Certificate saved to: {args.output}")
    else:
        print(json.dumps(result.to_dict(), indent=2))
    return 0


def cmd_attack(args) -> int:
    _outputs(args.output, args.plot)
    dataset = load_dataset(args.dataset)
    kernel = _kernel(args)
    _radius(kernel, args.norm)

    print(f"\n🔄 Attacking {args.dataset} (theta1={kernel.theta1:g}, theta2={kernel.theta2:g}, norm={args.norm:g})")
    records = run_attack_sweep(dataset, kernel, args.norm, epsilon=args.epsilon, jitter=args.jitter,
                               origin_class=args.origin_class, max_workers=args.workers,
                               show_progress=True)

    following = sum(1 for r in records if r.follows_theorem)
    valid = sum(1 for r in records if r.valid)
    print(f"\n📊 Summary:")
    print(f"  Adversarial examples: {len(records)}")
    print(f"  Valid certificates: {valid}")
    print(f"  Follow the bound: {following} ({following / len(records):.4f})")

    write_records_csv(records, args.output)
    print(f"\n💾 Records saved to: {args.output}")
    if args.plot:
        emit_plot_data(records, args.plot)
        print(f"💾 Plot data saved to: {args.plot}")
    return 0


def cmd_sweep(args) -> int:
    config = SweepConfig.from_json(args.config)
    grid = len(config.theta1_values) * len(config.theta2_values)
    print(f"\n🔄 Sweeping {grid} conditions x {config.replicate_count} replicate(s)")
    summary = run_sweep(config, args.output_dir, show_progress=True)

    print(f"\n📊 Summary:")
    for row in summary.rows:
        if row["status"] != "ok":
            print(f"  theta1={row['theta1']:g} theta2={row['theta2']:g}: ❌ {row['error']}")
            continue
        print(
            f"  theta1={row['theta1']:g} theta2={row['theta2']:g}: "
            f"follow={row['proportion_following_theorem']:.4f} "
            f"max theoretical={row['mean_max_theoretical']:.4f} ± {row['std_max_theoretical']:.4f} "
            f"max empirical={row['max_empirical']:.4f}"
        )
    print(f"\n💾 Results saved to: {args.output_dir}")
    return 0


def cmd_scan_monotone(args) -> int:
    _outputs(args.output)
    kernel = _kernel(args)
    if args.grid:
        try:
            grid = [float(v) for v in args.grid.split(",")]
        except ValueError:
            raise ConfigError(f"--grid must be comma-separated numbers, got {args.grid!r}")
    elif args.s_min is not None and args.s_max is not None:
        grid = list(np.linspace(args.s_min, args.s_max, args.points))
    else:
        raise ConfigError("give --grid or both --s-min and --s-max")

    scan = monotonicity_scan(kernel, args.r, grid, epsilon=args.epsilon)
    rows = [[row[col] for col in SCAN_COLUMNS] for row in scan.table]
    if args.output:
        write_rows(args.output, SCAN_COLUMNS, rows)
        print(f"💾 Scan saved to: {args.output}")
    else:
        print(",".join(SCAN_COLUMNS))
        for row in rows:
            print(",".join(fmt(v) for v in row))
    print(f"{'✓' if scan.monotone else '⚠️ '} monotone={scan.monotone}")
    return 0


def cmd_gen_blobs(args) -> int:
    _outputs(args.output)
    dataset = generate_blobs(args.n_per_class, args.dim, args.separation, args.spread, args.seed)
    save_dataset(dataset, args.output)
    print(f"✓ Generated {dataset.n} points (D={dataset.dim})")
    print(f"💾 Dataset saved to: {args.output}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_kernel_args(parser: argparse.ArgumentParser):
    parser.add_argument("--theta1", type=float, required=True, help="Kernel amplitude (k(x, x))")
    parser.add_argument("--theta2", type=float, required=True, help="Kernel length-scale parameter")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gp-certify",
        description="Certify Gaussian-process classifiers against adversarial examples",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s gen-blobs --n-per-class 200 --dim 2 --separation 10 --spread 1 --seed 7 --output blobs.csv
  %(prog)s certify --dataset blobs.csv --theta1 1 --theta2 10 --norm 0.5
  %(prog)s attack --dataset blobs.csv --theta1 1 --theta2 10 --norm 0.5 --output records.csv
  %(prog)s sweep --config sweep.json --output-dir results/
  %(prog)s scan-monotone --theta1 1 --theta2 10 --r 0.9 --s-min 0.01 --s-max 0.5
        """
    )
    sub = parser.add_subparsers(dest="command", required=True)

    certify = sub.add_parser("certify", help="Dataset-level certificate as JSON")
    certify.add_argument("--dataset", "-d", required=True, help="Dataset file (.csv or .json manifest)")
    _add_kernel_args(certify)
    radius = certify.add_mutually_exclusive_group(required=True)
    radius.add_argument("--r", type=float, help="Perturbation as a kernel value k(x+, x*)")
    radius.add_argument("--norm", type=float, help="Perturbation as a Euclidean distance")
    certify.add_argument("--epsilon", type=float, default=0.0, help="Mean gap (default: 0)")
    certify.add_argument("--jitter", type=float, help="Jitter of the certified model, recorded only")
    certify.add_argument("--scan-points", type=int, help="Monotonicity scan grid size")
    certify.add_argument("--output", "-o", help="Output file (JSON); prints to stdout if omitted")
    certify.set_defaults(func=cmd_certify)

    attack = sub.add_parser("attack", help="Attack every origin point and compare with the bound")
    attack.add_argument("--dataset", "-d", required=True, help="Dataset file (.csv or .json manifest)")
    _add_kernel_args(attack)
    attack.add_argument("--norm", type=float, required=True, help="Euclidean perturbation length (no default)")
    attack.add_argument("--epsilon", type=float, default=0.0, help="Mean gap (default: 0)")
    attack.add_argument("--jitter", type=float, help="Gram diagonal jitter (default: GPCERT_JITTER_SCALE * theta1)")
    attack.add_argument("--origin-class", default="+1", choices=["+1", "-1", "both"],
                        help="Class the attacks start from (default: +1)")
    attack.add_argument("--workers", type=int, help="Thread pool width (default: GPCERT_MAX_WORKERS)")
    attack.add_argument("--output", "-o", required=True, help="Records CSV")
    attack.add_argument("--plot", help="Optional scatter-data CSV")
    attack.set_defaults(func=cmd_attack)

    sweep = sub.add_parser("sweep", help="Kernel-parameter sweep from a JSON config")
    sweep.add_argument("--config", "-c", required=True, help="JSON file with SweepConfig fields")
    sweep.add_argument("--output-dir", "-o", required=True, help="Directory for summary and per-condition files")
    sweep.set_defaults(func=cmd_sweep)

    scan = sub.add_parser("scan-monotone", help="Tabulate the MSP bound over a grid of s values")
    _add_kernel_args(scan)
    scan.add_argument("--r", type=float, required=True, help="Perturbation kernel value")
    scan.add_argument("--grid", help="Comma-separated ascending s values")
    scan.add_argument("--s-min", type=float, help="Grid start")
    scan.add_argument("--s-max", type=float, help="Grid end")
    scan.add_argument("--points", type=int, default=100, help="Grid size with --s-min/--s-max (default: 100)")
    scan.add_argument("--epsilon", type=float, default=0.0, help="Mean gap (default: 0)")
    scan.add_argument("--output", "-o", help="Output CSV; prints to stdout if omitted")
    scan.set_defaults(func=cmd_scan_monotone)

    blobs = sub.add_parser("gen-blobs", help="Generate a two-blob synthetic dataset")
    blobs.add_argument("--n-per-class", type=int, required=True)
    blobs.add_argument("--dim", type=int, required=True)
    blobs.add_argument("--separation", type=float, required=True)
    blobs.add_argument("--spread", type=float, required=True)
    blobs.add_argument("--seed", type=int, default=0)
    blobs.add_argument("--output", "-o", required=True, help="Dataset file (.csv or .json manifest)")
    blobs.set_defaults(func=cmd_gen_blobs)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configure_logging()
        return args.func(args)
    except ConfigError as e:
        print(f"❌ {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"❌ {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
