"""
Command-line front end that writes curves and simulation summaries as CSV or JSON.

Every output starts with a run manifest (command, resolved config, seed, RNG
algorithm, version, duration). In CSV it is a single ``#``-prefixed JSON line;
in JSON it is the ``manifest`` member. Everything after the manifest is
byte-identical across reruns with the same seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import asdict, dataclass
from typing import Any, Sequence

from . import __version__, rmt
from .shrinkers import ShrinkageRule, Threshold
from .sim import (
    NOISE_SCALINGS,
    RNG_ALGORITHM,
    ManifoldExperimentConfig,
    SpikedExperimentConfig,
    run_manifold_experiment,
    run_spiked_experiment,
)

DEFAULT_BETAS = [0.2, 0.4, 0.6, 0.8, 1.0]
DEFAULT_SIGMAS = [round(0.225 * k, 12) for k in range(1, 9)]
MANIFEST_PREFIX = "# manifest: "

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


@dataclass
class RunManifest:
    command: str
    config: dict[str, Any]
    master_seed: int | None
    rng_algorithm: str | None
    version: str
    duration_seconds: float
    metadata: dict[str, Any]


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, Threshold):
        return value.value
    return value


def render(columns: Sequence[str], rows: Sequence[Sequence[Any]], manifest: RunManifest, as_json: bool) -> str:
    man = _jsonable(asdict(manifest))
    if as_json:
        doc = {"manifest": man, "columns": list(columns), "rows": [dict(zip(columns, r)) for r in rows]}
        return json.dumps(doc, indent=1) + "\n"
    buf = io.StringIO()
    buf.write(MANIFEST_PREFIX + json.dumps(man, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def strip_manifest(text: str) -> str:
    """Output body without the manifest, for reproducibility comparisons."""
    if text.startswith(MANIFEST_PREFIX):
        return text.split("\n", 1)[1]
    doc = json.loads(text)
    doc.pop("manifest", None)
    return json.dumps(doc, indent=1)


def _emit(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _grid(start: float, stop: float, step: float) -> list[float]:
    count = int(math.floor((stop - start) / step + 1e-9))
    return [round(start + k * step, 12) for k in range(count + 1)]


# --------------------------------------------------------------------------
# commands; each returns (columns, rows, config, seed, rng, metadata)
# --------------------------------------------------------------------------


def cmd_asym_loss(args: argparse.Namespace):
    alphas = rmt.alpha_grid(args.alpha_min, args.alpha_max, args.step)
    rows = [(beta, a, rmt.optimal_delta(a, beta)) for beta in args.beta for a in alphas]
    config = {"beta": args.beta, "alpha_min": args.alpha_min, "alpha_max": args.alpha_max, "step": args.step}
    meta = {"ell_plus": {str(b): rmt.bulk_edges(b)[2] for b in args.beta}}
    return ("beta", "alpha", "optimal_delta"), rows, config, None, None, meta


def cmd_shrinker_curve(args: argparse.Namespace):
    beta, sigma = args.beta[0], args.sigma[0]
    lams = _grid(args.lam_min, args.lam_max, args.step)
    classical = ShrinkageRule.classical(sigma)
    optimal = ShrinkageRule.optimal(sigma, beta, args.threshold_variant)
    rows = [(lam, classical(lam), optimal(lam)) for lam in lams]
    config = {
        "beta": beta,
        "sigma": sigma,
        "lam_min": args.lam_min,
        "lam_max": args.lam_max,
        "step": args.step,
        "threshold_variant": args.threshold_variant,
    }
    meta = {"optimal_cutoff": optimal.cutoff, "classical_cutoff": classical.cutoff}
    return ("lambda", "eta_classical", "eta_optimal"), rows, config, None, None, meta


def cmd_spiked_sim(args: argparse.Namespace):
    cfg = SpikedExperimentConfig.with_d(
        args.d,
        n=args.n,
        beta_grid=tuple(args.beta),
        sigma_grid=tuple(args.sigma),
        reps=args.reps,
        master_seed=args.seed,
        noise_scaling=args.noise_scaling,
        threshold=args.threshold_variant,
    )
    report = run_spiked_experiment(cfg)
    columns = (
        "beta",
        "sigma",
        "rule",
        "median_log_excess_loss",
        "iqr_low",
        "iqr_high",
        "clamp_count",
        "theoretical_optimal_loss",
        "critical_sigma",
        "median_loss",
    )
    rows = []
    for cell in report.cells:
        for rule in ("classical", "optimal"):
            lo, med, hi = cell.log_excess_quartiles(rule)
            rows.append(
                (
                    cell.beta,
                    cell.sigma,
                    rule,
                    med,
                    lo,
                    hi,
                    cell.clamp_counts[rule],
                    cell.theoretical_optimal_loss,
                    min(cell.critical_sigmas) if cell.critical_sigmas else float("inf"),
                    cell.summary(rule).median,
                )
            )
    config = _jsonable(asdict(cfg))
    meta = {
        "critical_sigma_per_spike": {str(c.beta): list(c.critical_sigmas) for c in report.cells},
        "p": {str(c.beta): c.p for c in report.cells},
    }
    return columns, rows, config, cfg.master_seed, RNG_ALGORITHM, meta


def cmd_manifold_sim(args: argparse.Namespace):
    cfg = ManifoldExperimentConfig(
        p=args.p,
        beta_grid=tuple(args.beta),
        sigma_grid=tuple(args.sigma),
        reps=args.reps,
        master_seed=args.seed,
        noise_scaling=args.noise_scaling,
        threshold=args.threshold_variant,
    )
    report = run_manifold_experiment(cfg)
    columns = ("beta", "sigma", "test_point", "rule", "mean_error", "std_error", "n_actual")
    rows = []
    for cell in report.cells:
        for k in range(len(cfg.test_points)):
            for rule in ("classical", "optimal"):
                summ = cell.summary(rule, k, args.convention, percent=True)
                rows.append((cell.beta, cell.sigma, f"y{k + 1}", rule, summ.mean, summ.std, cell.n))
    config = _jsonable(asdict(cfg))
    config["convention"] = args.convention
    meta = {
        "error_units": "percent",
        "test_points": {f"y{k + 1}": list(tp) for k, tp in enumerate(cfg.test_points)},
        "true_md_sq": {f"y{k + 1}": float(v) for k, v in enumerate(report.cells[0].truth_sq)},
    }
    return columns, rows, config, cfg.master_seed, RNG_ALGORITHM, meta


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0.0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _nonneg_float(text: str) -> float:
    value = float(text)
    if not value >= 0.0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {text}")
    return value


def _beta(text: str) -> float:
    value = float(text)
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"beta must lie in (0, 1], got {text}")
    return value


def _pos_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdshrink", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", default="-", help="output path, '-' for stdout (default)")
        p.add_argument("--json", action="store_true", help="write a JSON document instead of CSV")

    p = sub.add_parser("asym-loss", help="optimal asymptotic loss versus spike strength")
    p.add_argument("--beta", type=_beta, nargs="+", default=DEFAULT_BETAS)
    p.add_argument("--alpha-min", type=_positive_float, default=0.1)
    p.add_argument("--alpha-max", type=_positive_float, default=3.0)
    p.add_argument("--step", type=_positive_float, default=0.01)
    common(p)
    p.set_defaults(handler=cmd_asym_loss)

    p = sub.add_parser("shrinker-curve", help="classical and optimal shrinkers on an eigenvalue grid")
    p.add_argument("--beta", type=_beta, nargs=1, default=[1.0])
    p.add_argument("--sigma", type=_positive_float, nargs=1, default=[1.0])
    p.add_argument("--lam-min", type=_nonneg_float, default=0.0)
    p.add_argument("--lam-max", type=_positive_float, default=10.0)
    p.add_argument("--step", type=_positive_float, default=0.01)
    p.add_argument("--threshold-variant", choices=[t.value for t in Threshold], default=Threshold.BULK_EDGE.value)
    common(p)
    p.set_defaults(handler=cmd_shrinker_curve)

    p = sub.add_parser("spiked-sim", help="Monte-Carlo losses on the spiked model")
    p.add_argument("--n", type=_pos_int, default=300)
    p.add_argument("--d", type=_nonneg_int, default=1, help="number of spikes; spikes are d, d-1, ..., 1")
    p.add_argument("--beta", type=_beta, nargs="+", default=DEFAULT_BETAS)
    p.add_argument("--sigma", type=_positive_float, nargs="+", default=DEFAULT_SIGMAS)
    p.add_argument("--reps", type=_pos_int, default=200)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--noise-scaling", choices=NOISE_SCALINGS, default="sigma")
    p.add_argument("--threshold-variant", choices=[t.value for t in Threshold], default=Threshold.BULK_EDGE.value)
    common(p)
    p.set_defaults(handler=cmd_spiked_sim)

    p = sub.add_parser("manifold-sim", help="normalized Mahalanobis distance error on a paraboloid")
    p.add_argument("--p", type=_pos_int, default=100)
    p.add_argument("--beta", type=_beta, nargs="+", default=[0.1, 0.5, 1.0])
    p.add_argument("--sigma", type=_positive_float, nargs="+", default=[1.0, 1.5, 2.0])
    p.add_argument("--reps", type=_pos_int, default=500)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--convention", choices=["squared", "root"], default="squared", help="compare d^2 or d")
    p.add_argument("--noise-scaling", choices=NOISE_SCALINGS, default="sigma")
    p.add_argument("--threshold-variant", choices=[t.value for t in Threshold], default=Threshold.BULK_EDGE.value)
    common(p)
    p.set_defaults(handler=cmd_manifold_sim)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "alpha_max", None) is not None and args.alpha_max <= args.alpha_min:
        parser.error("--alpha-max must exceed --alpha-min")
    if getattr(args, "lam_max", None) is not None and args.lam_max <= args.lam_min:
        parser.error("--lam-max must exceed --lam-min")

    start = time.perf_counter()
    try:
        columns, rows, config, seed, rng_alg, meta = args.handler(args)
    except ValueError as exc:
        # configuration problems surfaced by the library count as usage errors
        print(f"mdshrink: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"mdshrink: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    manifest = RunManifest(
        command=args.command,
        config=config,
        master_seed=seed,
        rng_algorithm=rng_alg,
        version=__version__,
        duration_seconds=round(time.perf_counter() - start, 6),
        metadata=meta,
    )
    _emit(render(columns, rows, manifest, args.json), args.out)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
