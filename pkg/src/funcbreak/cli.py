"""Command line pipeline: CSV ingestion, break analysis, simulation tables.

Subcommands: ``detect`` (fully functional test), ``date`` (break dating with
confidence interval) and ``simulate`` (size/power/dating/coverage tables).
Reports are JSON documents echoing every tunable; simulation output is CSV.
Exit codes: 0 success, 2 data/input errors, 3 numerical degeneracy.
"""

import argparse
import csv
import datetime
import io
import json
import math
import sys
import warnings

import numpy as np

from . import dating, detect, fpca
from .basis import CurveSeries, DegenerateFitError, FourierBasis, fit_curve
from .longrun import BANDWIDTH_EXPONENTS, WEIGHTS, LongRunConfig
from .simlab import BreakSpec, DgpConfig, run_experiment, validate_grid

__all__ = ["DataFormatError", "ingest", "read_coeffs", "main"]

EXIT_DATA = 2
EXIT_NUMERIC = 3


class DataFormatError(ValueError):
    """Raised when an input file cannot be parsed into curves."""


def _days_in_year(year: int) -> int:
    return 366 if (year % 4 == 0 and (year % 100 != 0 or year % 400 == 0)) else 365


def ingest(source, basis_size: int = 21, max_missing: float = 0.10):
    """Read a ``date,value`` CSV into one curve per year.

    Day k of a Y-day year maps to t = (k - 0.5) / Y; each year's available
    values are least-squares fitted on the Fourier basis. Years with more than
    ``max_missing`` of their days missing (absent rows count as missing) are
    dropped with a warning. Returns (series, labels, dropped_years).
    """
    if hasattr(source, "read"):
        rows = list(csv.reader(source))
        origin = "<stream>"
    else:
        origin = str(source)
        with open(source, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    if not rows or [c.strip().lower() for c in rows[0]] != ["date", "value"]:
        raise DataFormatError(f"{origin}: expected header 'date,value'")

    per_year: dict[int, dict[int, float]] = {}
    bad_lines = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 2:
            bad_lines.append(lineno)
            continue
        date_text, value_text = row[0].strip(), row[1].strip()
        try:
            day = datetime.date.fromisoformat(date_text)
        except ValueError:
            bad_lines.append(lineno)
            continue
        if value_text == "":
            value = math.nan
        else:
            try:
                value = float(value_text)
            except ValueError:
                bad_lines.append(lineno)
                continue
        per_year.setdefault(day.year, {})[day.timetuple().tm_yday] = value
    if bad_lines:
        shown = ", ".join(str(x) for x in bad_lines[:20])
        more = "" if len(bad_lines) <= 20 else f" (+{len(bad_lines) - 20} more)"
        raise DataFormatError(f"{origin}: unparseable rows at lines {shown}{more}")
    if not per_year:
        raise DataFormatError(f"{origin}: no observations found")

    basis = FourierBasis(basis_size)
    labels, curves, dropped = [], [], []
    for year in sorted(per_year):
        days = _days_in_year(year)
        values = per_year[year]
        present = sum(1 for v in values.values() if not math.isnan(v))
        if (days - present) / days > max_missing:
            dropped.append(year)
            continue
        day_idx = np.array(sorted(values))
        t = (day_idx - 0.5) / days
        y = np.array([values[k] for k in sorted(values)])
        try:
            coeffs = fit_curve(basis, t, y)
        except DegenerateFitError as exc:
            raise DataFormatError(f"{origin}: year {year}: {exc}") from exc
        labels.append(str(year))
        curves.append(coeffs)
    if dropped:
        warnings.warn(
            "dropped years exceeding the missing-data threshold: "
            + ", ".join(str(y) for y in dropped),
            stacklevel=2,
        )
    if len(curves) < 2:
        raise DataFormatError(f"{origin}: fewer than two usable years")
    return CurveSeries(np.vstack(curves), basis), labels, dropped


def read_coeffs(source, basis_size: int = 21):
    """Read a pre-smoothed coefficient CSV with header label,c1,...,cD."""
    if hasattr(source, "read"):
        rows = list(csv.reader(source))
        origin = "<stream>"
    else:
        origin = str(source)
        with open(source, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    expected = ["label"] + [f"c{i}" for i in range(1, basis_size + 1)]
    if not rows or [c.strip() for c in rows[0]] != expected:
        raise DataFormatError(
            f"{origin}: expected header label,c1,...,c{basis_size}")
    labels, data = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != basis_size + 1:
            raise DataFormatError(f"{origin}: wrong column count at line {lineno}")
        try:
            data.append([float(v) for v in row[1:]])
        except ValueError:
            raise DataFormatError(
                f"{origin}: non-numeric coefficient at line {lineno}") from None
        labels.append(row[0])
    if len(data) < 2:
        raise DataFormatError(f"{origin}: fewer than two curve rows")
    return CurveSeries(np.array(data), FourierBasis(basis_size)), labels


def _dump_coeffs(series: CurveSeries, labels, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label"] + [f"c{i}" for i in range(1, series.basis.n_basis + 1)])
        for label, row in zip(labels, series.data):
            writer.writerow([label] + [repr(float(v)) for v in row])


def _load_series(args):
    if args.coeffs:
        if args.path == "-":
            series, labels = read_coeffs(sys.stdin, args.basis_size)
        else:
            series, labels = read_coeffs(args.path, args.basis_size)
        dropped = []
    elif args.path == "-":
        series, labels, dropped = ingest(sys.stdin, args.basis_size, args.max_missing)
    else:
        series, labels, dropped = ingest(args.path, args.basis_size, args.max_missing)
    if args.dump_coeffs:
        _dump_coeffs(series, labels, args.dump_coeffs)
    return series, labels, dropped


def _check_finite(node, crumb="report"):
    if isinstance(node, dict):
        for key, val in node.items():
            _check_finite(val, f"{crumb}.{key}")
    elif isinstance(node, (list, tuple)):
        for i, val in enumerate(node):
            _check_finite(val, f"{crumb}[{i}]")
    elif isinstance(node, float) and not math.isfinite(node):
        raise ValueError(f"non-finite number in {crumb}")


def _emit_json(report: dict, out_path) -> None:
    _check_finite(report)
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _year_label(labels, index: int) -> str:
    index = min(max(index, 1), len(labels))
    return labels[index - 1]


def _base_config(args, series, h_used, dropped):
    return {
        "basis_size": args.basis_size,
        "n_curves": series.n,
        "weight": args.weight,
        "bandwidth": args.bandwidth,
        "h": h_used,
        "alpha": args.alpha,
        "reps": args.reps,
        "grid": args.grid,
        "seed": args.seed,
        "max_missing": args.max_missing,
        "coeffs_input": bool(args.coeffs),
        "dropped_years": [str(y) for y in dropped],
    }


def _lr_config(args) -> LongRunConfig:
    return LongRunConfig(weight=args.weight, bandwidth=args.bandwidth)


def _cmd_detect(args) -> dict:
    series, labels, dropped = _load_series(args)
    report = detect.test(series, args.alpha, _lr_config(args),
                         reps=args.reps, grid=args.grid, seed=args.seed)
    k_hat = dating.estimate_break_date(series)
    return {
        "stat": report.stat,
        "p_value": report.p_value,
        "critical_values": {str(a): q for a, q in report.critical_values.items()},
        "k_hat": k_hat,
        "k_hat_label": _year_label(labels, k_hat),
        "theta_hat": k_hat / series.n,
        "config": _base_config(args, series, report.config["h"], dropped),
    }


def _cmd_date(args) -> dict:
    series, labels, dropped = _load_series(args)
    det = detect.test(series, args.alpha, _lr_config(args),
                      reps=args.reps, grid=args.grid, seed=args.seed)
    xi_cfg = dating.LimitProcessConfig(reps=args.xi_reps, seed=args.seed)
    rep = dating.date_break(series, args.alpha, _lr_config(args),
                            xi_config=xi_cfg, conservative=args.conservative)
    lo, hi = rep.ci
    report = {
        "stat": det.stat,
        "p_value": det.p_value,
        "critical_values": {str(a): q for a, q in det.critical_values.items()},
        "k_hat": rep.k_hat,
        "k_hat_label": _year_label(labels, rep.k_hat),
        "theta_hat": rep.theta_hat,
        "sigma2_hat": rep.sigma2_hat,
        "lambda1_hat": rep.lambda1_hat,
        "xi_quantiles": {str(q): v for q, v in rep.xi_quantiles.items()},
        "ci": {
            "lo": lo,
            "hi": hi,
            "lo_raw": rep.ci_raw[0],
            "hi_raw": rep.ci_raw[1],
            "lo_label": _year_label(labels, math.floor(lo)),
            "hi_label": _year_label(labels, math.ceil(hi)),
        },
        "conservative": rep.conservative,
        "config": _base_config(args, series, rep.config["h"], dropped),
    }
    report["config"]["xi_reps"] = args.xi_reps
    report["config"]["conservative"] = args.conservative
    if args.fpca:
        model = fpca.fit_fpca(series, tve=args.tve)
        result = fpca.fpca_statistic(series, model.d)
        report["fpca"] = {
            "tve": args.tve,
            "d": model.d,
            "k_tilde": result.k_hat,
            "k_tilde_label": _year_label(labels, result.k_hat),
        }
    return report


def _cmd_simulate(args) -> None:
    try:
        dgps = [
            DgpConfig(setting=s, dependence=dep, innovation=args.innovation,
                      df=args.df, n=n, n_basis=args.basis_size,
                      kappa=args.kappa, permute=not args.no_permute)
            for s in args.setting for dep in args.dependence for n in args.n
        ]
        if args.kind == "size":
            specs = []
        else:
            specs = [BreakSpec(m=m, snr=snr, theta=theta)
                     for m in args.m for snr in args.snr for theta in args.theta]
        validate_grid(args.kind, dgps, specs, args.detectors)
    except ValueError as exc:
        raise DataFormatError(f"invalid grid values: {exc}") from exc
    result = run_experiment(
        args.kind, dgps, specs, detectors=args.detectors, reps=args.sim_reps,
        alpha=args.alpha, seed=args.seed, workers=args.workers,
        null_reps=args.reps, null_grid=args.grid, xi_reps=args.xi_reps,
        conservative=args.conservative, lr_config=_lr_config(args),
    )
    if args.out:
        result.to_csv(args.out)
    else:
        buf = io.StringIO()
        result.to_csv(buf)
        sys.stdout.write(buf.getvalue())


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--basis-size", "-D", type=int, default=21,
                        dest="basis_size", help="number of Fourier basis functions")
    parser.add_argument("--weight", choices=sorted(WEIGHTS), default="bartlett")
    parser.add_argument("--bandwidth",
                        choices=sorted(BANDWIDTH_EXPONENTS) + ["adaptive"],
                        default="n14")
    parser.add_argument("--alpha", type=float, default=0.05)
    parser.add_argument("--reps", type=int, default=1000,
                        help="Monte Carlo draws for the null distribution")
    parser.add_argument("--grid", type=int, default=1000,
                        help="Brownian bridge grid resolution")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None, help="output path (default stdout)")


def _add_input(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("path", help="CSV input path, or - for stdin")
    parser.add_argument("--coeffs", action="store_true",
                        help="input is a pre-smoothed coefficient CSV")
    parser.add_argument("--max-missing", type=float, default=0.10,
                        dest="max_missing",
                        help="drop years missing more than this fraction of days")
    parser.add_argument("--dump-coeffs", default=None, dest="dump_coeffs",
                        help="write the smoothed coefficients to this CSV path")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="funcbreak",
        description="Structural break detection and dating for functional data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_detect = sub.add_parser("detect", help="fully functional break test")
    _add_input(p_detect)
    _add_common(p_detect)

    p_date = sub.add_parser("date", help="break dating with confidence interval")
    _add_input(p_date)
    _add_common(p_date)
    p_date.add_argument("--xi-reps", type=int, default=10_000, dest="xi_reps",
                        help="Monte Carlo draws for the argmax limit law")
    p_date.add_argument("--conservative", action="store_true",
                        help="use the top eigenvalue instead of sigma^2")
    p_date.add_argument("--fpca", action="store_true",
                        help="also report the fPCA break date")
    p_date.add_argument("--tve", type=float, default=0.90,
                        help="total variation explained for --fpca")

    p_sim = sub.add_parser("simulate", help="simulation study tables")
    p_sim.add_argument("kind", choices=["size", "power", "dating", "coverage"])
    _add_common(p_sim)
    p_sim.add_argument("--setting", type=int, nargs="+", default=[1, 2, 3])
    p_sim.add_argument("--dependence", nargs="+", default=["iid"],
                       choices=["iid", "far1"])
    p_sim.add_argument("--n", type=int, nargs="+", default=[100])
    p_sim.add_argument("--m", type=int, nargs="+", default=[1])
    p_sim.add_argument("--snr", type=float, nargs="+", default=[0.5])
    p_sim.add_argument("--theta", type=float, nargs="+", default=[0.5])
    p_sim.add_argument("--detectors", nargs="+",
                       default=["FF", "fPCA@0.85", "fPCA@0.90", "fPCA@0.95",
                                "Aligned"])
    p_sim.add_argument("--sim-reps", type=int, default=1000, dest="sim_reps",
                       help="replications per cell")
    p_sim.add_argument("--innovation", choices=["gaussian", "student"],
                       default="gaussian")
    p_sim.add_argument("--df", type=int, default=None)
    p_sim.add_argument("--kappa", type=float, default=0.5)
    p_sim.add_argument("--no-permute", action="store_true", dest="no_permute")
    p_sim.add_argument("--xi-reps", type=int, default=2000, dest="xi_reps")
    p_sim.add_argument("--conservative", action="store_true")
    p_sim.add_argument("--workers", type=int, default=None)
    p_sim.set_defaults(seed=0)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "detect":
            _emit_json(_cmd_detect(args), args.out)
        elif args.command == "date":
            _emit_json(_cmd_date(args), args.out)
        else:
            _cmd_simulate(args)
    except (DataFormatError, DegenerateFitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, ArithmeticError, AssertionError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
