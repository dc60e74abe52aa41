"""Command-line front end: analyze, compare, bound, simulate, report."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import re
import sys
from pathlib import Path

from .bounds import excess_risk_bound, scheduled_bound
from .errors import DomainError, FitRangeError, LossSpecError, PsiProfileError, TrainingDivergenceError
from .harness import ExperimentConfig, get_distribution, run_rate_experiment
from .intensity import (
    FIT_POINTS,
    THETA_MAX,
    THETA_MIN,
    classify_ratio,
    fit_intensity,
    verify_intensity_range,
)
from .losses import LOSS_GRAMMAR, check_bayes_consistency, parse_loss_spec

log = logging.getLogger("surrogate_rates")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _clean(obj):
    # JSON has no NaN/inf; they become null
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def dump_json(obj) -> str:
    """Canonical JSON; parsing and re-dumping reproduces the same bytes."""
    return json.dumps(_clean(obj), indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def dump_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def dump_table(rows: list[dict], columns: list[tuple[str, str, str]]) -> str:
    """Fixed-width table; ``columns`` are (key, header, format spec)."""
    cells = [[header for _, header, _ in columns]]
    for row in rows:
        line = []
        for key, _, spec in columns:
            value = row.get(key)
            if value is None:
                line.append("-")
            elif spec and isinstance(value, (int, float)) and not isinstance(value, bool):
                line.append(format(value, spec))
            else:
                line.append(str(value))
        cells.append(line)
    widths = [max(len(r[i]) for r in cells) for i in range(len(columns))]
    out = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    out.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(out) + "\n"


def _parse_losses(specs: list[str]):
    try:
        return [parse_loss_spec(s) for s in specs]
    except LossSpecError as exc:
        raise UsageError(str(exc)) from None


def _fit_kwargs(args) -> dict:
    return {
        "theta_min": args.theta_min,
        "theta_max": args.theta_max,
        "points": args.fit_points,
        "adaptive": not args.no_adaptive,
    }


def analyze_rows(losses, fit_kwargs) -> list[dict]:
    rows = []
    for loss in losses:
        report = check_bayes_consistency(loss)
        est, _ = fit_intensity(loss, **fit_kwargs)
        rows.append(
            {
                "loss": loss.name,
                "consistent": report.consistent,
                "I": est.I,
                "S": est.S,
                "alpha": est.alpha,
                "M": est.M,
                "fit_r2": est.fit_r2,
                "theta_min": est.theta_fit_range[0],
                "theta_max": est.theta_fit_range[1],
                "verdict": "accepted" if est.accepted else "suspect",
                "intensity_in_range": verify_intensity_range(est),
                "derivative_at_zero": report.to_dict()["derivative_at_zero"],
            }
        )
    return rows


ANALYZE_COLUMNS = [
    ("loss", "loss", ""),
    ("consistent", "consistent", ""),
    ("I", "I", ".5f"),
    ("S", "S", ".5f"),
    ("alpha", "alpha", ".5f"),
    ("M", "M", ".5f"),
    ("fit_r2", "R2", ".7f"),
    ("verdict", "verdict", ""),
]


def _emit(args, payload, rows, columns) -> str:
    if args.format == "json":
        return dump_json(payload)
    if args.format == "csv":
        return dump_csv(rows)
    return dump_table(rows, columns)


def _write(args, text: str) -> None:
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_analyze(args) -> int:
    losses = _parse_losses(args.losses)
    rows = analyze_rows(losses, _fit_kwargs(args))
    _write(args, _emit(args, {"analysis": rows}, rows, ANALYZE_COLUMNS))
    return EXIT_OK


def cmd_compare(args) -> int:
    first, second = _parse_losses(args.losses)
    kwargs = _fit_kwargs(args)
    verdict = classify_ratio(fit_intensity(first, **kwargs)[0], fit_intensity(second, **kwargs)[0])
    row = verdict.to_dict()
    if args.format == "table":
        text = (
            f"{row['first']} vs {row['second']}: {row['lambda_class']}"
            + (f" (lambda = {row['lambda_value']:.6g})" if row["lambda_value"] is not None else "")
            + ("  [low confidence]" if row["low_confidence"] else "")
            + f"\n{verdict.sentence}\n"
        )
    else:
        text = _emit(args, row, [row], [])
    _write(args, text)
    return EXIT_OK


def _is_modified_hinge_family(spec: str) -> bool:
    return spec == "modified_hinge" or spec.startswith("modified_hinge:")


def bound_rows(specs: list[str], p: float, q: float | None, fit_kwargs: dict) -> list[dict]:
    rows = []
    for spec in specs:
        if q is not None:
            if not _is_modified_hinge_family(spec):
                raise UsageError(f"--delta-schedule applies to the modified_hinge family only, not {spec!r}")
            bound = scheduled_bound(p, q)
        else:
            if spec == "modified_hinge":
                raise UsageError("modified_hinge needs ':delta=<float>' unless --delta-schedule is given")
            (loss,) = _parse_losses([spec])
            est, _ = fit_intensity(loss, **fit_kwargs)
            bound = excess_risk_bound(p, est)
        row = bound.to_dict()
        row["loss"] = spec
        row["order"] = bound.order()
        rows.append(row)
    return rows


def cmd_bound(args) -> int:
    rows = bound_rows(args.losses, args.p, args.delta_schedule, _fit_kwargs(args))
    if args.format == "table":
        text = "".join(f"{r['loss']}: {r['bound']}\n" for r in rows)
    elif args.format == "csv":
        flat = [{**{k: v for k, v in r.items() if k != "schedule"}, "delta_exponent": (r["schedule"] or {}).get("delta_exponent")} for r in rows]
        text = dump_csv(flat)
    else:
        text = dump_json({"bounds": rows})
    _write(args, text)
    return EXIT_OK


def file_stem(spec: str) -> str:
    return re.sub(r"[^A-Za-z0-9.]+", "_", spec).strip("_")


def _experiment_config(args) -> ExperimentConfig:
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        try:
            cfg = ExperimentConfig.from_json(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        except (DomainError, TypeError, ValueError) as exc:
            raise UsageError(f"bad config: {exc}") from None
        overrides = {}
    else:
        if not args.loss:
            raise UsageError("simulate needs a loss or --config")
        cfg = ExperimentConfig(loss=args.loss)
        overrides = {}
    if args.loss and args.config:
        overrides["loss"] = args.loss
    for key in ("distribution", "trials", "seed", "mc_samples", "p"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if args.n_grid:
        try:
            overrides["n_grid"] = tuple(int(x) for x in args.n_grid.split(","))
        except ValueError:
            raise UsageError(f"--n-grid must be comma-separated integers, got {args.n_grid!r}") from None
    if overrides:
        cfg = ExperimentConfig(**{**cfg.to_dict(), **overrides, "n_grid": tuple(overrides.get("n_grid", cfg.n_grid))})
    return cfg


def run_simulation(cfg: ExperimentConfig, out_dir: Path):
    (loss,) = _parse_losses([cfg.loss])
    dist = get_distribution(cfg.distribution)
    est, _ = fit_intensity(loss)
    result = run_rate_experiment(
        loss,
        dist,
        cfg.n_grid,
        cfg.trials,
        p_assumed=cfg.p,
        seed=cfg.seed,
        mc_samples=cfg.mc_samples,
        intensity=est.I,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = file_stem(f"{cfg.loss}_{cfg.distribution}_seed{cfg.seed}")
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.json"
    csv_path.write_text(result.to_csv(), encoding="utf-8")
    summary = {"config": cfg.to_dict(), "result": result.summary()}
    json_path.write_text(dump_json(summary), encoding="utf-8")
    return result, csv_path, json_path


def cmd_simulate(args) -> int:
    cfg = _experiment_config(args)
    result, csv_path, json_path = run_simulation(cfg, Path(args.out or "results"))
    if args.format == "json":
        sys.stdout.write(dump_json(result.summary()))
    else:
        sys.stdout.write(
            f"loss={result.loss_name} distribution={result.distribution} trials={result.trials_per_n} seed={result.seed}\n"
            f"fitted_exponent={result.fitted_exponent:.4f} ± {result.exponent_halfwidth:.4f}"
            + (f" (bound exponent p*I={result.bound_exponent:.4f})" if result.bound_exponent is not None else "")
            + f"\nviolations={result.psi_inequality_violations}\n"
            f"wrote {csv_path} and {json_path}\n"
        )
    return EXIT_OK if result.psi_inequality_violations == 0 else EXIT_FAIL


def cmd_report(args) -> int:
    """Analysis, pairwise comparisons, bounds and psi profiles written to a directory."""
    losses = _parse_losses(args.losses)
    out = Path(args.out or "report")
    (out / "profiles").mkdir(parents=True, exist_ok=True)
    kwargs = _fit_kwargs(args)
    fits = {}
    for loss in losses:
        est, profile = fit_intensity(loss, **kwargs)
        fits[loss.name] = est
        (out / "profiles" / f"{file_stem(loss.name)}.csv").write_text(profile.to_csv(), encoding="utf-8")
    rows = analyze_rows(losses, kwargs)
    comparisons = [
        classify_ratio(fits[a.name], fits[b.name]).to_dict()
        for i, a in enumerate(losses)
        for b in losses[i + 1 :]
    ]
    bounds = bound_rows([loss.name for loss in losses], args.p, None, kwargs)
    (out / "analysis.csv").write_text(dump_csv(rows), encoding="utf-8")
    (out / "report.json").write_text(
        dump_json({"analysis": rows, "comparisons": comparisons, "bounds": bounds}), encoding="utf-8"
    )
    sys.stdout.write(dump_table(rows, ANALYZE_COLUMNS))
    for c in comparisons:
        sys.stdout.write(c["sentence"] + "\n")
    sys.stdout.write(f"wrote {out}\n")
    return EXIT_OK


def _add_fit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--theta-min", type=float, default=THETA_MIN, help="lower end of the power-law fit window")
    p.add_argument("--theta-max", type=float, default=THETA_MAX, help="upper end of the power-law fit window")
    p.add_argument("--fit-points", type=int, default=FIT_POINTS, help="geometric grid points in the window")
    p.add_argument("--no-adaptive", action="store_true", help="fit exactly on the given window")


def _add_output_flags(p: argparse.ArgumentParser, default_format: str = "table") -> None:
    p.add_argument("--format", choices=("table", "json", "csv"), default=default_format)
    p.add_argument("--out", help="write to this path instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surrogate-rates",
        description="Consistency intensity, conductivity and rate bounds of margin-based surrogate losses.",
        epilog=f"loss specifications: {LOSS_GRAMMAR}",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="consistency verdict and (I, S) per loss")
    p.add_argument("losses", nargs="+", metavar="LOSS")
    _add_fit_flags(p)
    _add_output_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", help="intensity-ratio verdict for two losses")
    p.add_argument("losses", nargs=2, metavar="LOSS")
    _add_fit_flags(p)
    _add_output_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bound", help="excess-risk rate bound from an excess phi-risk exponent")
    p.add_argument("losses", nargs="+", metavar="LOSS")
    p.add_argument("--p", type=float, required=True, help="excess phi-risk decays like n^-p")
    p.add_argument("--delta-schedule", type=float, metavar="Q", help="modified hinge with delta(n) = n^-Q")
    _add_fit_flags(p)
    _add_output_flags(p)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("simulate", help="Monte-Carlo ERM rate experiment")
    p.add_argument("loss", nargs="?", metavar="LOSS")
    p.add_argument("--config", help="JSON {loss, distribution, n_grid, trials, seed, mc_samples}")
    p.add_argument("--distribution")
    p.add_argument("--n-grid", help="comma-separated sample sizes, e.g. 128,256,512,1024,2048")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mc-samples", type=int)
    p.add_argument("--p", type=float, help="assumed excess phi-risk exponent for the reported bound")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.add_argument("--out", help="output directory for the CSV and JSON artifacts (default: results)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="analysis, comparisons, bounds and psi profiles into a directory")
    p.add_argument("losses", nargs="+", metavar="LOSS")
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--out", help="output directory (default: report)")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, FitRangeError, PsiProfileError, TrainingDivergenceError) as exc:
        print(f"{parser.prog}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
