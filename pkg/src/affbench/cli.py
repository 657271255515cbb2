"""Command-line surface: evaluate, sweep, perturb, occupancy, augment,
compare, and plotdata.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 comparison
tolerance exceeded. Human diagnostics go to stderr; machine output goes to
files or stdout only. A JSON config file may supply any flag; explicit
flags win, then config, then AFFBENCH_JOBS (for --jobs), then defaults.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

from .augment import (
    AugmentConfig,
    augment_sample,
    builtin_augment_config,
    load_augment_config,
)
from .errors import AffBenchError, MissingFile, ParseError
from .maskio import (
    builtin_taxonomy,
    load_image,
    load_label_mask,
    load_manifest,
    load_taxonomy,
    save_image,
    save_label_mask,
)
from .runner import (
    EvalReport,
    builtin_reference,
    compare_reports,
    export_report,
    load_reference,
    load_report,
    report_to_json,
    run_evaluation,
    run_scale_sweep,
    sweep_from_json,
    sweep_to_json,
)
from .scale import ScaleSpec, occupancy, occupancy_stats, perturb_dataset, scale_mask
from .wfb import WfbParams

_UNSET = object()


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parse_factor(token: str) -> float:
    token = token.strip()
    if "/" in token:
        num, den = token.split("/", 1)
        return float(num) / float(den)
    return float(token)


def _parse_factors(text: str) -> list[float]:
    return [_parse_factor(t) for t in text.split(",") if t.strip()]


def _load_taxonomy_arg(value: str):
    if value.endswith(".json") or "/" in value or Path(value).exists():
        return load_taxonomy(value)
    return builtin_taxonomy(value)


def _load_augment_arg(value: str) -> AugmentConfig:
    if value.endswith(".json") or "/" in value or Path(value).exists():
        return load_augment_config(value)
    return builtin_augment_config(value)


def _load_reference_arg(value: str) -> dict:
    if value.endswith(".json") or "/" in value or Path(value).exists():
        return load_reference(value)
    return builtin_reference(value)


def _resolve(args: argparse.Namespace, name: str, default, config: dict, cast=None):
    """CLI flag > config file > default. Flags parse with an UNSET sentinel."""
    value = getattr(args, name, _UNSET)
    if value is _UNSET:
        key = name.replace("_", "-")
        if key in config:
            value = config[key]
        elif name in config:
            value = config[name]
        else:
            value = default
    if value is not None and cast is not None and not isinstance(value, cast):
        try:
            value = cast(value)
        except (TypeError, ValueError) as exc:
            raise _UsageError(f"bad value for --{name.replace('_', '-')}: {exc}")
    return value


def _default_jobs() -> int:
    env = os.environ.get("AFFBENCH_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _wfb_params_from(args, config) -> WfbParams:
    defaults = WfbParams()
    return WfbParams(
        sigma=_resolve(args, "wfb_sigma", defaults.sigma, config, float),
        kernel_radius=_resolve(args, "wfb_radius", defaults.kernel_radius, config, int),
        alpha=_resolve(args, "wfb_alpha", defaults.alpha, config, float),
        beta=_resolve(args, "wfb_beta", defaults.beta, config, float),
    )


def _print_report_summary(report: EvalReport) -> None:
    # 2-decimal human summary on the diagnostic stream
    print(
        f"[{report.dataset_id}] model={report.model_id} samples={report.n_samples}",
        file=sys.stderr,
    )
    names = ["precision", "recall", "jaccard"]
    if "wfb" in report.metrics:
        names += ["pw", "rw", "fwb"]

    def cell(v):
        return "  --  " if v is None else f"{v * 100:6.2f}"

    header = "  ".join(f"{n:>9}" for n in names)
    print(f"  {'class':<12}{header}", file=sys.stderr)
    for r in report.per_class:
        vals = "  ".join(f"{cell(getattr(r, n)):>9}" for n in names)
        print(f"  {r.label:<12}{vals}", file=sys.stderr)
    vals = "  ".join(f"{cell(report.average.get(n)):>9}" for n in names)
    print(f"  {'AVG':<12}{vals}", file=sys.stderr)


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# --- subcommands ---

def _cmd_evaluate(args, config) -> int:
    taxonomy = _load_taxonomy_arg(_resolve(args, "taxonomy", None, config, str))
    manifest = load_manifest(_resolve(args, "manifest", None, config, str))
    model = _resolve(args, "model", None, config, str)
    metrics = [
        t.strip()
        for t in _resolve(args, "metrics", "jaccard", config, str).split(",")
        if t.strip()
    ]
    jobs = _resolve(args, "jobs", _default_jobs(), config, int)
    report = run_evaluation(
        manifest, model, taxonomy, metrics, _wfb_params_from(args, config), jobs
    )
    out = _resolve(args, "out", None, config, str)
    csv_out = _resolve(args, "csv", None, config, str)
    if out is not None:
        export_report(report, "json", out)
    else:
        sys.stdout.write(json.dumps(report_to_json(report), sort_keys=True, indent=2) + "\n")
    if csv_out is not None:
        export_report(report, "csv", csv_out)
    _print_report_summary(report)
    return 0


def _cmd_sweep(args, config) -> int:
    taxonomy = _load_taxonomy_arg(_resolve(args, "taxonomy", None, config, str))
    manifest = load_manifest(_resolve(args, "manifest", None, config, str))
    model = _resolve(args, "model", None, config, str)
    factors = _parse_factors(_resolve(args, "factors", "0.5,2/3,1,1.5,2", config, str))
    metrics = [
        t.strip()
        for t in _resolve(args, "metrics", "jaccard", config, str).split(",")
        if t.strip()
    ]
    jobs = _resolve(args, "jobs", _default_jobs(), config, int)
    sweep = run_scale_sweep(
        manifest, model, taxonomy, factors, metrics, _wfb_params_from(args, config), jobs
    )
    out = _resolve(args, "out", None, config, str)
    csv_out = _resolve(args, "csv", None, config, str)
    if out is not None:
        export_report(sweep, "json", out)
    else:
        sys.stdout.write(json.dumps(sweep_to_json(sweep), sort_keys=True, indent=2) + "\n")
    if csv_out is not None:
        export_report(sweep, "csv", csv_out)
    for factor, report in sweep:
        print(f"--- factor {format(factor, 'g')} ---", file=sys.stderr)
        _print_report_summary(report)
    return 0


def _cmd_perturb(args, config) -> int:
    taxonomy = _load_taxonomy_arg(_resolve(args, "taxonomy", None, config, str))
    manifest = load_manifest(_resolve(args, "manifest", None, config, str))
    factor = _parse_factor(_resolve(args, "factor", None, config, str))
    out_dir = Path(_resolve(args, "out_dir", None, config, str))
    perturb_dataset(manifest, factor, taxonomy, out_dir)
    sys.stdout.write(str(out_dir / "manifest.jsonl") + "\n")
    return 0


def _occupancy_rows(manifest, taxonomy, factors):
    rows = []
    per_sample = []
    for factor in factors:
        values = []
        for sample in manifest.samples:
            mask = load_label_mask(manifest.resolve(sample.annotation), taxonomy)
            if factor != 1:
                mask = scale_mask(mask, ScaleSpec(factor, mask.width, mask.height))
            occ = occupancy(mask, taxonomy)
            values.append(occ)
            per_sample.append((factor, sample.id, occ))
        stats = occupancy_stats(values)
        rows.append((factor, stats))
    return rows, per_sample


def _cmd_occupancy(args, config) -> int:
    taxonomy = _load_taxonomy_arg(_resolve(args, "taxonomy", None, config, str))
    manifest = load_manifest(_resolve(args, "manifest", None, config, str))
    factors = _parse_factors(_resolve(args, "factors", "1", config, str))
    rows, per_sample = _occupancy_rows(manifest, taxonomy, factors)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["factor", "n", "min", "q1", "median", "q3", "max"])
    for factor, s in rows:
        writer.writerow(
            [format(factor, "g"), s.n]
            + [f"{v * 100:.4f}" for v in (s.minimum, s.q1, s.median, s.q3, s.maximum)]
        )
    _write_text(_resolve(args, "out", None, config, str), buf.getvalue())
    per_sample_out = _resolve(args, "per_sample", None, config, str)
    if per_sample_out is not None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["factor", "sample", "occupancy"])
        for factor, sid, occ in per_sample:
            writer.writerow([format(factor, "g"), sid, f"{occ * 100:.4f}"])
        Path(per_sample_out).write_text(buf.getvalue())
    return 0


def _cmd_augment(args, config) -> int:
    taxonomy = _load_taxonomy_arg(_resolve(args, "taxonomy", None, config, str))
    image = load_image(_resolve(args, "image", None, config, str))
    mask = load_label_mask(_resolve(args, "mask", None, config, str), taxonomy)
    aug_config = _load_augment_arg(_resolve(args, "recipe", None, config, str))
    seed = _resolve(args, "seed", 0, config, int)
    key = _resolve(args, "key", "", config, str)
    out_image, out_mask = augment_sample(image, mask, aug_config, seed, key)
    save_image(out_image, _resolve(args, "out_image", None, config, str))
    save_label_mask(out_mask, _resolve(args, "out_mask", None, config, str))
    return 0


def _cmd_compare(args, config) -> int:
    report = load_report(_resolve(args, "report", None, config, str))
    reference = _load_reference_arg(_resolve(args, "reference", None, config, str))
    tolerance = _resolve(args, "tolerance", 0.5, config, float)
    table = compare_reports(report, reference, tolerance)
    out = _resolve(args, "out", None, config, str)
    fmt = _resolve(args, "format", "json", config, str)
    if out is not None:
        export_report(table, fmt, out)
    print(
        f"max |delta| = {table.max_abs_delta:.4f} (tolerance {table.tolerance:g}): "
        + ("PASS" if table.passed else "FAIL"),
        file=sys.stderr,
    )
    return 0 if table.passed else 3


def _cmd_plotdata(args, config) -> int:
    kind = _resolve(args, "kind", None, config, str)
    out = _resolve(args, "out", None, config, str)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if kind == "bars":
        paths = getattr(args, "report", None) or config.get("report") or []
        if isinstance(paths, str):
            paths = [paths]
        if not paths:
            raise _UsageError("plotdata bars needs at least one --report")
        metric = _resolve(args, "metric", "jaccard", config, str)
        reports = [load_report(p) for p in paths]
        writer.writerow(["class"] + [r.model_id for r in reports])
        labels = [r.label for r in reports[0].per_class]
        for label in labels:
            row = [label]
            for rep in reports:
                entry = next(r for r in rep.per_class if r.label == label)
                v = getattr(entry, metric)
                row.append("" if v is None else f"{v * 100:.4f}")
            writer.writerow(row)
        row = ["AVG"]
        for rep in reports:
            v = rep.average.get(metric)
            row.append("" if v is None else f"{v * 100:.4f}")
        writer.writerow(row)
    elif kind == "whiskers":
        taxonomy = _load_taxonomy_arg(_resolve(args, "taxonomy", None, config, str))
        manifest = load_manifest(_resolve(args, "manifest", None, config, str))
        factors = _parse_factors(
            _resolve(args, "factors", "0.5,2/3,1,1.5,2", config, str)
        )
        rows, _ = _occupancy_rows(manifest, taxonomy, factors)
        writer.writerow(["factor", "n", "min", "q1", "median", "q3", "max"])
        for factor, s in rows:
            writer.writerow(
                [format(factor, "g"), s.n]
                + [
                    f"{v * 100:.4f}"
                    for v in (s.minimum, s.q1, s.median, s.q3, s.maximum)
                ]
            )
    elif kind == "curve":
        paths = getattr(args, "sweep", None) or config.get("sweep") or []
        if isinstance(paths, str):
            paths = [paths]
        if not paths:
            raise _UsageError("plotdata curve needs at least one --sweep")
        sweeps = []
        for p in paths:
            doc = json.loads(Path(p).read_text())
            sweeps.append((doc.get("model", Path(p).stem), sweep_from_json(doc)))
        writer.writerow(["factor"] + [name for name, _ in sweeps])
        factors = [f for f, _ in sweeps[0][1]]
        for i, factor in enumerate(factors):
            row = [format(factor, "g")]
            for _, sweep in sweeps:
                v = sweep[i][1].average.get("jaccard")
                row.append("" if v is None else f"{v * 100:.4f}")
            writer.writerow(row)
    else:
        raise _UsageError(f"unknown plotdata kind '{kind}'")
    _write_text(out, buf.getvalue())
    return 0


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", default=None, help="JSON file supplying any flag")


def build_parser() -> _Parser:
    parser = _Parser(prog="affbench", description=__doc__)
    subs = parser.add_subparsers(dest="command")

    p = subs.add_parser("evaluate", help="evaluate one model over a manifest")
    _add_common(p)
    p.add_argument("--manifest", default=_UNSET)
    p.add_argument("--taxonomy", default=_UNSET)
    p.add_argument("--model", default=_UNSET)
    p.add_argument("--metrics", default=_UNSET, help="comma list: jaccard,wfb")
    p.add_argument("--out", default=_UNSET, help="report JSON path (default stdout)")
    p.add_argument("--csv", default=_UNSET, help="also write a CSV report")
    p.add_argument("--jobs", default=_UNSET, type=int)
    p.add_argument("--wfb-sigma", dest="wfb_sigma", default=_UNSET, type=float)
    p.add_argument("--wfb-radius", dest="wfb_radius", default=_UNSET, type=int)
    p.add_argument("--wfb-alpha", dest="wfb_alpha", default=_UNSET, type=float)
    p.add_argument("--wfb-beta", dest="wfb_beta", default=_UNSET, type=float)
    p.set_defaults(func=_cmd_evaluate, required=("manifest", "taxonomy", "model"))

    p = subs.add_parser("sweep", help="evaluate across zoom factors")
    _add_common(p)
    p.add_argument("--manifest", default=_UNSET)
    p.add_argument("--taxonomy", default=_UNSET)
    p.add_argument("--model", default=_UNSET)
    p.add_argument("--factors", default=_UNSET, help="comma list, fractions allowed")
    p.add_argument("--metrics", default=_UNSET)
    p.add_argument("--out", default=_UNSET)
    p.add_argument("--csv", default=_UNSET)
    p.add_argument("--jobs", default=_UNSET, type=int)
    p.add_argument("--wfb-sigma", dest="wfb_sigma", default=_UNSET, type=float)
    p.add_argument("--wfb-radius", dest="wfb_radius", default=_UNSET, type=int)
    p.add_argument("--wfb-alpha", dest="wfb_alpha", default=_UNSET, type=float)
    p.add_argument("--wfb-beta", dest="wfb_beta", default=_UNSET, type=float)
    p.set_defaults(func=_cmd_sweep, required=("manifest", "taxonomy", "model"))

    p = subs.add_parser("perturb", help="write a zoomed copy of a dataset")
    _add_common(p)
    p.add_argument("--manifest", default=_UNSET)
    p.add_argument("--taxonomy", default=_UNSET)
    p.add_argument("--factor", default=_UNSET)
    p.add_argument("--out-dir", dest="out_dir", default=_UNSET)
    p.set_defaults(func=_cmd_perturb, required=("manifest", "taxonomy", "factor", "out_dir"))

    p = subs.add_parser("occupancy", help="object-occupancy whisker statistics")
    _add_common(p)
    p.add_argument("--manifest", default=_UNSET)
    p.add_argument("--taxonomy", default=_UNSET)
    p.add_argument("--factors", default=_UNSET)
    p.add_argument("--out", default=_UNSET, help="stats CSV path (default stdout)")
    p.add_argument("--per-sample", dest="per_sample", default=_UNSET)
    p.set_defaults(func=_cmd_occupancy, required=("manifest", "taxonomy"))

    p = subs.add_parser("augment", help="apply the augmentation recipe to one sample")
    _add_common(p)
    p.add_argument("--image", default=_UNSET)
    p.add_argument("--mask", default=_UNSET)
    p.add_argument("--taxonomy", default=_UNSET)
    p.add_argument("--recipe", default=_UNSET, help="preset name or config JSON path")
    p.add_argument("--seed", default=_UNSET, type=int)
    p.add_argument("--key", default=_UNSET, help="sample key for the keyed RNG")
    p.add_argument("--out-image", dest="out_image", default=_UNSET)
    p.add_argument("--out-mask", dest="out_mask", default=_UNSET)
    p.set_defaults(
        func=_cmd_augment,
        required=("image", "mask", "taxonomy", "recipe", "out_image", "out_mask"),
    )

    p = subs.add_parser("compare", help="diff a report against reference numbers")
    _add_common(p)
    p.add_argument("--report", default=_UNSET)
    p.add_argument("--reference", default=_UNSET, help="builtin name or JSON path")
    p.add_argument("--tolerance", default=_UNSET, type=float)
    p.add_argument("--out", default=_UNSET)
    p.add_argument("--format", default=_UNSET, choices=("json", "csv"))
    p.set_defaults(func=_cmd_compare, required=("report", "reference"))

    p = subs.add_parser("plotdata", help="emit figure-ready numeric series as CSV")
    _add_common(p)
    p.add_argument("--kind", default=_UNSET, choices=("bars", "whiskers", "curve"))
    p.add_argument("--report", action="append", default=None)
    p.add_argument("--metric", default=_UNSET)
    p.add_argument("--manifest", default=_UNSET)
    p.add_argument("--taxonomy", default=_UNSET)
    p.add_argument("--factors", default=_UNSET)
    p.add_argument("--sweep", action="append", default=None)
    p.add_argument("--out", default=_UNSET)
    p.set_defaults(func=_cmd_plotdata, required=("kind",))

    return parser


def _load_config(args) -> dict:
    path = getattr(args, "config", None)
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{p}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{p}: config must be a JSON object")
    return doc


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            raise _UsageError("a subcommand is required")
        config = _load_config(args)
        for name in getattr(args, "required", ()):
            if _resolve(args, name, None, config) is None:
                raise _UsageError(f"missing required flag --{name.replace('_', '-')}")
        return args.func(args, config)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except AffBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # malformed input must never escape as a traceback
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
