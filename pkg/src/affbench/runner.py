"""Evaluation orchestration: dataset runs, scale sweeps, reference
comparisons, and byte-stable report export.

Per-sample tallies may be computed concurrently, but accumulation always
folds them in manifest order, so reports are identical for any worker
count. Metric values live as fractions in memory and serialize as
percentages with 4 decimals (displayed at 2).
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .confusion import (
    ConfusionTally,
    jaccard,
    macro_average,
    merge_tallies,
    precision,
    recall,
    tally_pair,
)
from .errors import (
    EmptyManifest,
    IoFailure,
    KeyMismatch,
    MissingFile,
    MissingPrediction,
    NoDefinedClasses,
    NonPositiveFactor,
    ParseError,
    ShapeMismatch,
)
from .maskio import ClassTaxonomy, LabelMask, Manifest, load_label_mask
from .scale import ScaleSpec, scale_mask
from .wfb import WfbParams, WfbTally, merge_wfb_tallies, wfb_score, wfb_tally_classes

VALID_METRICS = ("jaccard", "wfb")
_CONF_METRICS = ("precision", "recall", "jaccard")
_WFB_METRICS = ("pw", "rw", "fwb")


@dataclass
class ClassResult:
    """Tallies and metric values (fractions) for one non-background class."""

    class_id: int
    label: str
    tp: int
    fp: int
    fn: int
    precision: float | None
    recall: float | None
    jaccard: float | None
    tpw: float | None = None
    fpw: float | None = None
    fnw: float | None = None
    pw: float | None = None
    rw: float | None = None
    fwb: float | None = None


@dataclass
class EvalReport:
    """Per-class results plus macro averages over the non-background classes."""

    dataset_id: str
    model_id: str
    taxonomy: ClassTaxonomy
    n_samples: int
    per_class: list[ClassResult]
    average: dict[str, float | None]
    metrics: tuple[str, ...]
    wfb_params: WfbParams | None = None


@dataclass
class ComparisonRow:
    metric: str
    class_label: str
    ours: float       # percentage points
    reference: float  # percentage points
    delta: float      # ours - reference


@dataclass
class ComparisonTable:
    rows: list[ComparisonRow]
    max_abs_delta: float
    tolerance: float
    passed: bool


def _normalize_metrics(metrics: Sequence[str]) -> tuple[str, ...]:
    tokens = tuple(dict.fromkeys(metrics))
    for t in tokens:
        if t not in VALID_METRICS:
            raise ValueError(f"unknown metric '{t}' (choose from {VALID_METRICS})")
    if "jaccard" not in tokens:
        tokens = ("jaccard",) + tokens
    return tokens


def _safe_macro(values: dict[int, float | None], ids: Sequence[int]) -> float | None:
    try:
        return macro_average(values, ids)
    except NoDefinedClasses:
        return None


def build_report(
    dataset_id: str,
    model_id: str,
    taxonomy: ClassTaxonomy,
    conf: ConfusionTally,
    wfb: WfbTally | None,
    metrics: tuple[str, ...],
    wfb_params: WfbParams | None,
) -> EvalReport:
    """Assemble an EvalReport from accumulated tallies."""
    ids = taxonomy.non_background_ids
    per_class: list[ClassResult] = []
    columns: dict[str, dict[int, float | None]] = {
        m: {} for m in _CONF_METRICS + _WFB_METRICS
    }
    for s in ids:
        row = ClassResult(
            class_id=s,
            label=taxonomy.label_of(s),
            tp=int(conf.tp[s]),
            fp=int(conf.fp[s]),
            fn=int(conf.fn[s]),
            precision=precision(conf, s),
            recall=recall(conf, s),
            jaccard=jaccard(conf, s),
        )
        columns["precision"][s] = row.precision
        columns["recall"][s] = row.recall
        columns["jaccard"][s] = row.jaccard
        if wfb is not None:
            row.tpw = float(wfb.tpw[s])
            row.fpw = float(wfb.fpw[s])
            row.fnw = float(wfb.fnw[s])
            beta = wfb_params.beta if wfb_params is not None else 1.0
            row.pw, row.rw, row.fwb = wfb_score(wfb, s, beta)
            columns["pw"][s] = row.pw
            columns["rw"][s] = row.rw
            columns["fwb"][s] = row.fwb
        per_class.append(row)
    average: dict[str, float | None] = {
        m: _safe_macro(columns[m], ids) for m in _CONF_METRICS
    }
    if wfb is not None:
        for m in _WFB_METRICS:
            average[m] = _safe_macro(columns[m], ids)
    return EvalReport(
        dataset_id=dataset_id,
        model_id=model_id,
        taxonomy=taxonomy,
        n_samples=conf.images_seen,
        per_class=per_class,
        average=average,
        metrics=metrics,
        wfb_params=(wfb_params if wfb is not None else None),
    )


def _evaluate(
    manifest: Manifest,
    model_id: str,
    taxonomy: ClassTaxonomy,
    metrics: tuple[str, ...],
    wfb_params: WfbParams,
    jobs: int,
    pair_transform: Callable[[LabelMask, LabelMask], tuple[LabelMask, LabelMask]] | None,
) -> EvalReport:
    if not manifest.samples:
        raise EmptyManifest(f"manifest '{manifest.dataset_id}' has no samples")
    wfb_on = "wfb" in metrics

    def work(sample):
        rel = sample.predictions.get(model_id)
        if rel is None:
            raise MissingPrediction(
                f"sample '{sample.id}' has no prediction for model '{model_id}'"
            )
        gt = load_label_mask(manifest.resolve(sample.annotation), taxonomy)
        pred = load_label_mask(manifest.resolve(rel), taxonomy)
        if gt.labels.shape != pred.labels.shape:
            raise ShapeMismatch(
                f"sample '{sample.id}': gt {gt.labels.shape} vs pred {pred.labels.shape}"
            )
        if pair_transform is not None:
            gt, pred = pair_transform(gt, pred)
        ct = tally_pair(gt, pred, taxonomy)
        wt = wfb_tally_classes(gt, pred, wfb_params) if wfb_on else None
        return ct, wt

    if jobs <= 1:
        results = [work(s) for s in manifest.samples]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, manifest.samples))

    conf = ConfusionTally.zero(taxonomy)
    wfb = WfbTally.zero(taxonomy) if wfb_on else None
    # left fold in manifest order: bit-identical for any worker count
    for ct, wt in results:
        conf = merge_tallies(conf, ct)
        if wfb_on:
            wfb = merge_wfb_tallies(wfb, wt)
    return build_report(
        manifest.dataset_id, model_id, taxonomy, conf, wfb, metrics, wfb_params
    )


def run_evaluation(
    manifest: Manifest,
    model_id: str,
    taxonomy: ClassTaxonomy,
    metrics: Sequence[str] = ("jaccard",),
    wfb_params: WfbParams | None = None,
    jobs: int = 1,
) -> EvalReport:
    """Evaluate one model's predictions over a manifest at full resolution."""
    return _evaluate(
        manifest,
        model_id,
        taxonomy,
        _normalize_metrics(metrics),
        wfb_params or WfbParams(),
        jobs,
        pair_transform=None,
    )


def run_scale_sweep(
    manifest: Manifest,
    model_id: str,
    taxonomy: ClassTaxonomy,
    factors: Sequence[float],
    metrics: Sequence[str] = ("jaccard",),
    wfb_params: WfbParams | None = None,
    jobs: int = 1,
) -> list[tuple[float, EvalReport]]:
    """Evaluate at each zoom factor, perturbing annotation and prediction alike."""
    metrics_t = _normalize_metrics(metrics)
    params = wfb_params or WfbParams()
    out: list[tuple[float, EvalReport]] = []
    for factor in factors:
        f = float(factor)
        if f <= 0:
            raise NonPositiveFactor(f"sweep factor must be > 0, got {factor}")

        def transform(gt: LabelMask, pred: LabelMask, _f=f):
            spec = ScaleSpec(_f, gt.width, gt.height)
            return scale_mask(gt, spec), scale_mask(pred, spec)

        out.append(
            (f, _evaluate(manifest, model_id, taxonomy, metrics_t, params, jobs, transform))
        )
    return out


# --- reference comparison ---

def load_reference(path: str | Path) -> dict:
    """Load a reference-values document: {"metric.class": value | {"value", "source"}}."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"reference file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: reference document must be a JSON object")
    return doc


def builtin_reference(name: str) -> dict:
    """Load one of the shipped reference tables by file stem."""
    ref = resources.files("affbench").joinpath(f"data/references/{name}.json")
    try:
        return json.loads(ref.read_text())
    except FileNotFoundError as exc:
        raise MissingFile(f"no builtin reference named '{name}'") from exc


def _report_value(report: EvalReport, metric: str, class_label: str) -> float:
    if metric not in _CONF_METRICS + _WFB_METRICS:
        raise KeyMismatch(f"unknown metric '{metric}' in reference")
    if class_label == "avg":
        value = report.average.get(metric)
    else:
        row = next((r for r in report.per_class if r.label == class_label), None)
        if row is None:
            raise KeyMismatch(
                f"reference names class '{class_label}' absent from report "
                f"(taxonomy '{report.taxonomy.name}')"
            )
        value = getattr(row, metric)
    if value is None:
        raise KeyMismatch(f"metric '{metric}.{class_label}' is undefined in report")
    return value


def compare_reports(
    report: EvalReport, reference: Mapping[str, object], tolerance: float
) -> ComparisonTable:
    """Diff report values against reference percentages at 4-decimal precision.

    Reference keys are "metric.class" (class "avg" for the macro average);
    values are percentage points, either bare or {"value": ..., "source": ...}.
    """
    rows: list[ComparisonRow] = []
    for key in sorted(reference):
        entry = reference[key]
        ref_val = float(entry["value"]) if isinstance(entry, Mapping) else float(entry)
        metric, sep, class_label = key.partition(".")
        if not sep:
            raise KeyMismatch(f"reference key '{key}' is not of the form metric.class")
        ours_pct = round(_report_value(report, metric, class_label) * 100.0, 4)
        rows.append(
            ComparisonRow(
                metric=metric,
                class_label=class_label,
                ours=ours_pct,
                reference=ref_val,
                delta=ours_pct - ref_val,
            )
        )
    max_abs = max((abs(r.delta) for r in rows), default=0.0)
    return ComparisonTable(
        rows=rows, max_abs_delta=max_abs, tolerance=float(tolerance),
        passed=max_abs <= tolerance,
    )


# --- serialization ---

def _pct(value: float | None) -> float | None:
    return None if value is None else round(value * 100.0, 4)


def report_to_json(report: EvalReport) -> dict:
    classes = []
    for r in report.per_class:
        obj: dict = {
            "id": r.class_id,
            "label": r.label,
            "tp": r.tp,
            "fp": r.fp,
            "fn": r.fn,
            "precision": _pct(r.precision),
            "recall": _pct(r.recall),
            "jaccard": _pct(r.jaccard),
        }
        if r.tpw is not None:
            obj.update(
                tpw=r.tpw, fpw=r.fpw, fnw=r.fnw,
                pw=_pct(r.pw), rw=_pct(r.rw), fwb=_pct(r.fwb),
            )
        classes.append(obj)
    return {
        "dataset": report.dataset_id,
        "model": report.model_id,
        "taxonomy": report.taxonomy.to_json(),
        "n_samples": report.n_samples,
        "classes": classes,
        "average": {k: _pct(v) for k, v in sorted(report.average.items())},
        "config": {
            "metrics": list(report.metrics),
            "wfb_params": (
                report.wfb_params.to_json() if report.wfb_params is not None else None
            ),
        },
    }


def report_from_json(doc: dict) -> EvalReport:
    """Rebuild a report from its JSON form, recomputing metrics from tallies."""
    taxonomy = ClassTaxonomy.from_json(doc["taxonomy"])
    metrics = tuple(doc["config"]["metrics"])
    wfb_doc = doc["config"].get("wfb_params")
    wfb_params = WfbParams.from_json(wfb_doc) if wfb_doc is not None else None
    conf = ConfusionTally.zero(taxonomy)
    conf.images_seen = int(doc["n_samples"])
    wfb = None
    if "wfb" in metrics:
        wfb = WfbTally.zero(taxonomy)
        wfb.images_seen = int(doc["n_samples"])
    for c in doc["classes"]:
        s = int(c["id"])
        conf.tp[s] = int(c["tp"])
        conf.fp[s] = int(c["fp"])
        conf.fn[s] = int(c["fn"])
        if wfb is not None:
            wfb.tpw[s] = float(c["tpw"])
            wfb.fpw[s] = float(c["fpw"])
            wfb.fnw[s] = float(c["fnw"])
    return build_report(
        str(doc["dataset"]), str(doc["model"]), taxonomy, conf, wfb, metrics, wfb_params
    )


def load_report(path: str | Path) -> EvalReport:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"report not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return report_from_json(doc)


def _fmt_cell(value: float | None) -> str:
    return "" if value is None else f"{value:.4f}"


def report_to_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["class", "tp", "fp", "fn", "precision", "recall", "jaccard", "pw", "rw", "fwb"]
    )
    for r in report.per_class:
        writer.writerow(
            [
                r.label, r.tp, r.fp, r.fn,
                _fmt_cell(_pct(r.precision)),
                _fmt_cell(_pct(r.recall)),
                _fmt_cell(_pct(r.jaccard)),
                _fmt_cell(_pct(r.pw)),
                _fmt_cell(_pct(r.rw)),
                _fmt_cell(_pct(r.fwb)),
            ]
        )
    avg = report.average
    writer.writerow(
        [
            "AVG", "", "", "",
            _fmt_cell(_pct(avg.get("precision"))),
            _fmt_cell(_pct(avg.get("recall"))),
            _fmt_cell(_pct(avg.get("jaccard"))),
            _fmt_cell(_pct(avg.get("pw"))),
            _fmt_cell(_pct(avg.get("rw"))),
            _fmt_cell(_pct(avg.get("fwb"))),
        ]
    )
    return buf.getvalue()


def sweep_to_json(sweep: Sequence[tuple[float, EvalReport]]) -> dict:
    first = sweep[0][1] if sweep else None
    return {
        "dataset": first.dataset_id if first else "",
        "model": first.model_id if first else "",
        "factors": [f for f, _ in sweep],
        "runs": [{"factor": f, "report": report_to_json(r)} for f, r in sweep],
    }


def sweep_from_json(doc: dict) -> list[tuple[float, EvalReport]]:
    return [(float(run["factor"]), report_from_json(run["report"])) for run in doc["runs"]]


def sweep_to_csv(sweep: Sequence[tuple[float, EvalReport]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["factor", "class", "precision", "recall", "jaccard", "pw", "rw", "fwb"]
    )
    for f, report in sweep:
        tag = format(f, "g")
        for r in report.per_class:
            writer.writerow(
                [
                    tag, r.label,
                    _fmt_cell(_pct(r.precision)),
                    _fmt_cell(_pct(r.recall)),
                    _fmt_cell(_pct(r.jaccard)),
                    _fmt_cell(_pct(r.pw)),
                    _fmt_cell(_pct(r.rw)),
                    _fmt_cell(_pct(r.fwb)),
                ]
            )
        avg = report.average
        writer.writerow(
            [
                tag, "AVG",
                _fmt_cell(_pct(avg.get("precision"))),
                _fmt_cell(_pct(avg.get("recall"))),
                _fmt_cell(_pct(avg.get("jaccard"))),
                _fmt_cell(_pct(avg.get("pw"))),
                _fmt_cell(_pct(avg.get("rw"))),
                _fmt_cell(_pct(avg.get("fwb"))),
            ]
        )
    return buf.getvalue()


def comparison_to_json(table: ComparisonTable) -> dict:
    return {
        "tolerance": table.tolerance,
        "max_abs_delta": table.max_abs_delta,
        "passed": table.passed,
        "rows": [
            {
                "metric": r.metric,
                "class": r.class_label,
                "ours": r.ours,
                "reference": r.reference,
                "delta": r.delta,
            }
            for r in table.rows
        ],
    }


def comparison_to_csv(table: ComparisonTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric", "class", "ours", "reference", "delta"])
    for r in table.rows:
        writer.writerow(
            [r.metric, r.class_label, f"{r.ours:.4f}", f"{r.reference:.4f}", f"{r.delta:.4f}"]
        )
    return buf.getvalue()


def export_report(obj, fmt: str, path: str | Path) -> None:
    """Write a report, sweep, or comparison table as JSON or CSV.

    Identical inputs produce identical bytes: keys are sorted, metric values
    carry 4 decimals on the percentage scale.
    """
    if fmt not in ("json", "csv"):
        raise ValueError(f"format must be 'json' or 'csv', got '{fmt}'")
    if isinstance(obj, EvalReport):
        text = (
            json.dumps(report_to_json(obj), sort_keys=True, indent=2) + "\n"
            if fmt == "json"
            else report_to_csv(obj)
        )
    elif isinstance(obj, ComparisonTable):
        text = (
            json.dumps(comparison_to_json(obj), sort_keys=True, indent=2) + "\n"
            if fmt == "json"
            else comparison_to_csv(obj)
        )
    elif isinstance(obj, (list, tuple)):
        text = (
            json.dumps(sweep_to_json(list(obj)), sort_keys=True, indent=2) + "\n"
            if fmt == "json"
            else sweep_to_csv(list(obj))
        )
    else:
        raise TypeError(f"cannot export object of type {type(obj).__name__}")
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
