"""In-process bindings over the affbench metric kernels and perturbations.

Designed for training/validation loops that hold masks as numpy arrays
(e.g. computing a validation mean-IoU for early stopping) and want the
exact evaluation code paths the CLI uses, without touching disk.

Boundary contract: inputs must be C-contiguous 2D arrays of the stated
dtype; they are used zero-copy and never mutated, so views into larger
buffers are fine. Outputs are freshly allocated. Violations raise
TypeError (wrong kind of array) or ValueError (wrong values/shapes), not
package-internal exception types. No global state is held; concurrent
calls from multiple threads on read-only inputs are safe, and the heavy
kernels run in numpy/numba code that releases the interpreter lock.

Versioned in lockstep with affbench.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from affbench import (
    ClassTaxonomy,
    LabelMask,
    ScaleSpec,
    WfbParams,
    builtin_taxonomy,
    jaccard,
    precision,
    recall,
    scale_mask,
    tally_pair,
    wfb_score,
    wfb_tally_classes,
    wfb_tally_pair,
)
from affbench.errors import AffBenchError

__version__ = "0.1.0"

__all__ = [
    "evaluate_pair",
    "wfb_pair",
    "perturb_mask",
    "make_taxonomy",
    "make_wfb_params",
]

_METRICS = ("jaccard", "wfb")


def _require_2d(arr, name: str, *, binary: bool = False) -> np.ndarray:
    if not isinstance(arr, np.ndarray):
        raise TypeError(f"{name} must be a numpy array, got {type(arr).__name__}")
    if arr.ndim != 2:
        raise TypeError(f"{name} must be 2D, got {arr.ndim}D")
    if not arr.flags.c_contiguous:
        raise TypeError(f"{name} must be C-contiguous (pass a contiguous view)")
    if binary:
        if arr.dtype == np.bool_:
            return arr
        if arr.dtype == np.uint8:
            if not np.isin(arr, (0, 1)).all():
                raise ValueError(f"{name} must be binary (values in {{0, 1}})")
            return arr
        raise TypeError(f"{name} must be bool or uint8, got {arr.dtype}")
    if arr.dtype != np.uint8:
        raise TypeError(f"{name} must be uint8 labels, got {arr.dtype}")
    return arr


def make_taxonomy(spec) -> ClassTaxonomy:
    """Build a taxonomy from a builtin name, a JSON-shaped dict, or pass one through."""
    if isinstance(spec, ClassTaxonomy):
        return spec
    try:
        if isinstance(spec, str):
            return builtin_taxonomy(spec)
        if isinstance(spec, Mapping):
            return ClassTaxonomy.from_json(spec)
    except AffBenchError as exc:
        raise ValueError(str(exc)) from exc
    raise TypeError(f"cannot build a taxonomy from {type(spec).__name__}")


def make_wfb_params(
    sigma: float = 5.0,
    kernel_radius: int = 3,
    alpha: float | None = None,
    beta: float = 1.0,
) -> WfbParams:
    """Construct weighted-measure parameters (defaults match the core)."""
    kwargs = dict(sigma=sigma, kernel_radius=kernel_radius, beta=beta)
    if alpha is not None:
        kwargs["alpha"] = alpha
    try:
        return WfbParams(**kwargs)
    except AffBenchError as exc:
        raise ValueError(str(exc)) from exc


def _wrap(arr: np.ndarray, taxonomy: ClassTaxonomy, name: str) -> LabelMask:
    try:
        return LabelMask(arr, taxonomy)  # zero-copy: arr is already uint8
    except AffBenchError as exc:
        raise ValueError(f"{name}: {exc}") from exc


def evaluate_pair(
    gt: np.ndarray,
    pred: np.ndarray,
    taxonomy,
    metrics: Sequence[str] = ("jaccard",),
    wfb_params: WfbParams | None = None,
) -> dict[str, dict[str, float | None]]:
    """Per-class metrics for one in-memory pair.

    Returns {"precision": {label: value}, "recall": ..., "jaccard": ...},
    plus "pw"/"rw"/"fwb" when "wfb" is among metrics. Values are fractions
    in [0, 1]; classes without a defined value map to None.
    """
    tax = make_taxonomy(taxonomy)
    gt_arr = _require_2d(gt, "gt")
    pred_arr = _require_2d(pred, "pred")
    if gt_arr.shape != pred_arr.shape:
        raise ValueError(f"gt {gt_arr.shape} vs pred {pred_arr.shape} shapes differ")
    for m in metrics:
        if m not in _METRICS:
            raise ValueError(f"unknown metric '{m}' (choose from {_METRICS})")
    gt_mask = _wrap(gt_arr, tax, "gt")
    pred_mask = _wrap(pred_arr, tax, "pred")
    try:
        conf = tally_pair(gt_mask, pred_mask, tax)
        out: dict[str, dict[str, float | None]] = {
            "precision": {tax.label_of(s): precision(conf, s) for s in tax.non_background_ids},
            "recall": {tax.label_of(s): recall(conf, s) for s in tax.non_background_ids},
            "jaccard": {tax.label_of(s): jaccard(conf, s) for s in tax.non_background_ids},
        }
        if "wfb" in metrics:
            params = wfb_params or WfbParams()
            wfb = wfb_tally_classes(gt_mask, pred_mask, params)
            pw_col: dict[str, float | None] = {}
            rw_col: dict[str, float | None] = {}
            f_col: dict[str, float | None] = {}
            for s in tax.non_background_ids:
                pw, rw, f = wfb_score(wfb, s, params.beta)
                label = tax.label_of(s)
                pw_col[label], rw_col[label], f_col[label] = pw, rw, f
            out["pw"], out["rw"], out["fwb"] = pw_col, rw_col, f_col
        return out
    except AffBenchError as exc:
        raise ValueError(str(exc)) from exc


def wfb_pair(
    gt_fg: np.ndarray,
    pred_fg: np.ndarray,
    params: WfbParams | None = None,
) -> tuple[float | None, float | None, float | None]:
    """Weighted precision/recall/F for one binary foreground pair.

    An empty annotation foreground raises ValueError: such pairs are
    skipped, contributing nothing to a dataset tally.
    """
    gt_arr = _require_2d(gt_fg, "gt_fg", binary=True)
    pred_arr = _require_2d(pred_fg, "pred_fg", binary=True)
    if gt_arr.shape != pred_arr.shape:
        raise ValueError(f"gt_fg {gt_arr.shape} vs pred_fg {pred_arr.shape} shapes differ")
    params = params or WfbParams()
    # binary pair == class-1 evaluation under a minimal two-class taxonomy
    tax = ClassTaxonomy(
        name="binary",
        classes=((0, "background"), (1, "foreground")),
        background_id=0,
        object_class_ids=frozenset({1}),
    )
    # bool and uint8 share a byte layout, so this stays zero-copy
    gt_mask = LabelMask(gt_arr.view(np.uint8), tax)
    pred_mask = LabelMask(pred_arr.view(np.uint8), tax)
    try:
        tally = wfb_tally_pair(gt_mask, pred_mask, 1, params)
    except AffBenchError as exc:
        raise ValueError(str(exc)) from exc
    return wfb_score(tally, 1, params.beta)


def perturb_mask(mask: np.ndarray, factor: float, background_id: int) -> np.ndarray:
    """Zoom a label mask at fixed resolution; returns a fresh uint8 array.

    Matches the dataset perturbation exactly: nearest-neighbor resampling,
    centered background padding below factor 1, center cropping above it.
    """
    arr = _require_2d(mask, "mask")
    if not 0 <= background_id <= 255:
        raise ValueError(f"background_id must be an 8-bit id, got {background_id}")
    top = int(arr.max()) if arr.size else 0
    n_classes = max(top, background_id) + 1
    if n_classes < 2:
        n_classes = 2
    tax = ClassTaxonomy(
        name="adhoc",
        classes=tuple((i, f"c{i}") for i in range(n_classes)),
        background_id=background_id,
        object_class_ids=frozenset(
            i for i in range(n_classes) if i != background_id
        ),
    )
    try:
        wrapped = LabelMask(arr, tax)
        spec = ScaleSpec(float(factor), wrapped.width, wrapped.height)
        return scale_mask(wrapped, spec).labels
    except AffBenchError as exc:
        raise ValueError(str(exc)) from exc
