"""Scale-robustness perturbations, object occupancy, and whisker statistics.

Zoom-out (factor < 1) shrinks content and centers it on a background-filled
canvas of the original resolution; zoom-in (factor > 1) enlarges and
center-crops back to it. Factor 1 is a bit-identical copy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from ._interp import resize_bilinear, resize_nearest
from .errors import (
    AffBenchError,
    EmptyInput,
    EmptyObjectClassSet,
    InvalidFactor,
    NonPositiveFactor,
    ShapeMismatch,
)
from .maskio import (
    ClassTaxonomy,
    LabelMask,
    Manifest,
    RgbImage,
    SampleRecord,
    load_image,
    load_label_mask,
    save_image,
    save_label_mask,
    save_manifest,
)


@dataclass(frozen=True)
class ScaleSpec:
    """A zoom factor with its target canvas resolution."""

    factor: float
    canvas_width: int
    canvas_height: int

    def __post_init__(self):
        if not self.factor > 0:
            raise NonPositiveFactor(f"scale factor must be > 0, got {self.factor}")
        if self.canvas_width < 1 or self.canvas_height < 1:
            raise ShapeMismatch("canvas dimensions must be positive")

    @property
    def mode(self) -> str:
        if self.factor < 1:
            return "pad_out"
        if self.factor > 1:
            return "crop_in"
        return "identity"


@dataclass(frozen=True)
class WhiskerStats:
    """Five-number summary of an occupancy distribution."""

    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    n: int


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5))


def _scaled_dims(spec: ScaleSpec) -> tuple[int, int]:
    w = _round_half_away(spec.canvas_width * spec.factor)
    h = _round_half_away(spec.canvas_height * spec.factor)
    if w < 1 or h < 1:
        raise InvalidFactor(
            f"factor {spec.factor} resizes {spec.canvas_width}x{spec.canvas_height} to zero"
        )
    return w, h


def _check_canvas(width: int, height: int, spec: ScaleSpec) -> None:
    if (width, height) != (spec.canvas_width, spec.canvas_height):
        raise ShapeMismatch(
            f"canvas {spec.canvas_width}x{spec.canvas_height} does not match "
            f"input {width}x{height}"
        )


def scale_mask(mask: LabelMask, spec: ScaleSpec) -> LabelMask:
    """Zoom a mask at fixed resolution (nearest-neighbor, background padding)."""
    _check_canvas(mask.width, mask.height, spec)
    if spec.factor == 1:
        return LabelMask(mask.labels.copy(), mask.taxonomy)
    w2, h2 = _scaled_dims(spec)
    resized = resize_nearest(mask.labels, h2, w2)
    bg = mask.taxonomy.background_id
    if spec.factor < 1:
        out = np.full((spec.canvas_height, spec.canvas_width), bg, dtype=np.uint8)
        top = (spec.canvas_height - h2) // 2
        left = (spec.canvas_width - w2) // 2
        out[top : top + h2, left : left + w2] = resized
    else:
        top = (h2 - spec.canvas_height) // 2
        left = (w2 - spec.canvas_width) // 2
        out = resized[
            top : top + spec.canvas_height, left : left + spec.canvas_width
        ].copy()
    return LabelMask(out, mask.taxonomy)


def scale_image(image: RgbImage, spec: ScaleSpec) -> RgbImage:
    """Zoom an image at fixed resolution (bilinear, black padding)."""
    _check_canvas(image.width, image.height, spec)
    if spec.factor == 1:
        return RgbImage(image.pixels.copy())
    w2, h2 = _scaled_dims(spec)
    resized = resize_bilinear(image.pixels.astype(np.float64), h2, w2)
    resized = np.clip(np.round(resized), 0, 255).astype(np.uint8)
    if spec.factor < 1:
        out = np.zeros((spec.canvas_height, spec.canvas_width, 3), dtype=np.uint8)
        top = (spec.canvas_height - h2) // 2
        left = (spec.canvas_width - w2) // 2
        out[top : top + h2, left : left + w2] = resized
    else:
        top = (h2 - spec.canvas_height) // 2
        left = (w2 - spec.canvas_width) // 2
        out = resized[
            top : top + spec.canvas_height, left : left + spec.canvas_width
        ].copy()
    return RgbImage(out)


def occupancy(mask: LabelMask, taxonomy: ClassTaxonomy) -> float:
    """Fraction of pixels labeled with one of the taxonomy's object classes."""
    if not taxonomy.object_class_ids:
        raise EmptyObjectClassSet(f"taxonomy '{taxonomy.name}' has no object classes")
    member = np.isin(mask.labels, sorted(taxonomy.object_class_ids))
    return float(np.count_nonzero(member)) / mask.labels.size


def occupancy_stats(values: Iterable[float]) -> WhiskerStats:
    """Five-number summary; quartiles interpolate linearly between order statistics."""
    vals = np.asarray(list(values), dtype=np.float64)
    if vals.size == 0:
        raise EmptyInput("occupancy_stats needs at least one value")
    q1, med, q3 = np.quantile(vals, [0.25, 0.5, 0.75], method="linear")
    return WhiskerStats(
        minimum=float(vals.min()),
        q1=float(q1),
        median=float(med),
        q3=float(q3),
        maximum=float(vals.max()),
        n=int(vals.size),
    )


def factor_tag(factor: float) -> str:
    """Deterministic file-name tag for a scale factor, e.g. 0.5 -> "0.5"."""
    return format(float(factor), "g")


def perturb_dataset(
    manifest: Manifest,
    factor: float,
    taxonomy: ClassTaxonomy,
    out_dir: str | Path,
) -> Manifest:
    """Write a scaled copy of every sample's files and return the new manifest.

    Annotations, prediction masks, and images (when present) are scaled and
    written under out_dir (annotations/, predictions/<model>/, images/),
    named `<id>_x<factor>` with the original extension. Sample errors are
    re-raised naming the sample id; partially written files are removed.
    """
    out_dir = Path(out_dir)
    tag = factor_tag(factor)
    created: list[Path] = []

    def _write(subdir: str, name: str, writer) -> str:
        d = out_dir / subdir
        d.mkdir(parents=True, exist_ok=True)
        path = d / name
        created.append(path)  # before writing, so partial files get removed
        writer(path)
        return str(path.relative_to(out_dir))

    try:
        new_samples: list[SampleRecord] = []
        for sample in manifest.samples:
            try:
                gt = load_label_mask(manifest.resolve(sample.annotation), taxonomy)
                spec = ScaleSpec(factor, gt.width, gt.height)
                scaled_gt = scale_mask(gt, spec)
                suffix = Path(sample.annotation).suffix or ".png"
                name = f"{sample.id}_x{tag}{suffix}"
                ann_rel = _write(
                    "annotations", name, lambda p: save_label_mask(scaled_gt, p)
                )
                image_rel = None
                if sample.image is not None:
                    img = load_image(manifest.resolve(sample.image))
                    scaled_img = scale_image(
                        img, ScaleSpec(factor, img.width, img.height)
                    )
                    img_name = f"{sample.id}_x{tag}{Path(sample.image).suffix or '.png'}"
                    image_rel = _write(
                        "images", img_name, lambda p: save_image(scaled_img, p)
                    )
                predictions = {}
                for model_id, rel in sorted(sample.predictions.items()):
                    pm = load_label_mask(manifest.resolve(rel), taxonomy)
                    scaled_pm = scale_mask(pm, ScaleSpec(factor, pm.width, pm.height))
                    pm_name = f"{sample.id}_x{tag}{Path(rel).suffix or '.png'}"
                    predictions[model_id] = _write(
                        f"predictions/{model_id}",
                        pm_name,
                        lambda p, m=scaled_pm: save_label_mask(m, p),
                    )
            except AffBenchError as exc:
                raise type(exc)(f"sample '{sample.id}': {exc}") from exc
            new_samples.append(
                SampleRecord(
                    id=f"{sample.id}_x{tag}",
                    annotation=ann_rel,
                    image=image_rel,
                    predictions=predictions,
                    split=sample.split,
                )
            )
        new_manifest = Manifest(
            dataset_id=f"{manifest.dataset_id}_x{tag}",
            samples=new_samples,
            root=out_dir,
        )
        manifest_path = out_dir / "manifest.jsonl"
        out_dir.mkdir(parents=True, exist_ok=True)
        save_manifest(new_manifest, manifest_path)
        created.append(manifest_path)
        return new_manifest
    except BaseException:
        for p in created:
            p.unlink(missing_ok=True)
        raise
