"""Label masks, RGB images, class taxonomies, and dataset manifests.

Masks are single-channel 8-bit PNGs holding raw class ids (palettes are
read as indices, never as colors). Manifests are JSON Lines, one sample
record per line, with paths resolved relative to the manifest file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DuplicateId,
    InvalidTaxonomy,
    IoFailure,
    LabelOutOfRange,
    MalformedRaster,
    MissingFile,
    ParseError,
    ShapeMismatch,
    UnmappedLabel,
)

# PIL modes accepted for label masks (single channel, 8-bit; P = palette indices)
_MASK_MODES = ("L", "P")
# PIL modes promotable to RGB on image load
_IMAGE_MODES = ("L", "LA", "P", "RGB", "RGBA")


@dataclass(frozen=True)
class ClassTaxonomy:
    """Ordered class-id/label set for one dataset.

    Args:
        name: taxonomy identifier, e.g. "umd".
        classes: ordered (id, label) pairs; ids contiguous from 0.
        background_id: the id treated as background.
        object_class_ids: ids counted as "object" pixels for occupancy;
            never includes background or the arm class.
        arm_class_id: optional id of a forearm class (hand-occluded setups).
    """

    name: str
    classes: tuple[tuple[int, str], ...]
    background_id: int
    object_class_ids: frozenset[int]
    arm_class_id: int | None = None

    def __post_init__(self):
        ids = [cid for cid, _ in self.classes]
        if len(ids) < 2:
            raise InvalidTaxonomy(f"taxonomy '{self.name}' needs >= 2 classes")
        if sorted(ids) != list(range(len(ids))):
            raise InvalidTaxonomy(
                f"taxonomy '{self.name}' ids must be unique and contiguous from 0, got {ids}"
            )
        if self.background_id not in ids:
            raise InvalidTaxonomy(f"background id {self.background_id} not among ids")
        if self.background_id in self.object_class_ids:
            raise InvalidTaxonomy("object_class_ids must exclude the background id")
        if not self.object_class_ids <= set(ids):
            raise InvalidTaxonomy("object_class_ids must be a subset of the class ids")
        if self.arm_class_id is not None:
            if self.arm_class_id not in ids:
                raise InvalidTaxonomy(f"arm id {self.arm_class_id} not among ids")
            if self.arm_class_id in self.object_class_ids:
                raise InvalidTaxonomy("arm class must be excluded from object_class_ids")

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def class_ids(self) -> tuple[int, ...]:
        return tuple(cid for cid, _ in self.classes)

    @property
    def non_background_ids(self) -> tuple[int, ...]:
        return tuple(cid for cid, _ in self.classes if cid != self.background_id)

    def label_of(self, class_id: int) -> str:
        for cid, label in self.classes:
            if cid == class_id:
                return label
        raise KeyError(class_id)

    def id_of(self, label: str) -> int:
        for cid, lab in self.classes:
            if lab == label:
                return cid
        raise KeyError(label)

    def to_json(self) -> dict:
        doc = {
            "name": self.name,
            "classes": [{"id": cid, "label": lab} for cid, lab in self.classes],
            "background_id": self.background_id,
            "object_class_ids": sorted(self.object_class_ids),
        }
        if self.arm_class_id is not None:
            doc["arm_class_id"] = self.arm_class_id
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "ClassTaxonomy":
        try:
            classes = tuple((int(c["id"]), str(c["label"])) for c in doc["classes"])
            return cls(
                name=str(doc["name"]),
                classes=classes,
                background_id=int(doc["background_id"]),
                object_class_ids=frozenset(int(i) for i in doc["object_class_ids"]),
                arm_class_id=(int(doc["arm_class_id"]) if doc.get("arm_class_id") is not None else None),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidTaxonomy(f"malformed taxonomy document: {exc}") from exc


def load_taxonomy(path: str | Path) -> ClassTaxonomy:
    """Load a taxonomy JSON file (see ClassTaxonomy.from_json for the schema)."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"taxonomy file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return ClassTaxonomy.from_json(doc)


def builtin_taxonomy(name: str) -> ClassTaxonomy:
    """Load one of the shipped taxonomies ("umd" or "choc_aff")."""
    ref = resources.files("affbench").joinpath(f"data/taxonomies/{name}.json")
    try:
        doc = json.loads(ref.read_text())
    except FileNotFoundError as exc:
        raise MissingFile(f"no builtin taxonomy named '{name}'") from exc
    return ClassTaxonomy.from_json(doc)


@dataclass(frozen=True, eq=False)
class LabelMask:
    """Integer class-label field, one label per pixel, bound to a taxonomy."""

    labels: np.ndarray  # (H, W) uint8
    taxonomy: ClassTaxonomy

    def __post_init__(self):
        arr = self.labels
        if not isinstance(arr, np.ndarray) or arr.ndim != 2:
            raise ShapeMismatch("labels must be a 2D array")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeMismatch(f"mask dimensions must be positive, got {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise MalformedRaster(f"labels must be integer-typed, got {arr.dtype}")
        flat = arr.ravel()
        bad = (flat < 0) | (flat >= self.taxonomy.num_classes)
        if bad.any():
            idx = int(np.argmax(bad))
            raise LabelOutOfRange(
                f"label {int(flat[idx])} at pixel index {idx} outside "
                f"[0, {self.taxonomy.num_classes}) of taxonomy '{self.taxonomy.name}'"
            )
        if arr.dtype != np.uint8:
            object.__setattr__(self, "labels", arr.astype(np.uint8))

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True, eq=False)
class RgbImage:
    """8-bit RGB raster, shape (H, W, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = self.pixels
        if not isinstance(arr, np.ndarray) or arr.ndim != 3 or arr.shape[2] != 3:
            raise ShapeMismatch("pixels must be an (H, W, 3) array")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeMismatch(f"image dimensions must be positive, got {arr.shape}")
        if arr.dtype != np.uint8:
            raise MalformedRaster(f"pixels must be uint8, got {arr.dtype}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def _open_raster(path: Path) -> Image.Image:
    if not path.is_file():
        raise MissingFile(f"file not found: {path}")
    try:
        img = Image.open(path)
        img.load()
        return img
    except UnidentifiedImageError as exc:
        raise MalformedRaster(f"{path}: not a readable raster") from exc
    except OSError as exc:
        raise MalformedRaster(f"{path}: {exc}") from exc


def load_label_mask(path: str | Path, taxonomy: ClassTaxonomy) -> LabelMask:
    """Read a single-channel 8-bit PNG of class ids and validate it.

    Palette images are read as raw indices; the palette colors carry no
    meaning. Values >= the taxonomy's class count raise LabelOutOfRange
    with the offending value and flat pixel index.
    """
    img = _open_raster(Path(path))
    if img.mode not in _MASK_MODES:
        raise MalformedRaster(
            f"{path}: expected single-channel 8-bit mask, got mode '{img.mode}'"
        )
    arr = np.asarray(img, dtype=np.uint8)
    return LabelMask(arr, taxonomy)


def save_label_mask(mask: LabelMask, path: str | Path) -> None:
    """Write a mask as an 8-bit grayscale PNG; load_label_mask round-trips it."""
    path = Path(path)
    try:
        Image.fromarray(mask.labels, mode="L").save(path, format="PNG")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_image(path: str | Path) -> RgbImage:
    """Read an 8-bit raster as RGB; grayscale inputs are promoted by triplication."""
    img = _open_raster(Path(path))
    if img.mode not in _IMAGE_MODES:
        raise MalformedRaster(f"{path}: unsupported image mode '{img.mode}'")
    if img.mode != "RGB":
        img = img.convert("RGB")
    return RgbImage(np.asarray(img, dtype=np.uint8))


def save_image(image: RgbImage, path: str | Path) -> None:
    """Write an RGB image as PNG."""
    path = Path(path)
    try:
        Image.fromarray(image.pixels, mode="RGB").save(path, format="PNG")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def remap_classes(
    mask: LabelMask, mapping: Mapping[int, int], target: ClassTaxonomy
) -> LabelMask:
    """Replace every label through `mapping` and rebind to `target`.

    The mapping must cover every id present in the mask; a missing id
    raises UnmappedLabel.
    """
    present = np.unique(mask.labels)
    missing = [int(v) for v in present if int(v) not in mapping]
    if missing:
        raise UnmappedLabel(f"mask contains unmapped label(s) {missing}")
    lut = np.zeros(256, dtype=np.int64)
    for old, new in mapping.items():
        if not 0 <= old < 256:
            raise UnmappedLabel(f"source id {old} outside 8-bit range")
        lut[old] = new
    return LabelMask(lut[mask.labels], target)


@dataclass(frozen=True)
class SampleRecord:
    """One dataset sample: annotation path, optional image, per-model predictions."""

    id: str
    annotation: str
    image: str | None = None
    predictions: Mapping[str, str] = field(default_factory=dict)
    split: str = ""


@dataclass
class Manifest:
    """Sample records plus the directory against which their paths resolve."""

    dataset_id: str
    samples: list[SampleRecord]
    root: Path

    def resolve(self, relative: str) -> Path:
        p = Path(relative)
        return p if p.is_absolute() else self.root / p


def load_manifest(path: str | Path) -> Manifest:
    """Parse a JSON Lines manifest.

    Each line is an object with keys `id`, `annotation`, optional `image`,
    `predictions` (model id -> path), and `split`. Blank lines are skipped.
    Duplicate sample ids raise DuplicateId; malformed lines raise ParseError
    with their line number. Paths are checked lazily by downstream ops.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"manifest not found: {path}")
    samples: list[SampleRecord] = []
    seen: set[str] = set()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ParseError(f"{path}:{lineno}: record must be an object")
        try:
            sample_id = str(obj["id"])
            annotation = str(obj["annotation"])
        except KeyError as exc:
            raise ParseError(f"{path}:{lineno}: missing required key {exc}") from exc
        if sample_id in seen:
            raise DuplicateId(f"{path}:{lineno}: duplicate sample id '{sample_id}'")
        seen.add(sample_id)
        predictions = obj.get("predictions", {})
        if not isinstance(predictions, dict):
            raise ParseError(f"{path}:{lineno}: 'predictions' must be an object")
        samples.append(
            SampleRecord(
                id=sample_id,
                annotation=annotation,
                image=(str(obj["image"]) if obj.get("image") else None),
                predictions={str(k): str(v) for k, v in predictions.items()},
                split=str(obj.get("split", "")),
            )
        )
    return Manifest(dataset_id=path.stem, samples=samples, root=path.parent)


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    """Write a manifest as JSON Lines (stable key order)."""
    path = Path(path)
    lines = []
    for s in manifest.samples:
        obj: dict = {"id": s.id, "annotation": s.annotation}
        if s.image is not None:
            obj["image"] = s.image
        obj["predictions"] = dict(sorted(s.predictions.items()))
        obj["split"] = s.split
        lines.append(json.dumps(obj, sort_keys=True))
    try:
        path.write_text("\n".join(lines) + ("\n" if lines else ""))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
