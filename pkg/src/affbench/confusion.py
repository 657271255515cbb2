"""Per-class confusion accumulation and the precision/recall/Jaccard family.

Counts are accumulated dataset-wide per class (the image sum lives inside
the ratio), so metrics on merged tallies equal metrics on one concatenated
mosaic of all pairs, exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import NoDefinedClasses, ShapeMismatch, TaxonomyMismatch, UnknownClass
from .maskio import ClassTaxonomy, LabelMask


@dataclass
class ConfusionTally:
    """Per-class tp/fp/fn pixel counts summed over images_seen pairs."""

    taxonomy: ClassTaxonomy
    tp: np.ndarray  # (S,) int64
    fp: np.ndarray
    fn: np.ndarray
    images_seen: int = 0

    @classmethod
    def zero(cls, taxonomy: ClassTaxonomy) -> "ConfusionTally":
        s = taxonomy.num_classes
        return cls(
            taxonomy=taxonomy,
            tp=np.zeros(s, dtype=np.int64),
            fp=np.zeros(s, dtype=np.int64),
            fn=np.zeros(s, dtype=np.int64),
            images_seen=0,
        )


def _check_class(taxonomy: ClassTaxonomy, s: int) -> None:
    if s not in taxonomy.class_ids:
        raise UnknownClass(f"class id {s} not in taxonomy '{taxonomy.name}'")


def tally_pair(gt: LabelMask, pred: LabelMask, taxonomy: ClassTaxonomy) -> ConfusionTally:
    """Count tp/fp/fn per class for one annotation/prediction pair."""
    if gt.labels.shape != pred.labels.shape:
        raise ShapeMismatch(
            f"gt {gt.labels.shape} vs pred {pred.labels.shape} dimensions differ"
        )
    if gt.taxonomy != taxonomy or pred.taxonomy != taxonomy:
        raise TaxonomyMismatch("masks are not bound to the given taxonomy")
    s = taxonomy.num_classes
    g = gt.labels.ravel().astype(np.int64)
    p = pred.labels.ravel().astype(np.int64)
    agree = g == p
    tp = np.bincount(g[agree], minlength=s)
    gt_count = np.bincount(g, minlength=s)
    pred_count = np.bincount(p, minlength=s)
    return ConfusionTally(
        taxonomy=taxonomy,
        tp=tp,
        fp=pred_count - tp,
        fn=gt_count - tp,
        images_seen=1,
    )


def merge_tallies(a: ConfusionTally, b: ConfusionTally) -> ConfusionTally:
    """Element-wise sum; associative and commutative with the zero tally as identity."""
    if a.taxonomy != b.taxonomy:
        raise TaxonomyMismatch("cannot merge tallies over different taxonomies")
    return ConfusionTally(
        taxonomy=a.taxonomy,
        tp=a.tp + b.tp,
        fp=a.fp + b.fp,
        fn=a.fn + b.fn,
        images_seen=a.images_seen + b.images_seen,
    )


def precision(tally: ConfusionTally, s: int) -> float | None:
    """tp / (tp + fp); None when the class was never predicted."""
    _check_class(tally.taxonomy, s)
    denom = int(tally.tp[s]) + int(tally.fp[s])
    if denom == 0:
        return None
    return int(tally.tp[s]) / denom


def recall(tally: ConfusionTally, s: int) -> float | None:
    """tp / (tp + fn); None when the class was never annotated."""
    _check_class(tally.taxonomy, s)
    denom = int(tally.tp[s]) + int(tally.fn[s])
    if denom == 0:
        return None
    return int(tally.tp[s]) / denom


def jaccard(tally: ConfusionTally, s: int) -> float | None:
    """tp / (tp + fp + fn); None when the class appears nowhere."""
    _check_class(tally.taxonomy, s)
    denom = int(tally.tp[s]) + int(tally.fp[s]) + int(tally.fn[s])
    if denom == 0:
        return None
    return int(tally.tp[s]) / denom


def macro_average(
    values: Mapping[int, float | None], class_set: Iterable[int]
) -> float:
    """Arithmetic mean over the classes in class_set with defined values.

    Undefined (None) classes are skipped rather than counted as zero.
    Raises NoDefinedClasses when nothing in class_set has a value.
    """
    ids = sorted(set(class_set))
    if not ids:
        raise ValueError("class_set must be non-empty")
    defined = [values[s] for s in ids if values.get(s) is not None]
    if not defined:
        raise NoDefinedClasses(f"no defined values among classes {ids}")
    return sum(defined) / len(defined)
