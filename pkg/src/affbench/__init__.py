"""affbench: model-agnostic benchmarking for affordance/semantic segmentation.

Per-class confusion metrics with dataset-wide accumulation, the
distance-weighted F-measure with a brute-force verification oracle, the
zoom-in/zoom-out robustness probe with occupancy statistics, a
deterministic seed-keyed augmentation recipe, and report/compare tooling
gated against published reference numbers.
"""

from .augment import (
    AugmentConfig,
    add_gaussian_noise,
    augment_sample,
    builtin_augment_config,
    color_jitter,
    derive_rng,
    hflip,
    load_augment_config,
    scale_center_crop,
)
from .confusion import (
    ConfusionTally,
    jaccard,
    macro_average,
    merge_tallies,
    precision,
    recall,
    tally_pair,
)
from .maskio import (
    ClassTaxonomy,
    LabelMask,
    Manifest,
    RgbImage,
    SampleRecord,
    builtin_taxonomy,
    load_image,
    load_label_mask,
    load_manifest,
    load_taxonomy,
    remap_classes,
    save_image,
    save_label_mask,
    save_manifest,
)
from .runner import (
    ClassResult,
    ComparisonRow,
    ComparisonTable,
    EvalReport,
    builtin_reference,
    compare_reports,
    export_report,
    load_reference,
    load_report,
    report_from_json,
    report_to_json,
    run_evaluation,
    run_scale_sweep,
)
from .scale import (
    ScaleSpec,
    WhiskerStats,
    factor_tag,
    occupancy,
    occupancy_stats,
    perturb_dataset,
    scale_image,
    scale_mask,
)
from .wfb import (
    DistanceField,
    WfbFields,
    WfbParams,
    WfbTally,
    brute_force_distance_transform,
    dense_oracle_weighted_error,
    distance_transform,
    merge_wfb_tallies,
    weighted_error,
    wfb_score,
    wfb_tally_classes,
    wfb_tally_pair,
)

__version__ = "0.1.0"
