"""Exact bracket-generating (Hörmander) checks for filtering generators of
multi-channel sequential testing and quickest detection, with a Monte-Carlo
filter simulator as an independent dynamics check."""

from .corpus import EXAMPLES, byzantine, classic_detection, multi_coordinate_detection, regime_tracking, testing_three_drifts
from .hormander import (
    DEPTH_EXHAUSTED,
    FAILS_AT_SAMPLE,
    SPANS_EVERY_SAMPLE,
    LieSpanReport,
    augment_observation,
    augment_parabolic,
    check_hormander,
    generate_lie_span,
    sample_points,
)
from .model import DriftGeometry, ModelError, ModelSpec, StructuralError, ValidationResult, derive_geometry, relabel_base, validate_model
from .polyfield import (
    MultiPoly,
    RationalCoefficient,
    VectorField,
    build_diffusion_fields,
    build_jump_field,
    build_testing_drift,
    evaluate,
    fields_equal,
    lie_bracket,
)
from .theorems import (
    TheoremVerdict,
    analyze,
    check_detection_suff_augmented,
    check_detection_suff_inflow,
    check_testing_iff,
    closed_form_d0_bracket,
    construct_isolating_operators,
    g_alpha_jump,
)

__version__ = "0.1.0"
