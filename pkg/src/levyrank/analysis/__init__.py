from .ergodic import (
    CapitalCurve,
    GapHistogram,
    OccupationStats,
    capital_curve,
    capital_curve_of_state,
    common_edges,
    gap_histogram,
    gap_samples,
    histogram_from_samples,
    occupation_fractions,
    reference_histogram,
    time_average,
    tv_distance,
)
from .generator import (
    DriftConditionReport,
    GeneratorDiagnostic,
    GeneratorError,
    JumpGeneratorValue,
    MCEstimate,
    continuous_generator_V,
    drift_condition_scan,
    gap_form,
    generator_diagnostic,
    jump_generator_V,
    leading_order,
    lyapunov_V,
    mc_generator_estimate,
    plane_directions,
    random_plane_points,
    rank_pairing,
)
