"""Computational laboratory for finite marked metric measure spaces."""

from .errors import CapabilityError, DomainError
from .measures import (
    Coupling,
    FiniteMeasure,
    FiniteSpace,
    disjoint_union,
    prohorov_distance,
    prohorov_feasible,
    rectangular_completion,
    restrict,
    variational_distance,
)
from .marked import (
    FmmSpace,
    MarkSpace,
    MarkedDistanceMatrixSample,
    MmmSpace,
    equivalent,
    functionally_marked_approx,
    gromov_prohorov_upper,
    sample_distance_matrix,
    sampled_law_gap,
    validate,
)
from .diagnostics import (
    MembershipReport,
    Modulus,
    ball_diameter_evidence,
    dispersion_clearance,
    fmm_metric_surrogate,
    geometric_grid,
    limit_mark_evidence,
    limit_mark_evidence_on_sets,
    local_mark_bound,
    mark_dispersion,
    max_weight_independent_set,
    measure_dispersion,
    no_mark_function_example,
    tightest_modulus,
    trimmed_bound_on_grid,
    trimmed_mark_bound,
    uniform_mark_bound,
)
from .genealogy import (
    Event,
    EventLog,
    LambdaMeasure,
    MoranParams,
    MoranState,
    PipelineReport,
    PopulationParams,
    ScalarPath,
    cadlag_modulus,
    cannings_simulate,
    coalescent_sample,
    default_params,
    dust_free_diagnostic,
    fraction_bound_constant,
    mark_function_pipeline,
    merge_rate,
    moran_simulate,
    mutated_fraction_diffusion,
    mutated_fraction_generator,
    mutated_fraction_moran,
    mutated_lineage_path,
    uniform_kernel,
    verify_mutation_fraction_bound,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
