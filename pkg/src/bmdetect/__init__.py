"""Quickest changepoint detection for bounded observations.

A mixture Shiryaev-Roberts e-detector calibrated so the expected time to
false alarm is at least the threshold gamma under every pre-change law with
mean at most m, together with the KL_inf information projection that governs
its detection-delay constant, Monte Carlo estimators for run lengths and
delays, and exact desk-scale checks of the supporting limit machinery.
"""

from .distributions import (
    BoundedDistribution,
    ChangepointScenario,
    SeedSpec,
    bernoulli,
    beta,
    discrete,
    dist_from_json,
    dist_to_json,
    expectation,
    generate_changepoint_stream,
    mixture,
    point,
    rescale_affine,
    rescale_baseline,
    sample,
)
from .detector import (
    AlarmResult,
    DetectorConfig,
    LambdaGrid,
    MixtureState,
    StateDecodeError,
    betting_factor,
    deserialize_state,
    design_uniform_grid,
    dyadic_grid,
    fresh_state,
    run_until_alarm,
    serialize_state,
    sr_update,
    uniform_grid_schedule,
)
from .klinf import (
    KlInfResult,
    OracleInconsistencyError,
    g_of_lambda,
    klinf_bernoulli_closed_form,
    klinf_dual_solve,
    klinf_primal_oracle,
    pinsker_floor,
)
from .sim import (
    ArlEstimate,
    CaddEstimate,
    HittingEstimate,
    PerKDelay,
    SlopeFit,
    estimate_arl,
    estimate_cadd,
    estimate_hitting_time,
    slope_fit,
)
from .lowerbound import (
    BlockStats,
    FiniteLaw,
    LowerBoundParams,
    StoppingLaw,
    block_stats,
    exact_change_of_measure_check,
    finite_class_klinf,
    kl_divergence,
    maximal_slln_probe,
    prefix_equality_check,
    running_sum_rule,
    schedule_limit_table,
    schedule_params,
    two_point,
)

__version__ = "0.1.0"
