"""MCMC sampler suite and experiment CLI for hierarchical targets.

The library pairs pathological reference targets (funnel, one-way normal in
centered and non-centered form) with random-walk, within-Gibbs, Euclidean
Hamiltonian, No-U-Turn, and SoftAbs-metric Riemannian kernels, plus the
adaptation and diagnostics needed to compare them honestly.
"""

from .adaptation import (
    DualAveragingState,
    WarmupSchedule,
    dual_averaging_update,
    estimate_diag_metric,
    relaxation_scan,
    stability_bound,
)
from .config import ConfigError, DataError, ExperimentConfig, parse_config
from .diagnostics import (
    DrawMatrix,
    SummaryResult,
    SummaryRow,
    curvature_field,
    energy_stats,
    ess,
    split_rhat,
    summarize,
)
from .engine import RunRecord, build_model, run_experiment
from .metrics import EuclideanMetric, MetricDecomposition, softabs_metric
from .models import (
    FunnelModel,
    OneWayNormalCP,
    OneWayNormalData,
    OneWayNormalNCP,
    TargetModel,
    generate_pseudodata,
    positive_transform,
    positive_untransform,
    read_dataset,
    write_dataset,
)
from .numerics import (
    EigenPair,
    RngStream,
    cholesky,
    eigh,
    finite_diff_gradient,
    half_cauchy_logpdf,
    normal_logpdf,
)
from .riemannian import (
    SamplerIncompatibleError,
    SoftAbsSystem,
    generalized_leapfrog_step,
    rmhmc_hamiltonian,
    rmhmc_transition,
)
from .samplers import (
    DIVERGENCE_DELTA_MAX,
    ChainState,
    ehmc_transition,
    euclidean_hamiltonian,
    leapfrog_step,
    mwg_sweep,
    nuts_transition,
    rwm_transition,
)

__version__ = "0.1.0"
