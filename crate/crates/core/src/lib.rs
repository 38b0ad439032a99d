//! A numerical laboratory for U-statistics.
//!
//! The crate computes U-statistics exactly (by chunked combinadic
//! enumeration) or by subsampling, splits them into their Hoeffding
//! components, generates i.i.d. and β-mixing stationary data, and measures
//! exact one-dimensional Wasserstein-2 distances. The [`harness`] ties these
//! together into reproducible experiments checking that √n·U_h approaches
//! its Gaussian limit in d₂, not only in distribution.

pub mod combin;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod normal;
pub mod processes;
pub mod projections;
pub mod rng;
pub mod sum;
pub mod ustat;
pub mod wasserstein;

pub use diagnostics::{
    fit_loglog, lindeberg_ratio, long_run_variance_estimate, rate_regression,
    second_moment_trajectory, uniform_integrability_profile, LongRunVariance, MaxLagRule,
    RateFit, RateOptions, Replicates,
};
pub use error::{Error, Result};
pub use kernels::{builtin_catalog, catalog_kernel, center, Analytic, FirstProjection, Kernel};
pub use processes::{
    long_run_variance_analytic, theorem_applicability, Applicability, BetaRate, Family,
    ProcessSpec,
};
pub use projections::{
    canonical_kernel, degeneracy_order, marginal_projection, Estimate, ProjectionMode,
    ReferenceMeasure,
};
pub use rng::{Role, StreamKey};
pub use ustat::{
    component_ustat, hoeffding_reconstruct, u_statistic_exact, u_statistic_exact_with,
    u_statistic_incomplete, ExactOptions, HoeffdingComponents, IncompleteEstimate,
};
pub use wasserstein::{
    inverse_normal_cdf, w2_empirical_empirical, w2_empirical_gaussian, w2_gaussian_gaussian,
    EmpiricalDistribution,
};
