//! Numerical toolkit for resolvents of quasinilpotent weighted shifts on
//! `l^p`.
//!
//! The resolvent `(z - T)^{-1}` of a quasinilpotent shift blows up faster
//! than any power of `1/|z|` as `z -> 0`; the interesting object is the
//! per-vector growth exponent
//! `k_x = limsup_(z->0) ln ||(z-T)^{-1} x|| / ln ||(z-T)^{-1}||`.
//! This crate evaluates the resolvent series in log domain with certified
//! truncation tails ([`resolvent`]), brackets the operator norm between a
//! Neumann upper bound and probe-vector lower bounds ([`opnorm`]),
//! estimates `k_x` along shrinking radius schedules with model-based
//! extrapolation ([`powerset`]), and packages named reproductions of the
//! exactly-known exponent families with pass/fail targets ([`scenario`]).
//!
//! Shift kinds: forward and backward unilateral shifts on `l^p(N)`, and a
//! coupled two-block bilateral shift on `l^p(Z)` whose exponents fill
//! `[1/2, 1]`.

pub mod logdomain;
pub mod opnorm;
pub mod powerset;
pub mod resolvent;
pub mod scenario;
pub mod shift;
pub mod vector;
pub mod weights;

pub use logdomain::{log_add, log_sub, log_sum_series, LogDomainError, LogMag};
pub use opnorm::{enclosure, opnorm_lower, opnorm_upper, NormEnclosure};
pub use powerset::{
    estimate_kx, exponent_ratio, sweep_family, EstimateStatus, ExponentEstimate,
    ExponentSample, FamilyTemplate, FitModel, PowersetOptions, RadiusSchedule,
};
pub use resolvent::{
    closed_form_f0, dense_truncated_resolvent, resolvent_apply, tail_vector_f0,
    vector_norm, EvalOptions, ResolventError, ResolventEvaluation,
};
pub use scenario::{run_scenario, ScenarioId, ScenarioOverrides, ScenarioReport, ALL_SCENARIOS};
pub use shift::{beta_product, power_norm, quasinilpotence_report, PNorm, ShiftKind, ShiftOperator};
pub use vector::VectorSpec;
pub use weights::{WeightRule, WeightSequence};
