//! Small-time limits of the increments `X_{T+εt} − X_T`, both as ε-ladder
//! ratio sequences and in closed form for the worked example families, plus
//! speed-exponent fits and exponential-tightness profiles.

mod ladder;
mod limits;
mod tightness;

pub use ladder::{
    limit_cov_estimate, limit_cross_estimate, limit_kernel_estimate, EpsilonLadder, LadderEstimate,
    LadderOptions, Trend, DEFAULT_LADDER_REL_TOL,
};
pub use limits::{
    closed_form_limits, limit_cov_functional, limit_cov_path, ClosedFormLimits, Example, KernelLimit,
    LimitCovariance, LimitKind, LimitLaw, PathCoefficients, Provenance,
};
pub use tightness::{
    cross_tightness, path_kernel_tightness, speed_exponent_fit, unit_grid, variance_tightness, SpeedFit,
    TightnessProfile, TightnessStatistic,
};
