use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("parameter `{field}` must be finite, got {value}")]
    NotFinite { field: &'static str, value: f64 },
    #[error("parameter `{field}` must be strictly positive, got {value}")]
    NotPositive { field: &'static str, value: f64 },
    #[error("parameter `{field}` must be nonnegative, got {value}")]
    Negative { field: &'static str, value: f64 },
    #[error("ratio j/k = {j}/{k} must have positive integer parts")]
    ZeroRatio { j: u32, k: u32 },
    #[error("ratio j/k = {j}/{k} is not in lowest terms")]
    RatioNotReduced { j: u32, k: u32 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QbdError {
    #[error("fast process is not positive recurrent (delta+ = {delta_plus}, delta- = {delta_minus})")]
    NotPositiveRecurrent { delta_plus: f64, delta_minus: f64 },
    #[error("logarithmic reduction did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergent { iterations: usize, residual: f64 },
    #[error("boundary system is rank deficient (singular values {smallest:e}, {second:e})")]
    SingularBoundary { smallest: f64, second: f64 },
    #[error("closed form needs delta- > 0 > delta+ (delta+ = {delta_plus}, delta- = {delta_minus})")]
    DriftDegenerate { delta_plus: f64, delta_minus: f64 },
    #[error("closed form is only valid for r = 1, got {j}/{k}")]
    RatioNotOne { j: u32, k: u32 },
    #[error("truncation at level {levels} leaves mass {tail_mass:e} in the top two levels")]
    TruncationInsufficient { levels: usize, tail_mass: f64 },
    #[error("truncated generator solve failed: {0}")]
    OracleSolve(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StationarityError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("Assumption A fails: {0}")]
    AssumptionViolated(String),
    #[error("stationary pool-2 share z* = {z_star} is not interior to (0, {m2})")]
    NotInteriorCase { z_star: f64, m2: f64 },
    #[error("stationary point lies in {region}, not in the positive-recurrent set A")]
    NotInA { region: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("Assumption A fails, refusing to integrate inside S: {0}")]
    AssumptionViolated(String),
    #[error(transparent)]
    Qbd(#[from] QbdError),
    #[error("step h = {h} gives a snap band wider than 10% of the state scale {scale}")]
    StepTooLarge { h: f64, scale: f64 },
    #[error("trajectory never entered S by t = {t_end} and x* is in {region}")]
    NeverReachesS { t_end: f64, region: String },
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("clamp of size {magnitude:e} on `{component}` at t = {t} exceeds round-off scale")]
    ClampTooLarge {
        component: &'static str,
        magnitude: f64,
        t: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("window [{start}, {end}] holds only {transitions} D-transitions, need at least {required}")]
    WindowTooShort {
        start: f64,
        end: f64,
        transitions: usize,
        required: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("malformed parameter JSON: {0}")]
    Json(String),
    #[error("override `{0}` is not of the form key=value")]
    MissingEquals(String),
    #[error("unknown parameter `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("state `{input}` is not `q1,q2,z12` with three finite nonnegative numbers: {reason}")]
    BadState { input: String, reason: String },
}
