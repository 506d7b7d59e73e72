//! Text inputs of the command line: parameter files, `key=value`
//! overrides, state triples, and the manifest written next to every run.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::model::{FluidState, ModelParams};

/// Names accepted by [`apply_override`].
pub const PARAM_KEYS: [&str; 13] = [
    "lambda1", "lambda2", "m1", "m2", "mu11", "mu12", "mu21", "mu22", "theta1", "theta2", "j", "k", "kappa",
];

pub fn params_from_json(text: &str) -> Result<ModelParams, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))
}

pub fn params_to_json(p: &ModelParams) -> String {
    serde_json::to_string_pretty(p).expect("parameters always serialize")
}

/// Applies one `key=value` override. Real-valued keys take any float
/// literal; `j` and `k` take unsigned integers. Range checks are left to
/// validation.
pub fn apply_override(p: &mut ModelParams, spec: &str) -> Result<(), ConfigError> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::MissingEquals(spec.to_string()))?;
    let (key, value) = (key.trim(), value.trim());
    let bad = |reason: String| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason,
    };
    let real = || value.parse::<f64>().map_err(|e| bad(e.to_string()));
    let int = || value.parse::<u32>().map_err(|e| bad(e.to_string()));
    match key {
        "lambda1" => p.lambda1 = real()?,
        "lambda2" => p.lambda2 = real()?,
        "m1" => p.m1 = real()?,
        "m2" => p.m2 = real()?,
        "mu11" => p.mu11 = real()?,
        "mu12" => p.mu12 = real()?,
        "mu21" => p.mu21 = real()?,
        "mu22" => p.mu22 = real()?,
        "theta1" => p.theta1 = real()?,
        "theta2" => p.theta2 = real()?,
        "kappa" => p.kappa = real()?,
        "j" | "ratio_num" => p.j = int()?,
        "k" | "ratio_den" => p.k = int()?,
        _ => return Err(ConfigError::UnknownKey(key.to_string())),
    }
    Ok(())
}

pub fn apply_overrides<'a, I>(p: &mut ModelParams, specs: I) -> Result<(), ConfigError>
where
    I: IntoIterator<Item = &'a str>,
{
    specs.into_iter().try_for_each(|s| apply_override(p, s))
}

/// Parses `q1,q2,z12`.
pub fn parse_state(input: &str) -> Result<FluidState, ConfigError> {
    let bad = |reason: &str| ConfigError::BadState {
        input: input.to_string(),
        reason: reason.to_string(),
    };
    let parts: Vec<&str> = input.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(bad("expected three comma-separated values"));
    }
    let mut v = [0.0; 3];
    for (slot, part) in v.iter_mut().zip(&parts) {
        let x: f64 = part.parse().map_err(|_| bad("not a number"))?;
        if !x.is_finite() || x < 0.0 {
            return Err(bad("values must be finite and nonnegative"));
        }
        *slot = x;
    }
    Ok(FluidState::from_array(v))
}

/// Record of a run: enough to repeat it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub params: ModelParams,
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
    /// Command-specific resolved options.
    pub options: serde_json::Value,
}

impl Manifest {
    pub fn new(
        command: &str,
        params: ModelParams,
        overrides: Vec<String>,
        seed: Option<u64>,
        options: serde_json::Value,
    ) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            params,
            overrides,
            seed,
            options,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest always serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))
    }
}
