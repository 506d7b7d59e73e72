//! Model parameters, fluid state geometry and the drift rates of the fast
//! queue-difference process.
//!
//! Everything downstream (the QBD, the ODE, the stationary point and the
//! simulator) reads its rates from [`ModelParams`]. The queue ratio is kept
//! as the coprime pair `(j, k)`; the real ratio `j / k` is derived on demand.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ParamError;

/// Rates and capacities of the two-class, two-pool X model after the
/// overload has occurred, plus the FQR-T ratio `j / k` and shift `kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub m1: f64,
    pub m2: f64,
    pub mu11: f64,
    pub mu12: f64,
    pub mu21: f64,
    pub mu22: f64,
    pub theta1: f64,
    pub theta2: f64,
    #[serde(alias = "ratio_num")]
    pub j: u32,
    #[serde(alias = "ratio_den")]
    pub k: u32,
    pub kappa: f64,
}

impl ModelParams {
    /// The running example: `r = 4/5`, `kappa = 0`, class 1 overloaded.
    pub fn canonical() -> Self {
        ModelParams {
            lambda1: 1.3,
            lambda2: 0.9,
            m1: 1.0,
            m2: 1.0,
            mu11: 1.0,
            mu12: 0.8,
            mu21: 0.8,
            mu22: 1.0,
            theta1: 0.3,
            theta2: 0.3,
            j: 4,
            k: 5,
            kappa: 0.0,
        }
    }

    /// Queue ratio as a real number. Only for arithmetic on fluid
    /// quantities; region tests go through [`ModelParams::weighted_gap`].
    pub fn r(&self) -> f64 {
        f64::from(self.j) / f64::from(self.k)
    }

    /// Half-size of the QBD blocks.
    pub fn block_half(&self) -> usize {
        self.j.max(self.k) as usize
    }

    pub fn isolation(&self) -> IsolationQuantities {
        IsolationQuantities::new(self)
    }

    /// `q1 - r q2 - kappa`, evaluated as `(k q1 - j q2 - k kappa) / k` so the
    /// ratio never enters as a rounded real.
    pub fn weighted_gap(&self, q1: f64, q2: f64) -> f64 {
        let k = f64::from(self.k);
        let j = f64::from(self.j);
        (k * q1 - j * q2 - k * self.kappa) / k
    }

    /// Checks finiteness, positivity and `gcd(j, k) = 1`. Assumption A is
    /// reported separately by [`validate_params`].
    pub fn check_structure(&self) -> Result<(), ParamError> {
        self.check_structure_with(true)
    }

    /// As [`ModelParams::check_structure`], optionally accepting a ratio
    /// that is not in lowest terms.
    pub fn check_structure_with(&self, require_reduced: bool) -> Result<(), ParamError> {
        let positive = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("m1", self.m1),
            ("m2", self.m2),
            ("mu11", self.mu11),
            ("mu12", self.mu12),
            ("mu21", self.mu21),
            ("mu22", self.mu22),
            ("theta1", self.theta1),
            ("theta2", self.theta2),
        ];
        for (field, value) in positive {
            if !value.is_finite() {
                return Err(ParamError::NotFinite { field, value });
            }
            if value <= 0.0 {
                return Err(ParamError::NotPositive { field, value });
            }
        }
        if !self.kappa.is_finite() {
            return Err(ParamError::NotFinite {
                field: "kappa",
                value: self.kappa,
            });
        }
        if self.kappa < 0.0 {
            return Err(ParamError::Negative {
                field: "kappa",
                value: self.kappa,
            });
        }
        if self.j == 0 || self.k == 0 {
            return Err(ParamError::ZeroRatio { j: self.j, k: self.k });
        }
        if require_reduced && gcd(self.j, self.k) != 1 {
            return Err(ParamError::RatioNotReduced { j: self.j, k: self.k });
        }
        Ok(())
    }

    /// Returns a copy whose ratio is `(c j) / (c k)`. The copy is not in
    /// lowest terms and is only meant for the block-size scaling check, which
    /// bypasses [`ModelParams::check_structure`].
    pub fn with_scaled_ratio(&self, c: u32) -> Self {
        ModelParams {
            j: self.j * c,
            k: self.k * c,
            ..*self
        }
    }
}

pub(crate) fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Steady state of each class in isolation (an overloaded or underloaded
/// Erlang-A fluid model).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsolationQuantities {
    pub qa1: f64,
    pub qa2: f64,
    pub sa1: f64,
    pub sa2: f64,
}

impl IsolationQuantities {
    pub fn new(p: &ModelParams) -> Self {
        let qa = |lambda: f64, mu: f64, m: f64, theta: f64| (lambda - mu * m).max(0.0) / theta;
        let sa = |lambda: f64, mu: f64, m: f64| (m - lambda / mu).max(0.0);
        let (qa1, sa1) = if p.lambda1 > p.mu11 * p.m1 {
            (qa(p.lambda1, p.mu11, p.m1, p.theta1), 0.0)
        } else {
            (0.0, sa(p.lambda1, p.mu11, p.m1))
        };
        let (qa2, sa2) = if p.lambda2 > p.mu22 * p.m2 {
            (qa(p.lambda2, p.mu22, p.m2, p.theta2), 0.0)
        } else {
            (0.0, sa(p.lambda2, p.mu22, p.m2))
        };
        IsolationQuantities { qa1, qa2, sa1, sa2 }
    }
}

/// Outcome of [`validate_params`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub positivity: bool,
    pub ratio_reduced: bool,
    /// `theta1 (qa1 - kappa) >= mu12 sa2`.
    pub assumption_a: bool,
    /// Left and right sides of the Assumption A inequality.
    pub assumption_lhs: f64,
    pub assumption_rhs: f64,
    pub isolation: IsolationQuantities,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.positivity && self.ratio_reduced && self.assumption_a
    }

    pub fn describe_assumption(&self) -> String {
        format!(
            "theta1*(qa1 - kappa) = {} {} mu12*sa2 = {}",
            self.assumption_lhs,
            if self.assumption_a { ">=" } else { "<" },
            self.assumption_rhs
        )
    }
}

/// Structural checks are hard errors; a failed Assumption A is reported in
/// the returned report so the transient pipeline can still run.
pub fn validate_params(p: &ModelParams) -> Result<ValidationReport, ParamError> {
    validate_params_with(p, true)
}

/// [`validate_params`] with the lowest-terms requirement made optional.
pub fn validate_params_with(p: &ModelParams, require_reduced: bool) -> Result<ValidationReport, ParamError> {
    p.check_structure_with(require_reduced)?;
    let isolation = p.isolation();
    let lhs = p.theta1 * (isolation.qa1 - p.kappa);
    let rhs = p.mu12 * isolation.sa2;
    Ok(ValidationReport {
        positivity: true,
        ratio_reduced: gcd(p.j, p.k) == 1,
        assumption_a: lhs >= rhs,
        assumption_lhs: lhs,
        assumption_rhs: rhs,
        isolation,
    })
}

/// A point `(q1, q2, z12)` of the fluid state space. Inside the restricted
/// space pool 1 is full of class 1 and pool 2 is full, so `z11 = m1`,
/// `z21 = 0` and `z22 = m2 - z12` are implied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidState {
    pub q1: f64,
    pub q2: f64,
    pub z12: f64,
}

impl FluidState {
    pub const fn new(q1: f64, q2: f64, z12: f64) -> Self {
        FluidState { q1, q2, z12 }
    }

    pub fn in_box(&self, p: &ModelParams) -> bool {
        self.q1 >= 0.0 && self.q2 >= 0.0 && self.z12 >= 0.0 && self.z12 <= p.m2
    }

    pub fn in_restricted_space(&self, p: &ModelParams) -> bool {
        self.in_box(p) && self.q1 >= p.kappa
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.q1, self.q2, self.z12]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        FluidState::new(a[0], a[1], a[2])
    }

    pub fn l1_distance(&self, other: &FluidState) -> f64 {
        (self.q1 - other.q1).abs() + (self.q2 - other.q2).abs() + (self.z12 - other.z12).abs()
    }
}

/// Where a state sits relative to the switching surface `q1 - r q2 = kappa`.
/// Serializes as its tag string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    SPlus,
    SMinus,
    Boundary(BoundarySub),
}

/// Refinement of the boundary by the signs of the fast-process drifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundarySub {
    /// `delta_minus > 0 > delta_plus`: the fast process is positive recurrent.
    A,
    APlusStrict,
    APlusZero,
    AMinusStrict,
    AMinusZero,
}

impl Region {
    pub fn tag(&self) -> &'static str {
        match self {
            Region::SPlus => "SPlus",
            Region::SMinus => "SMinus",
            Region::Boundary(BoundarySub::A) => "A",
            Region::Boundary(BoundarySub::APlusStrict) => "APlusStrict",
            Region::Boundary(BoundarySub::APlusZero) => "APlusZero",
            Region::Boundary(BoundarySub::AMinusStrict) => "AMinusStrict",
            Region::Boundary(BoundarySub::AMinusZero) => "AMinusZero",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Region> {
        Some(match tag {
            "SPlus" => Region::SPlus,
            "SMinus" => Region::SMinus,
            "A" => Region::Boundary(BoundarySub::A),
            "APlusStrict" => Region::Boundary(BoundarySub::APlusStrict),
            "APlusZero" => Region::Boundary(BoundarySub::APlusZero),
            "AMinusStrict" => Region::Boundary(BoundarySub::AMinusStrict),
            "AMinusZero" => Region::Boundary(BoundarySub::AMinusZero),
            _ => return None,
        })
    }

    pub fn is_boundary(&self) -> bool {
        matches!(self, Region::Boundary(_))
    }

    pub fn is_a(&self) -> bool {
        matches!(self, Region::Boundary(BoundarySub::A))
    }
}

impl Serialize for Region {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.tag())
    }
}

impl<'de> Deserialize<'de> for Region {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let tag = String::deserialize(d)?;
        Region::from_tag(&tag).ok_or_else(|| serde::de::Error::custom(format!("unknown region `{tag}`")))
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Relative half-width of the band treated as the switching surface.
pub const BOUNDARY_REL_TOL: f64 = 1e-9;
/// Relative tolerance (against `delta_minus - delta_plus`) for a zero drift.
pub const DRIFT_ZERO_REL_TOL: f64 = 1e-9;

pub fn boundary_tolerance(x: &FluidState, p: &ModelParams) -> f64 {
    BOUNDARY_REL_TOL * 1f64.max(x.q1).max(p.r() * x.q2)
}

pub fn classify(x: &FluidState, p: &ModelParams) -> Region {
    let gap = p.weighted_gap(x.q1, x.q2);
    let tol = boundary_tolerance(x, p);
    if gap > tol {
        Region::SPlus
    } else if gap < -tol {
        Region::SMinus
    } else {
        Region::Boundary(boundary_sub(&drift_pair(x, p)))
    }
}

pub(crate) fn boundary_sub(d: &DriftPair) -> BoundarySub {
    let tol = DRIFT_ZERO_REL_TOL * d.gap();
    if d.delta_plus > tol {
        BoundarySub::APlusStrict
    } else if d.delta_plus.abs() <= tol {
        BoundarySub::APlusZero
    } else if d.delta_minus < -tol {
        BoundarySub::AMinusStrict
    } else if d.delta_minus.abs() <= tol {
        BoundarySub::AMinusZero
    } else {
        BoundarySub::A
    }
}

/// Constant drifts of the fast process above and at-or-below zero, in
/// lattice units (the process is multiplied by `k`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftPair {
    pub delta_plus: f64,
    pub delta_minus: f64,
}

impl DriftPair {
    pub fn gap(&self) -> f64 {
        self.delta_minus - self.delta_plus
    }

    pub fn positive_recurrent(&self) -> bool {
        self.delta_minus > 0.0 && self.delta_plus < 0.0
    }
}

pub fn drift_pair(x: &FluidState, p: &ModelParams) -> DriftPair {
    crate::ftsp::ftsp_rates(x, p).drifts(p.j, p.k)
}

/// `(j + k) (mu12 z12 + mu22 (m2 - z12))`, the exact value of
/// `delta_minus - delta_plus`.
pub fn drift_gap_identity(x: &FluidState, p: &ModelParams) -> f64 {
    f64::from(p.j + p.k) * (p.mu12 * x.z12 + p.mu22 * (p.m2 - x.z12))
}

/// Upper bounds `max(q_i(0), lambda_i / theta_i)` on the fluid queues.
pub fn queue_bounds(x0: &FluidState, p: &ModelParams) -> (f64, f64) {
    (x0.q1.max(p.lambda1 / p.theta1), x0.q2.max(p.lambda2 / p.theta2))
}
