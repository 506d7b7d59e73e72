//! The stationary point of the averaged ODE, where it sits, and the
//! Lyapunov and state-space-collapse certificates built around it.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::StationarityError;
use crate::model::{classify, drift_pair, BoundarySub, DriftPair, FluidState, ModelParams, Region};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LyapunovKind {
    V1,
    V2,
}

/// `V1 = q1 + q2` when `mu12 > mu22`, else `V2 = C q1 + q2 + (C - 1) z12`
/// with `C = mu22 / mu12 + 1`, both taken on deviations from `x*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovChoice {
    pub which: LyapunovKind,
    #[serde(rename = "C")]
    pub c: Option<f64>,
}

impl LyapunovChoice {
    pub fn for_params(p: &ModelParams) -> Self {
        if p.mu12 > p.mu22 {
            LyapunovChoice {
                which: LyapunovKind::V1,
                c: None,
            }
        } else {
            LyapunovChoice {
                which: LyapunovKind::V2,
                c: Some(p.mu22 / p.mu12 + 1.0),
            }
        }
    }

    /// Coefficients of the linear form on `(q1, q2, z12)`.
    pub fn linear_weights(&self) -> [f64; 3] {
        match self.c {
            None => [1.0, 1.0, 0.0],
            Some(c) => [c, 1.0, c - 1.0],
        }
    }

    /// Weights of the norm that measures the certified ball and the
    /// monotone distance: the linear weights, with a unit weight on `z12`
    /// for `V1`, whose linear form ignores it.
    pub fn norm_weights(&self) -> [f64; 3] {
        match self.c {
            None => [1.0, 1.0, 1.0],
            Some(c) => [c, 1.0, c - 1.0],
        }
    }

    /// Signed linear form `V(x) - V(x*)`.
    pub fn linear(&self, x: &FluidState, star: &FluidState) -> f64 {
        let w = self.linear_weights();
        w[0] * (x.q1 - star.q1) + w[1] * (x.q2 - star.q2) + w[2] * (x.z12 - star.z12)
    }

    /// Weighted distance `sum w_i |x_i - x*_i|`.
    pub fn distance(&self, x: &FluidState, star: &FluidState) -> f64 {
        let w = self.norm_weights();
        w[0] * (x.q1 - star.q1).abs() + w[1] * (x.q2 - star.q2).abs() + w[2] * (x.z12 - star.z12).abs()
    }

    /// Closed-form derivative of the linear form along the averaged ODE;
    /// the mixing weight cancels.
    pub fn lie_derivative(&self, x: &FluidState, star: &FluidState, p: &ModelParams) -> f64 {
        let (dq1, dq2, dz) = (x.q1 - star.q1, x.q2 - star.q2, x.z12 - star.z12);
        match self.c {
            None => -p.theta1 * dq1 - p.theta2 * dq2 - (p.mu12 - p.mu22) * dz,
            Some(c) => -c * p.theta1 * dq1 - p.theta2 * dq2 - (c * p.mu12 - p.mu22) * dz,
        }
    }
}

/// Constants of `||x(t) - x*||_1 <= prefactor ||x(0) - x*||_1 e^{-rate t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpBound {
    pub prefactor: f64,
    pub rate: f64,
}

pub fn exp_stability_constants(p: &ModelParams) -> ExpBound {
    if p.mu12 > p.mu22 {
        let k3 = p.theta1.min(p.theta2).min(p.mu12 - p.mu22);
        ExpBound {
            prefactor: 1.0,
            rate: k3 / 2.0,
        }
    } else {
        let c = p.mu22 / p.mu12 + 1.0;
        let k4 = (c * p.theta1).min(p.theta2).min(c * p.mu12 - p.mu22);
        ExpBound {
            prefactor: c / 1f64.min(c - 1.0),
            rate: k4 / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SscSummary {
    /// The global sufficient condition, checked from `x*` itself.
    pub global_sufficient: bool,
    pub v_ball_alpha: Option<f64>,
    pub certified_radius: Option<f64>,
}

/// Result of the rate-only region test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRegion {
    pub region: Region,
    /// `qa1 - kappa`, compared against the two bounds.
    pub middle: f64,
    pub lower: f64,
    pub upper: f64,
    /// `middle - mu12 sa2 / theta1`, `middle - r qa2`, `upper - middle`.
    pub margins: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryReport {
    pub x_star: FluidState,
    pub pi_star: f64,
    pub region: Region,
    pub z_raw: f64,
    /// `z*` as an exact fraction of the decimal inputs.
    pub z_star_exact: String,
    pub drift_at_star: DriftPair,
    pub lyapunov: LyapunovChoice,
    pub exp_bound: ExpBound,
    pub ssc: SscSummary,
}

fn require_assumption(p: &ModelParams) -> Result<(), StationarityError> {
    let report = crate::model::validate_params(p)?;
    if report.assumption_a {
        Ok(())
    } else {
        Err(StationarityError::AssumptionViolated(report.describe_assumption()))
    }
}

/// Unclamped pool-2 share of class 1 at stationarity.
pub fn z_raw(p: &ModelParams) -> f64 {
    let r = p.r();
    let num = p.theta2 * (p.lambda1 - p.m1 * p.mu11)
        - r * p.theta1 * (p.lambda2 - p.m2 * p.mu22)
        - p.theta1 * p.theta2 * p.kappa;
    num / (r * p.theta1 * p.mu22 + p.theta2 * p.mu12)
}

/// Exact fraction for the shortest decimal that prints as `v`.
pub fn decimal_to_rational(v: f64) -> Option<BigRational> {
    if !v.is_finite() {
        return None;
    }
    let text = format!("{v}");
    let (neg, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.as_str()),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    let numer: BigInt = format!("{int_part}{frac_part}").parse().ok()?;
    let denom = BigInt::from(10u32).pow(frac_part.len() as u32);
    let value = BigRational::new(numer, denom);
    Some(if neg { -value } else { value })
}

/// `z*` computed in exact rational arithmetic from the decimal parameters,
/// clamped to `[0, m2]`.
pub fn z_star_exact(p: &ModelParams) -> BigRational {
    let q = |v: f64| decimal_to_rational(v).expect("validated parameters are finite");
    let (l1, l2, m1, m2) = (q(p.lambda1), q(p.lambda2), q(p.m1), q(p.m2));
    let (mu11, mu12, mu22) = (q(p.mu11), q(p.mu12), q(p.mu22));
    let (t1, t2, kappa) = (q(p.theta1), q(p.theta2), q(p.kappa));
    let r = BigRational::new(BigInt::from(p.j), BigInt::from(p.k));
    let num = &t2 * (&l1 - &m1 * &mu11) - &r * &t1 * (&l2 - &m2 * &mu22) - &t1 * &t2 * &kappa;
    let den = &r * &t1 * &mu22 + &t2 * &mu12;
    let z = num / den;
    if z < BigRational::zero() {
        BigRational::zero()
    } else if z > m2 {
        m2
    } else {
        z
    }
}

/// `pi*` from the third component of the ODE at `z*`.
fn pi_at(z: f64, p: &ModelParams) -> f64 {
    let a = p.mu12 * z;
    let b = p.mu22 * (p.m2 - z);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

pub fn stationary_point(p: &ModelParams) -> Result<StationaryReport, StationarityError> {
    require_assumption(p)?;
    let raw = z_raw(p);
    let exact = z_star_exact(p);
    let z = exact.to_f64().unwrap_or_else(|| raw.clamp(0.0, p.m2));
    let q1 = (p.lambda1 - p.m1 * p.mu11 - p.mu12 * z) / p.theta1;
    let q2 = (p.lambda2 - p.mu22 * (p.m2 - z)) / p.theta2;
    let x_star = FluidState::new(q1, q2, z);
    let region = classify(&x_star, p);
    let pi_star = match region {
        Region::SPlus => 1.0,
        Region::SMinus => 0.0,
        Region::Boundary(_) => pi_at(z, p),
    };
    let alpha = v_ball_alpha(p).ok();
    Ok(StationaryReport {
        x_star,
        pi_star,
        region,
        z_raw: raw,
        z_star_exact: exact.to_string(),
        drift_at_star: drift_pair(&x_star, p),
        lyapunov: LyapunovChoice::for_params(p),
        exp_bound: exp_stability_constants(p),
        ssc: SscSummary {
            global_sufficient: global_ssc_sufficient(p, &x_star).holds,
            v_ball_alpha: alpha,
            certified_radius: radius_at(&x_star, p),
        },
    })
}

/// Region of `x*` from the rates alone.
pub fn region_of_star_by_rates(p: &ModelParams) -> Result<RateRegion, StationarityError> {
    require_assumption(p)?;
    let iso = p.isolation();
    let r = p.r();
    let middle = iso.qa1 - p.kappa;
    let from_spare = p.mu12 * iso.sa2 / p.theta1;
    let from_queue = r * iso.qa2;
    let lower = from_spare.max(from_queue);
    let upper = r * p.lambda2 / p.theta2 + p.mu12 * p.m2 / p.theta1;
    let tol = 1e-9 * 1f64.max(upper.abs()).max(middle.abs());
    let region = if middle > upper + tol {
        Region::SPlus
    } else if middle < lower - tol {
        Region::SMinus
    } else if (upper - middle).abs() <= tol {
        Region::Boundary(BoundarySub::APlusZero)
    } else if (middle - from_queue).abs() <= tol && iso.qa2 > 0.0 {
        Region::Boundary(BoundarySub::AMinusZero)
    } else {
        Region::Boundary(BoundarySub::A)
    };
    Ok(RateRegion {
        region,
        middle,
        lower,
        upper,
        margins: [middle - from_spare, middle - from_queue, upper - middle],
    })
}

/// Drifts at an interior `x*`: `-(j+k) mu22 (m2 - z*)` and `(j+k) mu12 z*`.
pub fn drift_at_star(p: &ModelParams) -> Result<DriftPair, StationarityError> {
    let report = stationary_point(p)?;
    let z = report.x_star.z12;
    if z <= 0.0 || z >= p.m2 {
        return Err(StationarityError::NotInteriorCase { z_star: z, m2: p.m2 });
    }
    let jk = f64::from(p.j + p.k);
    Ok(DriftPair {
        delta_plus: -jk * p.mu22 * (p.m2 - z),
        delta_minus: jk * p.mu12 * z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SscCheck {
    pub holds: bool,
    /// First failed condition.
    pub failed: Option<&'static str>,
}

/// Sufficient condition for the trajectory from `x0` to stay in `A`.
pub fn global_ssc_sufficient(p: &ModelParams, x0: &FluidState) -> SscCheck {
    let nu = p.mu12.min(p.mu22);
    let checks = [
        ("start_not_in_A", classify(x0, p).is_a()),
        ("rate_condition_1", p.lambda1 < nu * p.m2 + p.m1 * p.mu11),
        ("rate_condition_2", p.lambda2 > nu * p.m2),
        ("queue_bound_q2", x0.q2 <= p.lambda2 / p.theta2),
        ("queue_bound_q1", x0.q1 <= (p.lambda1 - p.m1 * p.mu11) / p.theta1),
    ];
    match checks.iter().find(|(_, ok)| !ok) {
        Some((name, _)) => SscCheck {
            holds: false,
            failed: Some(name),
        },
        None => SscCheck {
            holds: true,
            failed: None,
        },
    }
}

/// Radius of the ball around `x*`, measured by
/// [`LyapunovChoice::distance`], from which trajectories stay in `A`.
pub fn v_ball_alpha(p: &ModelParams) -> Result<f64, StationarityError> {
    require_assumption(p)?;
    let raw = z_raw(p);
    let z = raw.clamp(0.0, p.m2);
    let q1 = (p.lambda1 - p.m1 * p.mu11 - p.mu12 * z) / p.theta1;
    let q2 = (p.lambda2 - p.mu22 * (p.m2 - z)) / p.theta2;
    let region = classify(&FluidState::new(q1, q2, z), p);
    if !region.is_a() {
        return Err(StationarityError::NotInA {
            region: region.tag().to_string(),
        });
    }
    let r = p.r();
    let xi = (p.mu22 * (r + 1.0) * (p.m2 - z)).min(p.mu12 * (r + 1.0) * z);
    Ok(if p.mu22 >= p.mu12 {
        xi / (r * p.theta2)
    } else {
        xi / (p.mu12 - p.mu22 + p.theta1 + r * p.theta2)
    })
}

/// Radius of a ball around `x*`, in the same distance as
/// [`v_ball_alpha`], on which both drifts keep their signs and `z12` stays
/// strictly inside `(0, m2)`.
///
/// The drifts are affine in `(q1, q2, z12)`, so each constraint is bounded
/// through the dual of the weighted L1 norm: a drift with gradient `g` and
/// value `d*` at `x*` cannot change sign within `|d*| / max_i |g_i| / w_i`.
pub fn certified_radius(p: &ModelParams) -> Result<f64, StationarityError> {
    let rep = stationary_point(p)?;
    rep.ssc.certified_radius.ok_or(StationarityError::NotInA {
        region: rep.region.tag().to_string(),
    })
}

fn radius_at(star: &FluidState, p: &ModelParams) -> Option<f64> {
    if !classify(star, p).is_a() {
        return None;
    }
    let w = LyapunovChoice::for_params(p).norm_weights();
    let base = drift_pair(star, p);
    let mut slope = [0.0f64; 2];
    for (i, wi) in w.iter().enumerate() {
        let mut e = star.to_array();
        e[i] += 1.0;
        let d = drift_pair(&FluidState::from_array(e), p);
        slope[0] = slope[0].max((d.delta_plus - base.delta_plus).abs() / wi);
        slope[1] = slope[1].max((d.delta_minus - base.delta_minus).abs() / wi);
    }
    let bound = |value: f64, s: f64| if s > 0.0 { value / s } else { f64::INFINITY };
    Some(
        bound(-base.delta_plus, slope[0])
            .min(bound(base.delta_minus, slope[1]))
            .min(w[2] * star.z12)
            .min(w[2] * (p.m2 - star.z12)),
    )
}
