//! The fast-time-scale process (FTSP) at a frozen fluid state.
//!
//! Multiplied by `k`, the queue-difference process lives on the integers and
//! jumps by `+-j` and `+-k`, with one set of constant rates above zero and
//! another at or below zero. Re-ordering its states into levels of `2m`
//! states (`m = max(j, k)`) turns it into a homogeneous QBD whose
//! steady-state mass above zero is `pi12(x)`, the mixing weight of the fluid
//! ODE.

mod banded;
mod blocks;
mod oracle;
mod solve;

use serde::{Deserialize, Serialize};

pub use blocks::{build_blocks, level_drifts, QbdBlocks};
pub use oracle::truncated_oracle_pi12;
pub use solve::{solve_qbd, QbdSolution, LR_CAP_TOLERANCE, LR_MAX_ITERATIONS, LR_TOLERANCE};

use crate::error::QbdError;
use crate::model::{classify, BoundarySub, DriftPair, FluidState, ModelParams, Region};

/// Transition rates of the FTSP. `lam_*` are upward jumps, `mu_*` downward;
/// the `_k` / `_j` suffix is the jump size; `_plus` applies above zero and
/// `_minus` at or below zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FtspRates {
    pub lam_k_plus: f64,
    pub lam_j_plus: f64,
    pub mu_k_plus: f64,
    pub mu_j_plus: f64,
    pub lam_k_minus: f64,
    pub lam_j_minus: f64,
    pub mu_k_minus: f64,
    pub mu_j_minus: f64,
}

impl FtspRates {
    pub fn drifts(&self, j: u32, k: u32) -> DriftPair {
        let (j, k) = (f64::from(j), f64::from(k));
        DriftPair {
            delta_plus: j * (self.lam_j_plus - self.mu_j_plus) + k * (self.lam_k_plus - self.mu_k_plus),
            delta_minus: j * (self.lam_j_minus - self.mu_j_minus) + k * (self.lam_k_minus - self.mu_k_minus),
        }
    }

    /// Total outflow rates `(sigma_plus, sigma_minus)` of a single state.
    pub fn sigmas(&self) -> (f64, f64) {
        (
            self.lam_k_plus + self.lam_j_plus + self.mu_k_plus + self.mu_j_plus,
            self.lam_k_minus + self.lam_j_minus + self.mu_k_minus + self.mu_j_minus,
        )
    }
}

/// FTSP rates with pool 1 full of class 1 (`z11 = m1`).
pub fn ftsp_rates(x: &FluidState, p: &ModelParams) -> FtspRates {
    ftsp_rates_with_pool1(x, p, p.mu11 * p.m1)
}

/// FTSP rates for a given total pool-1 service-completion rate. Inside the
/// restricted space that rate is `mu11 m1`; while class-2 fluid is still
/// draining out of pool 1 it is `mu11 z11 + mu21 z21`.
pub(crate) fn ftsp_rates_with_pool1(x: &FluidState, p: &ModelParams, pool1_rate: f64) -> FtspRates {
    let pool2_rate = p.mu12 * x.z12 + p.mu22 * (p.m2 - x.z12);
    FtspRates {
        lam_k_plus: p.lambda1,
        lam_j_plus: p.theta2 * x.q2,
        mu_k_plus: pool1_rate + pool2_rate + p.theta1 * x.q1,
        mu_j_plus: p.lambda2,
        lam_k_minus: p.lambda1,
        lam_j_minus: pool2_rate + p.theta2 * x.q2,
        mu_k_minus: pool1_rate + p.theta1 * x.q1,
        mu_j_minus: p.lambda2,
    }
}

/// Recurrence status of the FTSP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Recurrence {
    PositiveRecurrent,
    /// `delta_plus >= 0`: mass escapes upward.
    NullOrTransientUp,
    /// `delta_minus <= 0`: mass escapes downward.
    NullOrTransientDown,
}

impl Recurrence {
    pub fn from_drifts(d: &DriftPair) -> Self {
        if d.delta_plus >= 0.0 {
            Recurrence::NullOrTransientUp
        } else if d.delta_minus <= 0.0 {
            Recurrence::NullOrTransientDown
        } else {
            Recurrence::PositiveRecurrent
        }
    }
}

pub fn recurrence_check(x: &FluidState, p: &ModelParams) -> Recurrence {
    Recurrence::from_drifts(&crate::model::drift_pair(x, p))
}

/// The same test through the blocks: with the stationary vectors of
/// `A+` and `A-`, compare the mean up- and down-level rates of each half.
pub fn recurrence_by_blocks(blocks: &QbdBlocks) -> Recurrence {
    let (plus, minus) = level_drifts(blocks);
    // Level drifts are delta_plus / m and -delta_minus / m.
    if plus >= 0.0 {
        Recurrence::NullOrTransientUp
    } else if minus >= 0.0 {
        Recurrence::NullOrTransientDown
    } else {
        Recurrence::PositiveRecurrent
    }
}

/// `delta_minus / (delta_minus - delta_plus)`, the birth-death value of
/// `pi12` when `r = 1`.
pub fn pi12_bd_closed_form(x: &FluidState, p: &ModelParams) -> Result<f64, QbdError> {
    if p.j != p.k {
        return Err(QbdError::RatioNotOne { j: p.j, k: p.k });
    }
    let d = crate::model::drift_pair(x, p);
    if d.delta_minus <= 0.0 || d.delta_plus >= 0.0 {
        return Err(QbdError::DriftDegenerate {
            delta_plus: d.delta_plus,
            delta_minus: d.delta_minus,
        });
    }
    Ok(d.delta_minus / d.gap())
}

/// Relative distance to the edge of `A` below which the QBD is bypassed.
pub const NEAR_EDGE_GUARD: f64 = 1e-10;

/// Steady-state probability that the FTSP is positive, defined on the whole
/// box: 1 above the switching surface, 0 below, and on the surface the QBD
/// value inside `A` or the limiting 0/1 value outside it.
pub fn pi12(x: &FluidState, p: &ModelParams) -> Result<f64, QbdError> {
    pi12_in_region(x, p, classify(x, p))
}

pub(crate) fn pi12_in_region(x: &FluidState, p: &ModelParams, region: Region) -> Result<f64, QbdError> {
    pi12_with_rates(&ftsp_rates(x, p), p, region)
}

pub(crate) fn pi12_with_rates(rates: &FtspRates, p: &ModelParams, region: Region) -> Result<f64, QbdError> {
    match region {
        Region::SPlus => Ok(1.0),
        Region::SMinus => Ok(0.0),
        Region::Boundary(BoundarySub::APlusStrict | BoundarySub::APlusZero) => Ok(1.0),
        Region::Boundary(BoundarySub::AMinusStrict | BoundarySub::AMinusZero) => Ok(0.0),
        Region::Boundary(BoundarySub::A) => {
            let d = rates.drifts(p.j, p.k);
            if (-d.delta_plus) / d.gap() < NEAR_EDGE_GUARD {
                return Ok(1.0);
            }
            if d.delta_minus / d.gap() < NEAR_EDGE_GUARD {
                return Ok(0.0);
            }
            let blocks = build_blocks(rates, p.j, p.k);
            Ok(solve_qbd(&blocks)?.pi12)
        }
    }
}
