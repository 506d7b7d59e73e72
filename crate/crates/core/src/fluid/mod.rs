//! Fluid dynamics: the averaged ODE inside the restricted space, the
//! transient cascade that leads into it, and the fixed-step Euler driver.

mod trajectory;
mod transient;

use serde::{Deserialize, Serialize};

pub use trajectory::{hitting_time, ExpFit, Sample, Trajectory};

use crate::error::SolverError;
use crate::ftsp::{ftsp_rates_with_pool1, pi12_with_rates};
use crate::model::{boundary_sub, classify, BoundarySub, FluidState, ModelParams, Region};

/// Transient phase of the extended fluid state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    FillingPools,
    Queue1Growing,
    SharingRampUp,
    InS,
    WrongWayDrain,
}

impl Phase {
    pub fn tag(&self) -> &'static str {
        match self {
            Phase::FillingPools => "FillingPools",
            Phase::Queue1Growing => "Queue1Growing",
            Phase::SharingRampUp => "SharingRampUp",
            Phase::InS => "InS",
            Phase::WrongWayDrain => "WrongWayDrain",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Full fluid state, including the pool contents that are pinned once the
/// restricted space is reached. `zij` is class-`i` fluid in pool `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtendedState {
    pub q1: f64,
    pub q2: f64,
    pub z11: f64,
    pub z12: f64,
    pub z21: f64,
    pub z22: f64,
    pub phase: Phase,
}

impl ExtendedState {
    /// Both pools and queues empty.
    pub fn empty(p: &ModelParams) -> Self {
        let mut s = ExtendedState {
            q1: 0.0,
            q2: 0.0,
            z11: 0.0,
            z12: 0.0,
            z21: 0.0,
            z22: 0.0,
            phase: Phase::FillingPools,
        };
        s.phase = transient::phase_of(&s, p);
        s
    }

    /// Lifts a point of the restricted space.
    pub fn from_fluid(x: &FluidState, p: &ModelParams) -> Self {
        ExtendedState {
            q1: x.q1,
            q2: x.q2,
            z11: p.m1,
            z12: x.z12,
            z21: 0.0,
            z22: p.m2 - x.z12,
            phase: Phase::InS,
        }
    }

    pub fn fluid(&self) -> FluidState {
        FluidState::new(self.q1, self.q2, self.z12)
    }

    /// Checks signs and pool capacities.
    pub fn check(&self, p: &ModelParams) -> Result<(), SolverError> {
        let tol = 1e-12 * p.m1.max(p.m2).max(1.0);
        let fields = [
            ("q1", self.q1),
            ("q2", self.q2),
            ("z11", self.z11),
            ("z12", self.z12),
            ("z21", self.z21),
            ("z22", self.z22),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(SolverError::InvalidOptions(format!(
                    "initial `{name}` must be finite and nonnegative, got {v}"
                )));
            }
        }
        if self.z11 + self.z21 > p.m1 + tol {
            return Err(SolverError::InvalidOptions(format!(
                "pool 1 holds {} > m1 = {}",
                self.z11 + self.z21,
                p.m1
            )));
        }
        if self.z12 + self.z22 > p.m2 + tol {
            return Err(SolverError::InvalidOptions(format!(
                "pool 2 holds {} > m2 = {}",
                self.z12 + self.z22,
                p.m2
            )));
        }
        Ok(())
    }
}

/// Right-hand side of the averaged ODE for a given mixing weight `pi`.
pub fn psi(x: &FluidState, p: &ModelParams, pi: f64) -> [f64; 3] {
    psi_with_pool1(x, p, pi, p.m1 * p.mu11)
}

pub(crate) fn psi_with_pool1(x: &FluidState, p: &ModelParams, pi: f64, pool1_rate: f64) -> [f64; 3] {
    let z = x.z12;
    let z22 = p.m2 - z;
    let pool2 = p.mu12 * z + p.mu22 * z22;
    [
        p.lambda1 - pool1_rate - pi * pool2 - p.theta1 * x.q1,
        p.lambda2 - (1.0 - pi) * pool2 - p.theta2 * x.q2,
        pi * z22 * p.mu22 - (1.0 - pi) * z * p.mu12,
    ]
}

/// Outcome of one Euler step inside the restricted space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerStep {
    pub next: FluidState,
    /// Mixing weight and region evaluated at the start of the step.
    pub pi12: f64,
    pub region: Region,
    pub snapped: bool,
    /// Largest amount by which a component was pushed back into its range.
    pub clamp: f64,
    /// `q1 - r q2 - kappa` after the Euler update and before snapping.
    pub raw_gap: f64,
}

/// Largest clamp accepted as round-off, relative to the state scale.
pub const CLAMP_REL_LIMIT: f64 = 1e-6;

/// One forward Euler step of the averaged ODE.
///
/// A step that starts in `A` is put back on the switching surface. A step
/// that starts off the surface is put on it when it crosses the surface or
/// ends within `h` of it while getting closer. A step that starts on the
/// surface outside `A` is left alone so the trajectory can leave.
pub fn euler_step(x: &FluidState, p: &ModelParams, h: f64) -> Result<EulerStep, SolverError> {
    euler_step_at(x, p, h, p.m1 * p.mu11, 0.0)
}

pub(crate) fn euler_step_at(
    x: &FluidState,
    p: &ModelParams,
    h: f64,
    pool1_rate: f64,
    t: f64,
) -> Result<EulerStep, SolverError> {
    let scale = x.q1.max(p.r() * x.q2).max(1.0);
    if h > 0.1 * scale {
        return Err(SolverError::StepTooLarge { h, scale });
    }
    let rates = ftsp_rates_with_pool1(x, p, pool1_rate);
    let region = match classify(x, p) {
        Region::Boundary(_) => Region::Boundary(boundary_sub(&rates.drifts(p.j, p.k))),
        other => other,
    };
    let pi = pi12_with_rates(&rates, p, region)?;
    let d = psi_with_pool1(x, p, pi, pool1_rate);
    let mut next = FluidState::new(x.q1 + h * d[0], x.q2 + h * d[1], x.z12 + h * d[2]);

    let gap_before = p.weighted_gap(x.q1, x.q2);
    let raw_gap = p.weighted_gap(next.q1, next.q2);
    let snapped = match region {
        Region::Boundary(BoundarySub::A) => true,
        Region::Boundary(_) => false,
        _ => {
            let crossed = gap_before * raw_gap < 0.0;
            let closing = raw_gap.abs() < h && raw_gap.abs() < gap_before.abs();
            crossed || closing
        }
    };
    if snapped {
        next.q2 = f64::from(p.k) * (next.q1 - p.kappa) / f64::from(p.j);
    }

    let clamp = clamp_into_box(&mut next, p);
    let limit = CLAMP_REL_LIMIT * next.q1.max(next.q2).max(p.m2).max(1.0);
    if clamp.1 > limit {
        return Err(SolverError::ClampTooLarge {
            component: clamp.0,
            magnitude: clamp.1,
            t,
        });
    }
    Ok(EulerStep {
        next,
        pi12: pi,
        region,
        snapped,
        clamp: clamp.1,
        raw_gap,
    })
}

fn clamp_into_box(x: &mut FluidState, p: &ModelParams) -> (&'static str, f64) {
    let mut worst = ("", 0.0_f64);
    let mut note = |name: &'static str, by: f64| {
        if by > worst.1 {
            worst = (name, by);
        }
    };
    if x.q1 < 0.0 {
        note("q1", -x.q1);
        x.q1 = 0.0;
    }
    if x.q2 < 0.0 {
        note("q2", -x.q2);
        x.q2 = 0.0;
    }
    if x.z12 < 0.0 {
        note("z12", -x.z12);
        x.z12 = 0.0;
    }
    if x.z12 > p.m2 {
        note("z12", x.z12 - p.m2);
        x.z12 = p.m2;
    }
    worst
}

/// Options for [`solve_ivp_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub h: f64,
    pub t_end: f64,
    /// Accept `j / k` not in lowest terms (larger QBD blocks, same answer).
    pub allow_unreduced_ratio: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            h: 0.01,
            t_end: 50.0,
            allow_unreduced_ratio: false,
        }
    }
}

/// Integrates the fluid model from `x0` on the grid `0, h, 2h, ...` up to
/// `t_end`, switching between transient phases and the averaged ODE.
pub fn solve_ivp(x0: &ExtendedState, p: &ModelParams, h: f64, t_end: f64) -> Result<Trajectory, SolverError> {
    solve_ivp_with(
        x0,
        p,
        &SolveOptions {
            h,
            t_end,
            allow_unreduced_ratio: false,
        },
    )
}

pub fn solve_ivp_with(x0: &ExtendedState, p: &ModelParams, opts: &SolveOptions) -> Result<Trajectory, SolverError> {
    transient::run(x0, p, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ftsp::pi12;

    fn star() -> FluidState {
        FluidState::new(0.11 / 0.3, 0.1375 / 0.3, 0.2375)
    }

    #[test]
    fn psi_vanishes_at_star() {
        let p = ModelParams::canonical();
        let pi_star = 0.8 * 0.2375 / (0.8 * 0.2375 + 0.7625);
        let d = psi(&star(), &p, pi_star);
        for v in d {
            assert!(v.abs() < 1e-12, "{d:?}");
        }
    }

    #[test]
    fn z_is_frozen_at_inactive_ends() {
        let p = ModelParams::canonical();
        assert_eq!(psi(&FluidState::new(1.0, 1.0, p.m2), &p, 1.0)[2], 0.0);
        assert_eq!(psi(&FluidState::new(1.0, 1.0, 0.0), &p, 0.0)[2], 0.0);
    }

    #[test]
    fn queue1_never_falls_below_kappa_with_pi_zero() {
        let p = ModelParams {
            kappa: 0.2,
            ..ModelParams::canonical()
        };
        for z in [0.0, 0.5, 1.0] {
            let d = psi(&FluidState::new(p.kappa, 0.7, z), &p, 0.0);
            assert!((d[0] - (p.lambda1 - p.m1 * p.mu11 - p.theta1 * p.kappa)).abs() < 1e-15);
            assert!(d[0] >= 0.0);
        }
    }

    #[test]
    fn step_from_star_stays_put() {
        let p = ModelParams::canonical();
        let x = FluidState::new(0.8 * 0.1375 / 0.3, 0.1375 / 0.3, 0.2375);
        let s = euler_step(&x, &p, 0.01).unwrap();
        assert!(s.region.is_a());
        assert!(s.snapped);
        assert!((s.pi12 - pi12(&x, &p).unwrap()).abs() < 1e-15);
        assert!(s.next.l1_distance(&x) < 1e-12);
    }

    #[test]
    fn step_in_s_plus_is_linear_field() {
        let p = ModelParams::canonical();
        let x = FluidState::new(3.0, 0.5, 0.4);
        let s = euler_step(&x, &p, 0.01).unwrap();
        assert_eq!(s.region, Region::SPlus);
        assert_eq!(s.pi12, 1.0);
        let d = psi(&x, &p, 1.0);
        assert_eq!(s.next.q1, x.q1 + 0.01 * d[0]);
        assert_eq!(s.next.q2, x.q2 + 0.01 * d[1]);
        assert!(!s.snapped);
    }

    #[test]
    fn crossing_is_snapped_keeping_q1() {
        let p = ModelParams::canonical();
        // Just above the surface and heading down through it.
        let x = FluidState::new(0.4 + 1e-4, 0.5, 0.2);
        let s = euler_step(&x, &p, 0.01).unwrap();
        assert!(s.snapped);
        assert!(p.weighted_gap(s.next.q1, s.next.q2).abs() < 1e-15);
        let d = psi(&x, &p, 1.0);
        assert_eq!(s.next.q1, x.q1 + 0.01 * d[0]);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let p = ModelParams::canonical();
        assert!(matches!(
            euler_step(&star(), &p, 0.5),
            Err(SolverError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn extended_state_checks_capacity() {
        let p = ModelParams::canonical();
        let mut s = ExtendedState::empty(&p);
        assert!(s.check(&p).is_ok());
        s.z12 = 0.7;
        s.z22 = 0.7;
        assert!(s.check(&p).is_err());
        let lifted = ExtendedState::from_fluid(&star(), &p);
        assert_eq!(lifted.phase, Phase::InS);
        assert_eq!(lifted.z12 + lifted.z22, p.m2);
    }
}
