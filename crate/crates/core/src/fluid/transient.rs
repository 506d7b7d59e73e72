//! Phase machine for the period before the restricted space is reached and
//! the Euler driver shared with the averaged ODE.

use super::{euler_step_at, ExtendedState, Phase, Sample, SolveOptions, Trajectory};
use crate::error::SolverError;
use crate::model::{validate_params_with, ModelParams, Region};

/// `z21` below this fraction of `m1` counts as drained.
pub(crate) const Z21_FLOOR_REL: f64 = 1e-9;
/// Relative slack for "pool is full".
const FULL_REL_TOL: f64 = 1e-12;
/// Cap on phase events located inside one Euler step.
const MAX_EVENTS_PER_STEP: usize = 16;

fn z21_floor(p: &ModelParams) -> f64 {
    Z21_FLOOR_REL * p.m1
}

fn pool1_full(s: &ExtendedState, p: &ModelParams) -> bool {
    s.z11 + s.z21 >= p.m1 * (1.0 - FULL_REL_TOL)
}

fn pool2_full(s: &ExtendedState, p: &ModelParams) -> bool {
    s.z12 + s.z22 >= p.m2 * (1.0 - FULL_REL_TOL)
}

fn queue_tol(p: &ModelParams) -> f64 {
    FULL_REL_TOL * p.kappa.max(1.0)
}

/// Net class-1 inflow into a full pool 1 with an empty queue.
fn pool1_net(s: &ExtendedState, p: &ModelParams) -> f64 {
    p.lambda1 - p.mu11 * s.z11 - p.mu21 * s.z21
}

/// Net class-2 inflow into a full pool 2 when pool 2 serves class 2 only.
fn pool2_net(s: &ExtendedState, p: &ModelParams) -> f64 {
    p.lambda2 - p.mu22 * s.z22 - p.mu12 * s.z12
}

fn pool1_saturated(s: &ExtendedState, p: &ModelParams) -> bool {
    pool1_full(s, p) && (s.q1 > 0.0 || pool1_net(s, p) >= 0.0)
}

fn pool2_saturated(s: &ExtendedState, p: &ModelParams) -> bool {
    pool2_full(s, p) && (s.q2 > 0.0 || pool2_net(s, p) >= 0.0)
}

/// Class-1 overflow into pool 2 while the class-1 queue is held at `kappa`.
fn overflow(s: &ExtendedState, p: &ModelParams) -> f64 {
    pool1_net(s, p) - p.theta1 * p.kappa
}

pub(crate) fn phase_of(s: &ExtendedState, p: &ModelParams) -> Phase {
    let drained = s.z21 <= z21_floor(p);
    let at_kappa = s.q1 >= p.kappa - queue_tol(p);
    if pool1_full(s, p) && pool2_full(s, p) && at_kappa {
        return if drained { Phase::InS } else { Phase::WrongWayDrain };
    }
    if !pool1_saturated(s, p) {
        Phase::FillingPools
    } else if at_kappa && drained && overflow(s, p) >= 0.0 {
        Phase::SharingRampUp
    } else {
        Phase::Queue1Growing
    }
}

/// Routes queued fluid into idle capacity at once, as the control does
/// with customers.
fn route_idle_capacity(s: &mut ExtendedState, p: &ModelParams) {
    let spare1 = (p.m1 - s.z11 - s.z21).max(0.0);
    let moved = s.q1.min(spare1);
    s.q1 -= moved;
    s.z11 += moved;
    let spare2 = (p.m2 - s.z12 - s.z22).max(0.0);
    let moved = s.q2.min(spare2);
    s.q2 -= moved;
    s.z22 += moved;
    if pool1_full(s, p) && s.z21 <= z21_floor(p) && s.q1 > p.kappa {
        let spare2 = (p.m2 - s.z12 - s.z22).max(0.0);
        let moved = (s.q1 - p.kappa).min(spare2);
        s.q1 -= moved;
        s.z12 += moved;
    }
}

/// Derivatives `(q1, q2, z11, z12, z21, z22)` in a phase before `S`.
fn transient_field(s: &ExtendedState, p: &ModelParams, phase: Phase) -> [f64; 6] {
    let dz21 = -p.mu21 * s.z21;
    let (dq1, dz11, into_pool2) = match phase {
        Phase::FillingPools => (0.0, p.lambda1 - p.mu11 * s.z11, 0.0),
        Phase::Queue1Growing => (pool1_net(s, p) - p.theta1 * s.q1, p.mu21 * s.z21, 0.0),
        Phase::SharingRampUp => (0.0, p.mu21 * s.z21, overflow(s, p)),
        Phase::InS | Phase::WrongWayDrain => unreachable!("averaged phases use the ODE"),
    };
    let (dq2, dz12, dz22) = if phase != Phase::SharingRampUp && pool2_saturated(s, p) {
        (pool2_net(s, p) - p.theta2 * s.q2, -p.mu12 * s.z12, p.mu12 * s.z12)
    } else {
        (0.0, into_pool2 - p.mu12 * s.z12, p.lambda2 - p.mu22 * s.z22)
    };
    [dq1, dq2, dz11, dz12, dz21, dz22]
}

enum Event {
    Pool1Full,
    Pool2Full,
    Queue1AtKappa,
    Queue1Empty,
    Queue2Empty,
}

fn next_event(s: &ExtendedState, p: &ModelParams, phase: Phase, d: &[f64; 6]) -> Option<(f64, Event)> {
    let mut best: Option<(f64, Event)> = None;
    let mut offer = |tau: f64, ev: Event| {
        if tau.is_finite() && tau >= 0.0 && best.as_ref().is_none_or(|b| tau < b.0) {
            best = Some((tau, ev));
        }
    };
    let occ1 = s.z11 + s.z21;
    let docc1 = d[2] + d[4];
    if !pool1_full(s, p) && docc1 > 0.0 {
        offer((p.m1 - occ1) / docc1, Event::Pool1Full);
    }
    let occ2 = s.z12 + s.z22;
    let docc2 = d[3] + d[5];
    if !pool2_full(s, p) && docc2 > 0.0 {
        offer((p.m2 - occ2) / docc2, Event::Pool2Full);
    }
    if phase == Phase::Queue1Growing {
        if s.q1 < p.kappa && d[0] > 0.0 {
            offer((p.kappa - s.q1) / d[0], Event::Queue1AtKappa);
        }
        if s.q1 > 0.0 && d[0] < 0.0 {
            offer(s.q1 / -d[0], Event::Queue1Empty);
        }
    }
    if s.q2 > 0.0 && d[1] < 0.0 {
        offer(s.q2 / -d[1], Event::Queue2Empty);
    }
    best
}

fn advance(s: &mut ExtendedState, d: &[f64; 6], dt: f64) {
    s.q1 += dt * d[0];
    s.q2 += dt * d[1];
    s.z11 += dt * d[2];
    s.z12 += dt * d[3];
    s.z21 += dt * d[4];
    s.z22 += dt * d[5];
}

fn land_on(s: &mut ExtendedState, p: &ModelParams, ev: &Event) {
    match ev {
        Event::Pool1Full => s.z11 = p.m1 - s.z21,
        Event::Pool2Full => s.z22 = p.m2 - s.z12,
        Event::Queue1AtKappa => s.q1 = p.kappa,
        Event::Queue1Empty => s.q1 = 0.0,
        Event::Queue2Empty => s.q2 = 0.0,
    }
}

struct Driver<'a> {
    p: &'a ModelParams,
    assumption: Result<(), String>,
    /// Surface contact time to attach to the next sample.
    surface: Option<f64>,
}

impl Driver<'_> {
    /// Projects onto the restricted space, refusing if Assumption A fails.
    fn enter_s(&mut self, s: &mut ExtendedState, at: f64) -> Result<(), SolverError> {
        if let Err(why) = &self.assumption {
            return Err(SolverError::AssumptionViolated(why.clone()));
        }
        s.z11 = self.p.m1;
        s.z21 = 0.0;
        s.z22 = self.p.m2 - s.z12;
        s.q1 = s.q1.max(self.p.kappa);
        s.phase = Phase::InS;
        if self.p.weighted_gap(s.q1, s.q2).abs() <= crate::model::boundary_tolerance(&s.fluid(), self.p) {
            self.surface.get_or_insert(at);
        }
        Ok(())
    }

    /// Averaged-ODE step of length `dt` from `s`, returning the region and
    /// mixing weight at the start.
    fn averaged_step(&mut self, s: &mut ExtendedState, dt: f64, t: f64) -> Result<(Region, f64), SolverError> {
        let p = self.p;
        let pool1_rate = p.mu11 * s.z11 + p.mu21 * s.z21;
        let x = s.fluid();
        let st = euler_step_at(&x, p, dt, pool1_rate, t)?;
        if st.snapped && !st.region.is_boundary() {
            let g0 = p.weighted_gap(x.q1, x.q2);
            let frac = if g0 != st.raw_gap && g0 * st.raw_gap <= 0.0 {
                g0 / (g0 - st.raw_gap)
            } else {
                1.0
            };
            self.surface.get_or_insert(t + frac * dt);
        }
        s.q1 = st.next.q1;
        s.q2 = st.next.q2;
        s.z12 = st.next.z12;
        if s.phase == Phase::WrongWayDrain {
            let drained = dt * p.mu21 * s.z21;
            s.z21 -= drained;
            s.z11 += drained;
            s.z22 = p.m2 - s.z12;
            if s.z21 <= z21_floor(p) {
                self.enter_s(s, t + dt)?;
            }
        } else {
            s.z22 = p.m2 - s.z12;
        }
        Ok((st.region, st.pi12))
    }

    /// Advances one grid step. Returns the region and mixing weight of the
    /// starting point when it is inside `S`.
    fn step(&mut self, s: &mut ExtendedState, h: f64, t: f64) -> Result<Option<(Region, f64)>, SolverError> {
        if s.phase == Phase::InS {
            return self.averaged_step(s, h, t).map(Some);
        }
        let mut elapsed = 0.0;
        for _ in 0..MAX_EVENTS_PER_STEP {
            let remaining = h - elapsed;
            if remaining <= 1e-12 * h {
                return Ok(None);
            }
            match s.phase {
                Phase::InS | Phase::WrongWayDrain => {
                    self.averaged_step(s, remaining, t + elapsed)?;
                    return Ok(None);
                }
                phase => {
                    let d = transient_field(s, self.p, phase);
                    match next_event(s, self.p, phase, &d) {
                        Some((tau, ev)) if tau < remaining => {
                            advance(s, &d, tau);
                            land_on(s, self.p, &ev);
                            elapsed += tau;
                        }
                        _ => {
                            advance(s, &d, remaining);
                            elapsed = h;
                        }
                    }
                    route_idle_capacity(s, self.p);
                    self.settle(s, t + elapsed)?;
                    if s.phase == Phase::InS && self.surface.is_some() {
                        // Entered on the switching surface: the grid point
                        // records the contact before the averaged ODE moves on.
                        return Ok(None);
                    }
                }
            }
        }
        Ok(None)
    }

    fn settle(&mut self, s: &mut ExtendedState, at: f64) -> Result<(), SolverError> {
        s.q1 = s.q1.max(0.0);
        s.q2 = s.q2.max(0.0);
        s.z21 = s.z21.max(0.0);
        let phase = phase_of(s, self.p);
        if phase == Phase::InS {
            self.enter_s(s, at)
        } else {
            s.phase = phase;
            Ok(())
        }
    }

    fn describe(&self, s: &ExtendedState) -> (Option<Region>, Option<f64>) {
        if s.phase != Phase::InS {
            return (None, None);
        }
        let x = s.fluid();
        let region = crate::model::classify(&x, self.p);
        let pi = crate::ftsp::pi12_in_region(&x, self.p, region).ok();
        (Some(region), pi)
    }
}

pub(crate) fn run(x0: &ExtendedState, p: &ModelParams, opts: &SolveOptions) -> Result<Trajectory, SolverError> {
    let (h, t_end) = (opts.h, opts.t_end);
    if !(h.is_finite() && h > 0.0) {
        return Err(SolverError::InvalidOptions(format!("step h must be positive, got {h}")));
    }
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(SolverError::InvalidOptions(format!(
            "end time must be positive, got {t_end}"
        )));
    }
    let report = validate_params_with(p, !opts.allow_unreduced_ratio)?;
    x0.check(p)?;
    let mut driver = Driver {
        p,
        assumption: if report.assumption_a {
            Ok(())
        } else {
            Err(report.describe_assumption())
        },
        surface: None,
    };
    let mut state = *x0;
    route_idle_capacity(&mut state, p);
    driver.settle(&mut state, 0.0)?;

    let steps = ((t_end / h).round() as usize).max(1);
    let mut samples = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let t = i as f64 * h;
        let surface_time = driver.surface.take();
        let at = state;
        let (region, pi12) = if i == steps {
            driver.describe(&at)
        } else {
            match driver.step(&mut state, h, t)? {
                Some((r, pi)) => (Some(r), Some(pi)),
                None => driver.describe(&at),
            }
        };
        samples.push(Sample {
            t,
            state: at,
            pi12,
            region,
            surface_time,
        });
    }

    let traj = Trajectory { h, samples };
    if state.phase != Phase::InS {
        if let Ok(star) = crate::stationarity::stationary_point(p) {
            if !(star.region.is_a() || star.region == Region::SPlus) {
                return Err(SolverError::NeverReachesS {
                    t_end,
                    region: star.region.tag().to_string(),
                });
            }
        }
    }
    Ok(traj)
}
