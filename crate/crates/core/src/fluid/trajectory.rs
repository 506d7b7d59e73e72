use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::{ExtendedState, Phase};
use crate::model::{FluidState, Region};

/// One grid point of a fluid trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: ExtendedState,
    /// Mixing weight and region used for the step leaving this sample; set
    /// exactly when the phase is `InS`.
    pub pi12: Option<f64>,
    pub region: Option<Region>,
    /// Time within the preceding step at which the switching surface was
    /// reached, when that happened during the step.
    pub surface_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub h: f64,
    pub samples: Vec<Sample>,
}

/// Least-squares fit of `ln ||x(t) - x*||_1` against `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpFit {
    pub rate: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// First time the trajectory is on the switching surface inside the
/// restricted space, interpolated within the step that reached it.
pub fn hitting_time(traj: &Trajectory) -> Option<f64> {
    traj.samples
        .iter()
        .find(|s| s.state.phase == Phase::InS && s.region.is_some_and(|r| r.is_boundary()))
        .map(|s| s.surface_time.unwrap_or(s.t))
}

/// Formats with 9 significant digits, printing the shortest decimal that
/// round-trips the rounded value.
pub(crate) fn sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{}", if v == 0.0 { 0.0 } else { v });
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    if (1e-5..1e15).contains(&rounded.abs()) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

impl Trajectory {
    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    pub fn terminal_fluid(&self) -> Option<FluidState> {
        self.last().map(|s| s.state.fluid())
    }

    /// Fluid state at time `t`, linearly interpolated between samples and
    /// held constant outside the sampled range.
    pub fn state_at(&self, t: f64) -> Option<FluidState> {
        let first = self.samples.first()?;
        if t <= first.t {
            return Some(first.state.fluid());
        }
        let i = self.samples.partition_point(|s| s.t <= t);
        if i == self.samples.len() {
            return self.terminal_fluid();
        }
        let (a, b) = (&self.samples[i - 1], &self.samples[i]);
        let w = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 1.0 };
        let (x, y) = (a.state.fluid().to_array(), b.state.fluid().to_array());
        Some(FluidState::from_array([
            x[0] + w * (y[0] - x[0]),
            x[1] + w * (y[1] - x[1]),
            x[2] + w * (y[2] - x[2]),
        ]))
    }

    /// Distinct consecutive regions visited inside the restricted space, by
    /// coarse tag (`SPlus`, `SMinus`, `A`, `APlus`, `AMinus`).
    pub fn region_sequence(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for r in self.samples.iter().filter_map(|s| s.region) {
            let tag = coarse_tag(r);
            if out.last() != Some(&tag) {
                out.push(tag);
            }
        }
        out
    }

    /// Time spent in each region (coarse tag) and in each pre-S phase.
    pub fn occupancy(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for w in self.samples.windows(2) {
            let key = match w[0].region {
                Some(r) => coarse_tag(r).to_string(),
                None => w[0].state.phase.tag().to_string(),
            };
            *out.entry(key).or_insert(0.0) += w[1].t - w[0].t;
        }
        out
    }

    /// Fits the exponential decay of the distance to `x_star` on the
    /// samples at or after `from`, stopping where the distance falls to
    /// `floor`.
    pub fn fit_exponential(&self, x_star: &FluidState, from: f64, floor: f64) -> Option<ExpFit> {
        let pts: Vec<(f64, f64)> = self
            .samples
            .iter()
            .filter(|s| s.t >= from)
            .map(|s| (s.t, s.state.fluid().l1_distance(x_star)))
            .take_while(|&(_, d)| d > floor)
            .map(|(t, d)| (t, d.ln()))
            .collect();
        if pts.len() < 3 {
            return None;
        }
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
        if sxx == 0.0 {
            return None;
        }
        let slope = sxy / sxx;
        let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
        Some(ExpFit {
            rate: -slope,
            r_squared,
            points: pts.len(),
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,q1,q2,z11,z12,z22,z21,pi12,region,phase")?;
        for s in &self.samples {
            let st = &s.state;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                sig9(s.t),
                sig9(st.q1),
                sig9(st.q2),
                sig9(st.z11),
                sig9(st.z12),
                sig9(st.z22),
                sig9(st.z21),
                s.pi12.map(sig9).unwrap_or_default(),
                s.region.map(|r| r.tag()).unwrap_or(""),
                st.phase.tag()
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }

    /// Largest componentwise gap between the `(q1, q2, z12)` paths of two
    /// trajectories on the same grid.
    pub fn sup_distance(&self, other: &Trajectory) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| {
                let (x, y) = (a.state, b.state);
                (x.q1 - y.q1)
                    .abs()
                    .max((x.q2 - y.q2).abs())
                    .max((x.z12 - y.z12).abs())
                    .max((x.z11 - y.z11).abs())
                    .max((x.z22 - y.z22).abs())
            })
            .fold(0.0, f64::max)
    }
}

fn coarse_tag(r: Region) -> &'static str {
    use crate::model::BoundarySub as B;
    match r {
        Region::SPlus => "SPlus",
        Region::SMinus => "SMinus",
        Region::Boundary(B::A) => "A",
        Region::Boundary(B::APlusStrict | B::APlusZero) => "APlus",
        Region::Boundary(B::AMinusStrict | B::AMinusZero) => "AMinus",
    }
}
