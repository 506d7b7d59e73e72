//! Exact discrete-event simulation of the scale-`n` X model under shifted
//! FQR-T with one-way sharing.
//!
//! Arrival rates are `n lambda_i`, pool sizes `round(n m_i)`; service and
//! abandonment rates are per customer. The queue difference is carried in
//! lattice units, `k D = k (Q1 - kappa_n) - j Q2`, so every routing test is
//! an exact integer comparison.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::fluid::Trajectory;
use crate::model::{FluidState, ModelParams};

/// Exponent of the default threshold scaling `k = ceil(c n^0.6)`.
pub const THRESHOLD_EXPONENT: f64 = 0.6;

/// Minimum number of D-transitions required by [`difference_process_stats`].
pub const MIN_WINDOW_TRANSITIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SharingMode {
    None,
    Pool2HelpsClass1,
    Pool1HelpsClass2,
}

/// Fully resolved simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub params: ModelParams,
    pub n: u32,
    pub k12: u64,
    pub k21: u64,
    pub kappa_n: u64,
    pub seed: u64,
    pub t_end: f64,
    pub sample_dt: f64,
    /// Fluid-scale start inside the restricted space; empty system if absent.
    #[serde(default)]
    pub x0: Option<FluidState>,
}

/// Config file form: everything but `params`, `n` and `seed` may be left out
/// and is filled in by [`SimConfigInput::resolve`].
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfigInput {
    pub params: ModelParams,
    pub n: u32,
    pub seed: u64,
    #[serde(default)]
    pub k12: Option<u64>,
    #[serde(default)]
    pub k21: Option<u64>,
    #[serde(default)]
    pub threshold_scale: Option<f64>,
    #[serde(default)]
    pub kappa_n: Option<u64>,
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub sample_dt: Option<f64>,
    #[serde(default)]
    pub x0: Option<FluidState>,
}

impl SimConfigInput {
    pub fn resolve(self) -> Result<SimConfig, SimError> {
        let c = self.threshold_scale.unwrap_or(1.0);
        if !(c.is_finite() && c >= 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "threshold_scale must be finite and >= 0, got {c}"
            )));
        }
        let mut cfg = SimConfig::new(self.params, self.n, self.seed);
        let k = default_threshold(self.n, c);
        cfg.k12 = self.k12.unwrap_or(k);
        cfg.k21 = self.k21.unwrap_or(k);
        if let Some(v) = self.kappa_n {
            cfg.kappa_n = v;
        }
        if let Some(v) = self.t_end {
            cfg.t_end = v;
        }
        if let Some(v) = self.sample_dt {
            cfg.sample_dt = v;
        }
        cfg.x0 = self.x0;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `ceil(c n^0.6)`: negligible on the fluid scale, large on the diffusion
/// scale.
pub fn default_threshold(n: u32, c: f64) -> u64 {
    (c * f64::from(n).powf(THRESHOLD_EXPONENT)).ceil() as u64
}

impl SimConfig {
    /// Defaults: thresholds `ceil(n^0.6)`, `kappa_n = round(n kappa)`,
    /// horizon 50 sampled every 0.01, empty start.
    pub fn new(params: ModelParams, n: u32, seed: u64) -> Self {
        let k = default_threshold(n, 1.0);
        SimConfig {
            params,
            n,
            k12: k,
            k21: k,
            kappa_n: (f64::from(n) * params.kappa).round().max(0.0) as u64,
            seed,
            t_end: 50.0,
            sample_dt: 0.01,
            x0: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let input: SimConfigInput = serde_json::from_str(text).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        input.resolve()
    }

    pub fn pool_sizes(&self) -> (i64, i64) {
        let n = f64::from(self.n);
        ((n * self.params.m1).round() as i64, (n * self.params.m2).round() as i64)
    }

    /// Arrival rates may be zero here; everything else follows the usual
    /// structural rules, except that the ratio need not be reduced.
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        let p = &self.params;
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        let rates = [
            ("lambda1", p.lambda1),
            ("lambda2", p.lambda2),
            ("mu11", p.mu11),
            ("mu12", p.mu12),
            ("mu21", p.mu21),
            ("mu22", p.mu22),
            ("theta1", p.theta1),
            ("theta2", p.theta2),
            ("kappa", p.kappa),
        ];
        for (name, v) in rates {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        for (name, v) in [("m1", p.m1), ("m2", p.m2)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if p.j == 0 || p.k == 0 {
            return bad(format!("ratio j/k = {}/{} must have positive parts", p.j, p.k));
        }
        let (n1, n2) = self.pool_sizes();
        if n1 < 1 || n2 < 1 {
            return bad(format!("pool sizes round to ({n1}, {n2}); both must be at least 1"));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return bad(format!("t_end must be finite and > 0, got {}", self.t_end));
        }
        if !(self.sample_dt.is_finite() && self.sample_dt > 0.0 && self.sample_dt <= self.t_end) {
            return bad(format!("sample_dt must be in (0, t_end], got {}", self.sample_dt));
        }
        if self.t_end / self.sample_dt > 1e8 {
            return bad("more than 1e8 samples requested".into());
        }
        let max_rate = f64::from(self.n) * (p.lambda1 + p.lambda2);
        if max_rate * self.t_end > 1e10 {
            return bad("expected number of arrivals exceeds 1e10".into());
        }
        if let Some(x) = self.x0 {
            if !x.in_box(p) {
                return bad(format!("x0 = ({}, {}, {}) is outside the state box", x.q1, x.q2, x.z12));
            }
        }
        Ok(())
    }
}

/// Unscaled system counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SimState {
    pub q1: i64,
    pub q2: i64,
    pub z11: i64,
    pub z12: i64,
    pub z21: i64,
    pub z22: i64,
    pub mode: SharingMode,
}

impl SimState {
    pub fn in_system(&self) -> i64 {
        self.q1 + self.q2 + self.z11 + self.z12 + self.z21 + self.z22
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Event {
    Arrival1,
    Arrival2,
    Service11,
    Service12,
    Service21,
    Service22,
    Abandon1,
    Abandon2,
}

const EVENTS: [Event; 8] = [
    Event::Arrival1,
    Event::Arrival2,
    Event::Service11,
    Event::Service12,
    Event::Service21,
    Event::Service22,
    Event::Abandon1,
    Event::Abandon2,
];

/// One sampled grid point, counts unscaled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSample {
    pub t: f64,
    pub state: SimState,
}

/// Sampled path plus the full log of changes of `k D`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPath {
    pub n: u32,
    pub j: u32,
    pub k: u32,
    pub kappa_n: u64,
    pub t_end: f64,
    pub samples: Vec<SimSample>,
    /// `(t, k D(t))` at time 0 and at every change.
    pub d_log: Vec<(f64, i64)>,
    pub events: u64,
}

/// Event loop of one simulation; owns its RNG.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimConfig,
    n1: i64,
    n2: i64,
    state: SimState,
    t: f64,
    rng: ChaCha8Rng,
}

impl Simulator {
    pub fn new(cfg: &SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let (n1, n2) = cfg.pool_sizes();
        let mut state = SimState {
            q1: 0,
            q2: 0,
            z11: 0,
            z12: 0,
            z21: 0,
            z22: 0,
            mode: SharingMode::None,
        };
        if let Some(x) = cfg.x0 {
            let n = f64::from(cfg.n);
            state.q1 = (n * x.q1).round() as i64;
            state.q2 = (n * x.q2).round() as i64;
            state.z12 = ((n * x.z12).round() as i64).min(n2);
            state.z11 = n1;
            state.z22 = n2 - state.z12;
            if state.z12 > 0 {
                state.mode = SharingMode::Pool2HelpsClass1;
            }
        }
        let mut sim = Simulator {
            cfg: cfg.clone(),
            n1,
            n2,
            state,
            t: 0.0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        };
        sim.settle();
        Ok(sim)
    }

    pub fn state(&self) -> SimState {
        self.state
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn pool_sizes(&self) -> (i64, i64) {
        (self.n1, self.n2)
    }

    /// `k D = k (Q1 - kappa_n) - j Q2`.
    pub fn k_d(&self) -> i64 {
        k_d(&self.state, &self.cfg)
    }

    fn rates(&self) -> [f64; 8] {
        let p = &self.cfg.params;
        let s = &self.state;
        let n = f64::from(self.cfg.n);
        [
            n * p.lambda1,
            n * p.lambda2,
            p.mu11 * s.z11 as f64,
            p.mu12 * s.z12 as f64,
            p.mu21 * s.z21 as f64,
            p.mu22 * s.z22 as f64,
            p.theta1 * s.q1 as f64,
            p.theta2 * s.q2 as f64,
        ]
    }

    /// Time of the next event and the event itself, without applying it.
    fn draw(&mut self) -> Option<(f64, Event)> {
        let rates = self.rates();
        let total: f64 = rates.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let wait: f64 = self.rng.sample::<f64, _>(Exp1) / total;
        let mut u = self.rng.random::<f64>() * total;
        let mut pick = EVENTS[0];
        for (ev, rate) in EVENTS.iter().zip(rates) {
            if rate <= 0.0 {
                continue;
            }
            pick = *ev;
            if u < rate {
                break;
            }
            u -= rate;
        }
        Some((self.t + wait, pick))
    }

    fn apply(&mut self, ev: Event) {
        let s = &mut self.state;
        match ev {
            Event::Arrival1 => s.q1 += 1,
            Event::Arrival2 => s.q2 += 1,
            Event::Service11 => s.z11 -= 1,
            Event::Service12 => s.z12 -= 1,
            Event::Service21 => s.z21 -= 1,
            Event::Service22 => s.z22 -= 1,
            Event::Abandon1 => s.q1 -= 1,
            Event::Abandon2 => s.q2 -= 1,
        }
        self.settle();
    }

    /// Advances by one event; `None` once no event can occur.
    pub fn step(&mut self) -> Option<Event> {
        let (t, ev) = self.draw()?;
        self.t = t;
        self.apply(ev);
        Some(ev)
    }

    /// Mode updates followed by assigning waiting customers to idle agents.
    fn settle(&mut self) {
        loop {
            self.update_mode();
            if !self.assign_one() {
                break;
            }
        }
        debug_assert!(self.invariants_hold(), "{:?}", self.state);
    }

    fn update_mode(&mut self) {
        let (j, k) = (i64::from(self.cfg.params.j), i64::from(self.cfg.params.k));
        let s = &mut self.state;
        let d12 = k * s.q1 - j * s.q2;
        let k12 = k * self.cfg.k12 as i64;
        let k21 = k * self.cfg.k21 as i64;
        match s.mode {
            SharingMode::Pool2HelpsClass1 if s.q1 == 0 || -d12 >= k21 => s.mode = SharingMode::None,
            SharingMode::Pool1HelpsClass2 if s.q2 == 0 || d12 >= k12 => s.mode = SharingMode::None,
            _ => {}
        }
        if s.mode == SharingMode::None {
            if d12 > k12 && s.z21 == 0 {
                s.mode = SharingMode::Pool2HelpsClass1;
            } else if -d12 > k21 && s.z12 == 0 {
                s.mode = SharingMode::Pool1HelpsClass2;
            }
        }
    }

    /// Gives one waiting customer to an idle agent, pool 1 first. Returns
    /// whether anything moved.
    fn assign_one(&mut self) -> bool {
        let kd = self.k_d();
        let (j, k) = (i64::from(self.cfg.params.j), i64::from(self.cfg.params.k));
        let s = &mut self.state;
        if s.z11 + s.z21 < self.n1 {
            let take2 = s.mode == SharingMode::Pool1HelpsClass2 && s.q2 > 0 && (j * s.q2 - k * s.q1 > 0 || s.q1 == 0);
            if take2 {
                s.q2 -= 1;
                s.z21 += 1;
                return true;
            }
            if s.q1 > 0 {
                s.q1 -= 1;
                s.z11 += 1;
                return true;
            }
        }
        if s.z12 + s.z22 < self.n2 {
            let take1 = s.mode == SharingMode::Pool2HelpsClass1 && s.q1 > 0 && (kd > 0 || s.q2 == 0);
            if take1 {
                s.q1 -= 1;
                s.z12 += 1;
                return true;
            }
            if s.q2 > 0 {
                s.q2 -= 1;
                s.z22 += 1;
                return true;
            }
        }
        false
    }

    /// Capacity, sign and one-way-sharing constraints.
    pub fn invariants_hold(&self) -> bool {
        let s = &self.state;
        let nonneg = [s.q1, s.q2, s.z11, s.z12, s.z21, s.z22].iter().all(|&v| v >= 0);
        nonneg && s.z11 + s.z21 <= self.n1 && s.z12 + s.z22 <= self.n2 && (s.z12 == 0 || s.z21 == 0)
    }
}

fn k_d(s: &SimState, cfg: &SimConfig) -> i64 {
    i64::from(cfg.params.k) * (s.q1 - cfg.kappa_n as i64) - i64::from(cfg.params.j) * s.q2
}

/// Runs the simulation to `t_end`, sampling every `sample_dt`.
pub fn simulate(cfg: &SimConfig) -> Result<SimPath, SimError> {
    let mut sim = Simulator::new(cfg)?;
    let grid = (cfg.t_end / cfg.sample_dt + 1e-9).floor() as usize;
    let mut samples = Vec::with_capacity(grid + 1);
    let mut d_log = vec![(0.0, sim.k_d())];
    let mut events = 0u64;
    let mut next = 0usize;
    loop {
        let drawn = sim.draw();
        let t_next = drawn.map_or(f64::INFINITY, |(t, _)| t);
        while next <= grid && next as f64 * cfg.sample_dt < t_next {
            samples.push(SimSample {
                t: next as f64 * cfg.sample_dt,
                state: sim.state,
            });
            next += 1;
        }
        let Some((t, ev)) = drawn else { break };
        if t > cfg.t_end {
            break;
        }
        sim.t = t;
        sim.apply(ev);
        events += 1;
        let kd = sim.k_d();
        if d_log.last().is_some_and(|&(_, v)| v != kd) {
            d_log.push((t, kd));
        }
    }
    Ok(SimPath {
        n: cfg.n,
        j: cfg.params.j,
        k: cfg.params.k,
        kappa_n: cfg.kappa_n,
        t_end: cfg.t_end,
        samples,
        d_log,
        events,
    })
}

/// Time-average statistics of the difference process over a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DStats {
    pub start: f64,
    pub end: f64,
    /// Fraction of time with `D > 0`: the empirical `pi12`.
    pub fraction_positive: f64,
    pub transitions: usize,
}

pub fn difference_process_stats(path: &SimPath, window: (f64, f64)) -> Result<DStats, SimError> {
    let (start, end) = window;
    if !(start.is_finite() && end.is_finite() && 0.0 <= start && start < end && end <= path.t_end) {
        return Err(SimError::InvalidConfig(format!(
            "window [{start}, {end}] must lie inside [0, {}]",
            path.t_end
        )));
    }
    let mut positive = 0.0;
    let mut transitions = 0;
    for (i, &(t, kd)) in path.d_log.iter().enumerate() {
        let until = path.d_log.get(i + 1).map_or(path.t_end, |&(t, _)| t);
        let (a, b) = (t.max(start), until.min(end));
        if kd > 0 && b > a {
            positive += b - a;
        }
        if i > 0 && t >= start && t <= end {
            transitions += 1;
        }
    }
    if transitions < MIN_WINDOW_TRANSITIONS {
        return Err(SimError::WindowTooShort {
            start,
            end,
            transitions,
            required: MIN_WINDOW_TRANSITIONS,
        });
    }
    Ok(DStats {
        start,
        end,
        fraction_positive: positive / (end - start),
        transitions,
    })
}

impl SimPath {
    pub fn scaled(&self, s: &SimState) -> [f64; 6] {
        let n = f64::from(self.n);
        [s.q1, s.q2, s.z11, s.z12, s.z21, s.z22].map(|v| v as f64 / n)
    }

    /// `D = (Q1 - kappa_n) - r Q2`, unscaled.
    pub fn d_value(&self, s: &SimState) -> f64 {
        let kd = i64::from(self.k) * (s.q1 - self.kappa_n as i64) - i64::from(self.j) * s.q2;
        kd as f64 / f64::from(self.k)
    }

    /// Mean of `Q1 / Q2` over the samples in the window with `Q2 > 0`.
    pub fn mean_queue_ratio(&self, window: (f64, f64)) -> Option<f64> {
        let ratios: Vec<f64> = self
            .samples
            .iter()
            .filter(|s| s.t >= window.0 && s.t <= window.1 && s.state.q2 > 0)
            .map(|s| s.state.q1 as f64 / s.state.q2 as f64)
            .collect();
        (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64)
    }

    /// Largest gap in `(Q1 / n, Z12 / n)` to the fluid path over samples at
    /// or after `from`.
    pub fn deviation_from(&self, traj: &Trajectory, from: f64) -> f64 {
        self.samples
            .iter()
            .filter(|s| s.t >= from)
            .filter_map(|s| {
                let x = traj.state_at(s.t)?;
                let v = self.scaled(&s.state);
                Some((v[0] - x.q1).abs().max((v[3] - x.z12).abs()))
            })
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,Q1,Q2,Z11,Z12,Z21,Z22,D")?;
        for s in &self.samples {
            let v = self.scaled(&s.state);
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                s.t,
                v[0],
                v[1],
                v[2],
                v[3],
                v[4],
                v[5],
                self.d_value(&s.state)
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}
