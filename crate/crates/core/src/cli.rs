//! `fqrt` subcommands. Exit codes: 0 success, 1 input error, 2 model
//! assumption failure, 3 numerical failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use fqrt_fluid::config::{apply_overrides, params_from_json, parse_state, Manifest};
use fqrt_fluid::error::{ConfigError, ParamError, QbdError, SimError, SolverError, StationarityError};
use fqrt_fluid::fluid::{hitting_time, solve_ivp_with, ExtendedState, SolveOptions, Trajectory};
use fqrt_fluid::ftsp::{ftsp_rates, pi12, truncated_oracle_pi12};
use fqrt_fluid::model::{classify, validate_params, BoundarySub, FluidState, ModelParams, Region};
use fqrt_fluid::sim::{difference_process_stats, simulate, SimConfig, SimPath};
use fqrt_fluid::stationarity::stationary_point;

#[derive(Debug, Parser)]
#[command(
    name = "fqrt",
    version,
    about = "Fluid limit of the overloaded X model under FQR-T routing"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct Common {
    /// Parameter file (JSON); the canonical example when omitted.
    #[arg(long, global = true)]
    pub params: Option<PathBuf>,
    /// Override one parameter, e.g. `--set lambda1=3.0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Directory for the manifest and result files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check parameter structure and Assumption A.
    Validate,
    /// Stationary point, its region and stability constants.
    Stationary,
    /// Mixing weight pi12 at a state (the stationary point by default).
    Pi(PiArgs),
    /// Integrate the fluid ODE.
    Solve(SolveArgs),
    /// Simulate the scale-n system.
    Simulate(SimArgs),
    /// Solve and simulate on the same parameters and report deviations.
    Compare(CompareArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct PiArgs {
    /// State as `q1,q2,z12`.
    #[arg(long)]
    pub x0: Option<String>,
    /// Use the truncated direct solver instead of the matrix-geometric one.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct SolveArgs {
    #[arg(long, default_value_t = 0.01)]
    pub h: f64,
    #[arg(long = "t-end", default_value_t = 50.0)]
    pub t_end: f64,
    /// Start `q1,q2,z12` (pools full); the empty system when omitted.
    #[arg(long)]
    pub x0: Option<String>,
    /// Accept a ratio j/k that is not in lowest terms.
    #[arg(long)]
    pub allow_unreduced: bool,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct SimArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "t-end", default_value_t = 50.0)]
    pub t_end: f64,
    #[arg(long = "sample-dt", default_value_t = 0.01)]
    pub sample_dt: f64,
    /// Fluid-scale start `q1,q2,z12` (pools full); empty when omitted.
    #[arg(long)]
    pub x0: Option<String>,
    /// Multiplier `c` in the thresholds `ceil(c n^0.6)`.
    #[arg(long = "threshold-scale", default_value_t = 1.0)]
    pub threshold_scale: f64,
    /// Full simulation config (JSON); replaces the flags above.
    #[arg(long = "sim-config")]
    pub sim_config: Option<PathBuf>,
    /// Averaging window `start,end`; defaults to the last 60% of the run.
    #[arg(long)]
    pub window: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[arg(long, default_value_t = 0.01)]
    pub h: f64,
    #[arg(long = "t-end", default_value_t = 50.0)]
    pub t_end: f64,
    /// Scale factors to simulate, comma separated.
    #[arg(long, default_value = "1000")]
    pub n: String,
    /// First seed; seeds `seed..seed+seeds` are run for each n.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Deviations are measured from this time on.
    #[arg(long, default_value_t = 5.0)]
    pub from: f64,
    /// Averaging window `start,end`; defaults to the last 60% of the run.
    #[arg(long)]
    pub window: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Failure {
    Input,
    Assumption,
    Numerical,
}

/// Assumption A reported as false by `validate`.
#[derive(Debug, thiserror::Error)]
#[error("Assumption A fails: {0}")]
struct AssumptionFailed(String);

fn classify_error(err: &anyhow::Error) -> Failure {
    for cause in err.chain() {
        if cause.is::<AssumptionFailed>() {
            return Failure::Assumption;
        }
        if cause.is::<ConfigError>()
            || cause.is::<ParamError>()
            || cause.is::<std::io::Error>()
            || cause.is::<serde_json::Error>()
            || cause.is::<clap::Error>()
        {
            return Failure::Input;
        }
        if cause.is::<QbdError>() {
            return Failure::Numerical;
        }
        if let Some(e) = cause.downcast_ref::<StationarityError>() {
            return match e {
                StationarityError::Param(_) => Failure::Input,
                StationarityError::AssumptionViolated(_) => Failure::Assumption,
                _ => Failure::Numerical,
            };
        }
        if let Some(e) = cause.downcast_ref::<SolverError>() {
            return match e {
                SolverError::Param(_) | SolverError::InvalidOptions(_) | SolverError::StepTooLarge { .. } => {
                    Failure::Input
                }
                SolverError::AssumptionViolated(_) | SolverError::NeverReachesS { .. } => Failure::Assumption,
                SolverError::Qbd(_) | SolverError::ClampTooLarge { .. } => Failure::Numerical,
            };
        }
        if let Some(e) = cause.downcast_ref::<SimError>() {
            return match e {
                SimError::InvalidConfig(_) => Failure::Input,
                SimError::WindowTooShort { .. } => Failure::Numerical,
            };
        }
    }
    Failure::Input
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    match classify_error(err) {
        Failure::Input => 1,
        Failure::Assumption => 2,
        Failure::Numerical => 3,
    }
}

fn load_params(common: &Common) -> Result<ModelParams> {
    let mut p = match &common.params {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            params_from_json(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ModelParams::canonical(),
    };
    apply_overrides(&mut p, common.overrides.iter().map(String::as_str))?;
    Ok(p)
}

fn parse_window(text: Option<&str>, t_end: f64) -> Result<(f64, f64)> {
    let Some(text) = text else {
        return Ok((0.4 * t_end, t_end));
    };
    let (a, b) = text.split_once(',').ok_or_else(|| ConfigError::BadValue {
        key: "window".into(),
        value: text.into(),
        reason: "expected `start,end`".into(),
    })?;
    let parse = |s: &str| {
        s.trim().parse::<f64>().map_err(|e| ConfigError::BadValue {
            key: "window".into(),
            value: text.into(),
            reason: e.to_string(),
        })
    };
    Ok((parse(a)?, parse(b)?))
}

fn parse_n_list(text: &str) -> Result<Vec<u32>> {
    text.split(',')
        .map(|s| {
            s.trim().parse::<u32>().map_err(|e| {
                anyhow!(ConfigError::BadValue {
                    key: "n".into(),
                    value: text.into(),
                    reason: e.to_string(),
                })
            })
        })
        .collect()
}

/// Output directory: creates it and writes the manifest before any result.
struct Output {
    dir: Option<PathBuf>,
}

impl Output {
    fn open(dir: Option<&Path>, manifest: &Manifest) -> Result<Self> {
        if let Some(dir) = dir {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            write_file(&dir.join("manifest.json"), manifest.to_json().as_bytes())?;
        }
        Ok(Output {
            dir: dir.map(Path::to_path_buf),
        })
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = &self.dir {
            write_file(&dir.join(name), bytes)?;
        }
        Ok(())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(bytes)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

/// Prints to stdout; a closed pipe on the reading side is not an error.
fn emit(text: &str) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{text}").and_then(|_| stdout.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let p = load_params(&cli.common)?;
    let overrides = cli.common.overrides.clone();
    let out = cli.common.out.as_deref();
    match &cli.command {
        Command::Validate => cmd_validate(&p, overrides, out),
        Command::Stationary => cmd_stationary(&p, overrides, out),
        Command::Pi(args) => cmd_pi(&p, overrides, out, args),
        Command::Solve(args) => cmd_solve(&p, overrides, out, args),
        Command::Simulate(args) => cmd_simulate(&p, overrides, out, args),
        Command::Compare(args) => cmd_compare(&p, overrides, out, args),
    }
}

fn cmd_validate(p: &ModelParams, overrides: Vec<String>, out: Option<&Path>) -> Result<()> {
    let out = Output::open(out, &Manifest::new("validate", *p, overrides, None, json!({})))?;
    let report = validate_params(p)?;
    let text = to_json(&report)?;
    out.write("validation.json", text.as_bytes())?;
    emit(&text)?;
    if !report.assumption_a {
        return Err(AssumptionFailed(report.describe_assumption()).into());
    }
    Ok(())
}

fn cmd_stationary(p: &ModelParams, overrides: Vec<String>, out: Option<&Path>) -> Result<()> {
    let out = Output::open(out, &Manifest::new("stationary", *p, overrides, None, json!({})))?;
    let report = stationary_point(p)?;
    let text = to_json(&report)?;
    out.write("stationary.json", text.as_bytes())?;
    emit(&text)
}

/// Truncation depths tried by `pi --oracle`, doubling until the tail is
/// negligible.
const ORACLE_LEVELS: [usize; 10] = [200, 400, 800, 1600, 3200, 6400, 12800, 25600, 51200, 102400];

fn oracle_pi12(x: &FluidState, p: &ModelParams) -> Result<f64> {
    let rates = ftsp_rates(x, p);
    let mut last = None;
    for levels in ORACLE_LEVELS {
        match truncated_oracle_pi12(&rates, p.j, p.k, levels) {
            Ok(v) => return Ok(v),
            Err(e @ QbdError::TruncationInsufficient { .. }) => last = Some(e),
            Err(e) => return Err(e.into()),
        }
    }
    Err(last.expect("at least one depth was tried").into())
}

fn cmd_pi(p: &ModelParams, overrides: Vec<String>, out: Option<&Path>, args: &PiArgs) -> Result<()> {
    let out = Output::open(
        out,
        &Manifest::new("pi", *p, overrides, None, serde_json::to_value(args)?),
    )?;
    validate_params(p)?;
    let x = match &args.x0 {
        Some(s) => parse_state(s)?,
        None => stationary_point(p)?.x_star,
    };
    if !x.in_box(p) {
        bail!(ConfigError::BadState {
            input: args.x0.clone().unwrap_or_default(),
            reason: "state lies outside the box".into(),
        });
    }
    let region = classify(&x, p);
    let (value, method) = match (region, args.oracle) {
        (Region::Boundary(BoundarySub::A), true) => (oracle_pi12(&x, p)?, "oracle"),
        (Region::Boundary(BoundarySub::A), false) => (pi12(&x, p)?, "qbd"),
        _ => (pi12(&x, p)?, "region"),
    };
    let text = to_json(&json!({
        "state": x,
        "region": region,
        "pi12": value,
        "method": method,
    }))?;
    out.write("pi.json", text.as_bytes())?;
    emit(&text)
}

fn start_state(x0: Option<&str>, p: &ModelParams) -> Result<ExtendedState> {
    Ok(match x0 {
        Some(s) => ExtendedState::from_fluid(&parse_state(s)?, p),
        None => ExtendedState::empty(p),
    })
}

fn solve_summary(traj: &Trajectory, p: &ModelParams) -> serde_json::Value {
    let last = traj.last().expect("a trajectory has at least one sample");
    let star = stationary_point(p).ok();
    let hit = hitting_time(traj);
    let fit = match (&star, hit) {
        (Some(s), Some(t)) => traj.fit_exponential(&s.x_star, t, 1e-10),
        _ => None,
    };
    json!({
        "terminal": {
            "t": last.t,
            "state": last.state.fluid(),
            "z11": last.state.z11,
            "z21": last.state.z21,
            "z22": last.state.z22,
            "phase": last.state.phase.tag(),
            "region": last.region,
            "pi12": last.pi12,
        },
        "hitting_time": hit,
        "exponential_fit": fit,
        "x_star": star.as_ref().map(|s| s.x_star),
        "distance_to_x_star": star.as_ref().map(|s| last.state.fluid().l1_distance(&s.x_star)),
        "region_sequence": traj.region_sequence(),
        "occupancy": traj.occupancy(),
        "samples": traj.samples.len(),
    })
}

fn cmd_solve(p: &ModelParams, overrides: Vec<String>, out: Option<&Path>, args: &SolveArgs) -> Result<()> {
    let out = Output::open(
        out,
        &Manifest::new("solve", *p, overrides, None, serde_json::to_value(args)?),
    )?;
    let x0 = start_state(args.x0.as_deref(), p)?;
    let opts = SolveOptions {
        h: args.h,
        t_end: args.t_end,
        allow_unreduced_ratio: args.allow_unreduced,
    };
    let traj = solve_ivp_with(&x0, p, &opts)?;
    out.write("trajectory.csv", traj.to_csv_string().as_bytes())?;
    let text = to_json(&solve_summary(&traj, p))?;
    out.write("summary.json", text.as_bytes())?;
    emit(&text)
}

fn sim_config(p: &ModelParams, args: &SimArgs) -> Result<SimConfig> {
    if let Some(path) = &args.sim_config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(SimConfig::from_json(&text)?);
    }
    let mut cfg = SimConfig::new(*p, args.n, args.seed);
    let k = fqrt_fluid::sim::default_threshold(args.n, args.threshold_scale);
    if !(args.threshold_scale.is_finite() && args.threshold_scale >= 0.0) {
        bail!(SimError::InvalidConfig(format!(
            "threshold scale must be finite and >= 0, got {}",
            args.threshold_scale
        )));
    }
    cfg.k12 = k;
    cfg.k21 = k;
    cfg.t_end = args.t_end;
    cfg.sample_dt = args.sample_dt;
    cfg.x0 = args.x0.as_deref().map(parse_state).transpose()?;
    cfg.validate()?;
    Ok(cfg)
}

fn sim_summary(path: &SimPath, window: (f64, f64)) -> serde_json::Value {
    let last = path.samples.last().map(|s| path.scaled(&s.state));
    let (stats, stats_error) = match difference_process_stats(path, window) {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    };
    json!({
        "events": path.events,
        "terminal_scaled": last,
        "window": [window.0, window.1],
        "d_stats": stats,
        "d_stats_error": stats_error,
        "mean_queue_ratio": path.mean_queue_ratio(window),
    })
}

fn cmd_simulate(p: &ModelParams, overrides: Vec<String>, out: Option<&Path>, args: &SimArgs) -> Result<()> {
    let cfg = sim_config(p, args)?;
    let window = parse_window(args.window.as_deref(), cfg.t_end)?;
    let manifest = Manifest::new(
        "simulate",
        cfg.params,
        overrides,
        Some(cfg.seed),
        json!({ "config": cfg, "window": [window.0, window.1] }),
    );
    let out = Output::open(out, &manifest)?;
    let path = simulate(&cfg)?;
    out.write("sim_path.csv", path.to_csv_string().as_bytes())?;
    let text = to_json(&sim_summary(&path, window))?;
    out.write("sim_summary.json", text.as_bytes())?;
    emit(&text)
}

#[derive(Debug, Serialize)]
struct SeedResult {
    seed: u64,
    deviation: f64,
    empirical_pi12: Option<f64>,
    mean_queue_ratio: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ScaleResult {
    n: u32,
    median_deviation: f64,
    mean_empirical_pi12: Option<f64>,
    pi12_deviation: Option<f64>,
    mean_queue_ratio: Option<f64>,
    runs: Vec<SeedResult>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn cmd_compare(p: &ModelParams, overrides: Vec<String>, out: Option<&Path>, args: &CompareArgs) -> Result<()> {
    let ns = parse_n_list(&args.n)?;
    let window = parse_window(args.window.as_deref(), args.t_end)?;
    if args.seeds == 0 {
        bail!(ConfigError::BadValue {
            key: "seeds".into(),
            value: "0".into(),
            reason: "need at least one seed".into(),
        });
    }
    let configs: Vec<SimConfig> = ns
        .iter()
        .flat_map(|&n| (0..args.seeds).map(move |i| (n, i)))
        .map(|(n, i)| {
            let mut cfg = SimConfig::new(*p, n, args.seed + i);
            cfg.t_end = args.t_end;
            cfg.sample_dt = args.h.max(1e-3);
            cfg.validate().map(|_| cfg)
        })
        .collect::<Result<_, _>>()?;
    let manifest = Manifest::new("compare", *p, overrides, Some(args.seed), serde_json::to_value(args)?);
    let out = Output::open(out, &manifest)?;

    let opts = SolveOptions {
        h: args.h,
        t_end: args.t_end,
        allow_unreduced_ratio: false,
    };
    let (traj, paths) = std::thread::scope(|scope| {
        let fluid = scope.spawn(|| solve_ivp_with(&ExtendedState::empty(p), p, &opts));
        let sims: Vec<_> = configs.iter().map(|cfg| scope.spawn(move || simulate(cfg))).collect();
        let paths: Vec<Result<SimPath, SimError>> = sims
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect();
        (fluid.join().expect("solver thread panicked"), paths)
    });
    let traj = traj?;
    let paths = paths.into_iter().collect::<Result<Vec<_>, _>>()?;
    let pi_star = stationary_point(p).ok().map(|s| s.pi_star);

    let mut scales = Vec::new();
    for &n in &ns {
        let runs: Vec<SeedResult> = configs
            .iter()
            .zip(&paths)
            .filter(|(cfg, _)| cfg.n == n)
            .map(|(cfg, path)| SeedResult {
                seed: cfg.seed,
                deviation: path.deviation_from(&traj, args.from),
                empirical_pi12: difference_process_stats(path, window).ok().map(|s| s.fraction_positive),
                mean_queue_ratio: path.mean_queue_ratio(window),
            })
            .collect();
        let pis: Vec<f64> = runs.iter().filter_map(|r| r.empirical_pi12).collect();
        let ratios: Vec<f64> = runs.iter().filter_map(|r| r.mean_queue_ratio).collect();
        let mean_pi = mean(&pis);
        scales.push(ScaleResult {
            n,
            median_deviation: median(runs.iter().map(|r| r.deviation).collect()),
            mean_empirical_pi12: mean_pi,
            pi12_deviation: mean_pi.zip(pi_star).map(|(a, b)| (a - b).abs()),
            mean_queue_ratio: mean(&ratios),
            runs,
        });
    }
    let monotone = scales.windows(2).all(|w| w[1].median_deviation < w[0].median_deviation);
    let text = to_json(&json!({
        "from": args.from,
        "window": [window.0, window.1],
        "pi_star": pi_star,
        "hitting_time": hitting_time(&traj),
        "scales": scales,
        "deviation_decreasing_in_n": monotone,
    }))?;
    out.write("compare.json", text.as_bytes())?;
    emit(&text)?;
    if let Some(dir) = out.dir.as_ref() {
        let path = dir.join("trajectory.csv");
        write_file(&path, traj.to_csv_string().as_bytes())?;
    }
    Ok(())
}
