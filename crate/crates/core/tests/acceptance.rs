mod common;

use std::time::{Duration, Instant};

use common::{draw_params, valid};
use fqrt_fluid::fluid::{hitting_time, psi, solve_ivp, solve_ivp_with, ExtendedState, SolveOptions, Trajectory};
use fqrt_fluid::ftsp::{build_blocks, ftsp_rates, pi12, pi12_bd_closed_form, solve_qbd, truncated_oracle_pi12};
use fqrt_fluid::model::{classify, drift_gap_identity, drift_pair, BoundarySub, FluidState, ModelParams, Region};
use fqrt_fluid::sim::{difference_process_stats, simulate, SimConfig};
use fqrt_fluid::stationarity::{region_of_star_by_rates, stationary_point, StationaryReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed())
}

fn high_class1_load() -> ModelParams {
    ModelParams {
        lambda1: 3.0,
        ..ModelParams::canonical()
    }
}

fn class2_heavy() -> ModelParams {
    ModelParams {
        lambda1: 13.0,
        lambda2: 1.5,
        mu11: 10.0,
        mu12: 0.8,
        mu22: 1.0,
        theta1: 2.0,
        theta2: 0.2,
        ..ModelParams::canonical()
    }
}

fn from_empty(p: &ModelParams) -> Trajectory {
    solve_ivp(&ExtendedState::empty(p), p, 0.01, 50.0).unwrap()
}

fn near(a: &FluidState, b: [f64; 3], tol: f64) -> bool {
    let a = a.to_array();
    (0..3).all(|i| (a[i] - b[i]).abs() <= tol)
}

fn criterion_1() -> Outcome {
    let p = ModelParams::canonical();
    let (rep, first) = timed(|| stationary_point(&p).unwrap());
    let (_, again) = timed(|| stationary_point(&p).unwrap());
    let elapsed = first.min(again);
    let x = rep.x_star;
    let exact = rep.z_star_exact == "19/80";
    let balance = (x.q1 - 0.11 / 0.3).abs() <= 1e-6 && (x.q2 - 0.1375 / 0.3).abs() <= 1e-6;
    let reported = near(&x, [0.3667, 0.4595, 0.2375], 2e-3);
    outcome(
        exact && balance && reported && elapsed < Duration::from_millis(1),
        format!(
            "z* = {} (exact), q* = ({:.6}, {:.6}); reported q2 0.4595 differs by {:.2e}; {:?}",
            rep.z_star_exact,
            x.q1,
            x.q2,
            (x.q2 - 0.4595).abs(),
            elapsed
        ),
    )
}

fn oracle_pi(p: &ModelParams, x: &FluidState) -> f64 {
    let rates = ftsp_rates(x, p);
    [200, 800, 3200, 12800, 51200, 204800]
        .into_iter()
        .find_map(|levels| truncated_oracle_pi12(&rates, p.j, p.k, levels).ok())
        .expect("oracle converges")
}

fn criterion_2() -> Outcome {
    let p = ModelParams::canonical();
    let x = stationary_point(&p).unwrap().x_star;
    let (qbd, elapsed) = timed(|| pi12(&x, &p).unwrap());
    let oracle = oracle_pi(&p, &x);
    let pass = (qbd - 0.19948).abs() <= 1e-4
        && (qbd - 0.2).abs() <= 1e-3
        && (qbd - oracle).abs() <= 1e-6
        && elapsed < Duration::from_millis(100);
    outcome(
        pass,
        format!("pi12 = {qbd:.6}, oracle gap {:.1e}; {elapsed:?}", (qbd - oracle).abs()),
    )
}

fn criterion_3() -> Outcome {
    let p = ModelParams::canonical();
    let (traj, elapsed) = timed(|| from_empty(&p));
    let star = stationary_point(&p).unwrap().x_star;
    let end = traj.terminal_fluid().unwrap();
    let reported = near(&end, [0.3639, 0.4550, 0.2385], 5e-3);
    let closed = (end.q1 - star.q1).abs() <= 5e-3 && (end.z12 - star.z12).abs() <= 5e-3;
    let hit = hitting_time(&traj).unwrap_or(f64::INFINITY);
    let worst_ratio = traj
        .samples
        .iter()
        .filter(|s| s.t > hit && s.state.q2 > 0.0)
        .map(|s| (s.state.q1 / s.state.q2 - 0.8).abs())
        .fold(0.0, f64::max);
    let pass = reported && closed && hit.is_finite() && worst_ratio <= 0.01 && elapsed <= Duration::from_secs(10);
    outcome(
        pass,
        format!(
            "terminal ({:.4}, {:.4}, {:.4}), hit at t = {hit:.3}, max |q1/q2 - 0.8| = {worst_ratio:.1e}; {elapsed:?}",
            end.q1, end.q2, end.z12
        ),
    )
}

fn coarse(r: Region) -> &'static str {
    match r {
        Region::SPlus => "SPlus",
        Region::SMinus => "SMinus",
        Region::Boundary(BoundarySub::A) => "A",
        Region::Boundary(_) => "boundary",
    }
}

fn criterion_4() -> Outcome {
    let p = high_class1_load();
    let traj = from_empty(&p);
    let end = traj.terminal_fluid().unwrap();
    let seq = traj.region_sequence();
    let regions: Vec<Region> = traj.samples.iter().filter_map(|s| s.region).collect();
    let boundary_then_plus = regions
        .iter()
        .position(|r| matches!(r, Region::Boundary(_)))
        .is_some_and(|i| regions[i..].contains(&Region::SPlus));
    let dip = traj
        .samples
        .iter()
        .skip_while(|s| s.state.z22 <= 1e-6)
        .find(|s| s.state.z22 <= 1e-9)
        .map(|s| s.t);
    let pass = near(&end, [4.0, 3.0, 1.0], 1e-2) && boundary_then_plus && dip.is_some_and(|t| t < 50.0);
    outcome(
        pass,
        format!(
            "terminal ({:.4}, {:.4}, {:.4}), sequence {seq:?}, z22 reaches 0 at t = {dip:?}",
            end.q1, end.q2, end.z12
        ),
    )
}

fn criterion_5() -> Outcome {
    let p = class2_heavy();
    let traj = from_empty(&p);
    let end = traj.terminal_fluid().unwrap();
    let tags: Vec<&str> = traj.samples.iter().filter_map(|s| s.region.map(coarse)).collect();
    let ordered = tags
        .iter()
        .position(|&t| t == "SPlus")
        .and_then(|i| tags[i..].iter().position(|&t| t == "A").map(|j| i + j))
        .is_some_and(|k| tags[k..].contains(&"SMinus"));
    let at_hit = traj
        .samples
        .windows(2)
        .find(|w| w[1].region.map(coarse) == Some("A"))
        .map(|w| (w[0].pi12.unwrap_or(f64::NAN), w[1].pi12.unwrap_or(f64::NAN), w[1].t));
    let drop = at_hit.is_some_and(|(before, after, _)| before == 1.0 && (after - 0.6).abs() <= 0.05);
    let pass = ordered && drop && near(&end, [1.5, 2.5, 0.0], 1e-2);
    outcome(
        pass,
        format!(
            "sequence {:?}, pi (before, at, t) of A hit {at_hit:?}, terminal ({:.4}, {:.4}, {:.4})",
            traj.region_sequence(),
            end.q1,
            end.q2,
            end.z12
        ),
    )
}

fn criterion_6() -> Outcome {
    let p = ModelParams::canonical();
    let base = from_empty(&p);
    let scaled = p.with_scaled_ratio(5);
    let opts = SolveOptions {
        allow_unreduced_ratio: true,
        ..SolveOptions::default()
    };
    let (big, elapsed) = timed(|| solve_ivp_with(&ExtendedState::empty(&scaled), &scaled, &opts).unwrap());
    let sup = base.sup_distance(&big);
    let pass = base.samples.len() == big.samples.len() && sup <= 1e-6 && elapsed <= Duration::from_secs(60);
    outcome(
        pass,
        format!("(4,5) vs (20,25) sup-norm {sup:.1e}; (20,25) run {elapsed:?}"),
    )
}

fn valid_draws(seed: u64, count: usize) -> Vec<(ModelParams, StationaryReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = draw_params(&mut rng);
        if valid(&p) {
            out.push((p, stationary_point(&p).unwrap()));
        }
    }
    out
}

fn criterion_7() -> Outcome {
    let draws = valid_draws(99, 1000);
    let a = draws
        .iter()
        .map(|(p, rep)| {
            psi(&rep.x_star, p, rep.pi_star)
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()))
        })
        .fold(0.0, f64::max);
    let regions = ["A", "SPlus", "SMinus"].map(|t| draws.iter().filter(|(_, r)| r.region.tag() == t).count());
    let pass_a = a <= 1e-12 && regions.iter().all(|&c| c > 0);
    let pass_b = draws
        .iter()
        .all(|(p, rep)| region_of_star_by_rates(p).unwrap().region == classify(&rep.x_star, p));

    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut c = 0.0f64;
    for (p, _) in draws.iter().cycle().take(10_000) {
        let x = FluidState::new(
            rng.random_range(0.0..10.0),
            rng.random_range(0.0..10.0),
            rng.random_range(0.0..=p.m2),
        );
        let expected = drift_gap_identity(&x, p);
        c = c.max((drift_pair(&x, p).gap() - expected).abs() / expected.abs().max(1.0));
    }
    let pass_c = c <= 1e-12;

    let mut d = 0.0f64;
    let mut checked = 0;
    for (p, _) in draws.iter().cycle() {
        if checked == 100 {
            break;
        }
        let p = ModelParams { j: 1, k: 1, ..*p };
        let q2 = rng.random_range(0.0..4.0);
        let x = FluidState::new(q2 + p.kappa, q2, rng.random_range(0.0..=p.m2));
        let dp = drift_pair(&x, &p);
        if classify(&x, &p) != Region::Boundary(BoundarySub::A)
            || dp.delta_minus / dp.gap() <= 1e-3
            || -dp.delta_plus / dp.gap() <= 1e-3
        {
            continue;
        }
        checked += 1;
        let closed = pi12_bd_closed_form(&x, &p).unwrap();
        let qbd = solve_qbd(&build_blocks(&ftsp_rates(&x, &p), 1, 1)).unwrap().pi12;
        let oracle = oracle_pi(&p, &x);
        d = d.max((closed - qbd).abs()).max((closed - oracle).abs());
    }
    let pass_d = d <= 1e-8;

    let (mut worst_rise, mut envelope_ok, mut runs) = (0.0f64, true, 0);
    let h = 0.01;
    for (p, rep) in &draws {
        if runs == 50 {
            break;
        }
        let Some(alpha) = rep.ssc.certified_radius else {
            continue;
        };
        let star = rep.x_star;
        let (dq2, dz) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let dir = FluidState::new(star.q1 + p.r() * dq2, star.q2 + dq2, star.z12 + dz);
        let s = rng.random_range(0.05..1.0) * alpha / rep.lyapunov.distance(&dir, &star);
        let x0 = FluidState::new(star.q1 + p.r() * dq2 * s, star.q2 + dq2 * s, star.z12 + dz * s);
        if !x0.in_box(p) {
            continue;
        }
        runs += 1;
        let traj = solve_ivp(&ExtendedState::from_fluid(&x0, p), p, h, 30.0).unwrap();
        let (d0, l0) = (rep.lyapunov.distance(&x0, &star), x0.l1_distance(&star));
        let mut prev = f64::INFINITY;
        for smp in &traj.samples {
            let x = smp.state.fluid();
            let v = rep.lyapunov.distance(&x, &star);
            if prev.is_finite() {
                worst_rise = worst_rise.max((v - prev) / (h * d0));
            }
            prev = v;
            let bound = rep.exp_bound.prefactor * l0 * (-rep.exp_bound.rate * smp.t).exp();
            envelope_ok &= x.l1_distance(&star) <= bound * (1.0 + 1e-9) + 1e-12;
        }
    }
    let pass_e = runs == 50 && worst_rise <= 0.2;
    let pass_f = runs == 50 && envelope_ok;
    let flags = [pass_a, pass_b, pass_c, pass_d, pass_e, pass_f];
    outcome(
        flags.iter().all(|&f| f),
        format!(
            "(a) max |Psi| {a:.1e}, regions A/S+/S- {regions:?}; (b) {pass_b}; (c) {c:.1e}; (d) {d:.1e}; \
             (e) worst rise {worst_rise:.3} h d0 over {runs} runs; (f) {envelope_ok}"
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let p = ModelParams::canonical();
    let fluid = from_empty(&p);
    let window = (20.0, 50.0);
    let runs: Vec<(f64, f64)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..10u64)
            .map(|seed| {
                scope.spawn(move || {
                    let path = simulate(&SimConfig::new(p, 1000, seed)).unwrap();
                    let stats = difference_process_stats(&path, window).unwrap();
                    (stats.fraction_positive, path.mean_queue_ratio(window).unwrap())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let fraction = runs.iter().map(|r| r.0).sum::<f64>() / runs.len() as f64;
    let ratio = runs.iter().map(|r| r.1).sum::<f64>() / runs.len() as f64;

    let scales = [100u32, 200, 400, 800, 1600];
    let medians: Vec<f64> = scales
        .iter()
        .map(|&n| {
            let devs = std::thread::scope(|scope| {
                let handles: Vec<_> = (0..10u64)
                    .map(|seed| {
                        let fluid = &fluid;
                        scope.spawn(move || {
                            simulate(&SimConfig::new(p, n, 1000 + seed))
                                .unwrap()
                                .deviation_from(fluid, 5.0)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap()).collect::<Vec<_>>()
            });
            median(devs)
        })
        .collect();
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let elapsed = start.elapsed();
    let pass = (fraction - 0.2).abs() <= 0.02
        && (ratio - 0.8).abs() <= 0.02
        && decreasing
        && elapsed <= Duration::from_secs(300);
    let medians: Vec<String> = medians.iter().map(|m| format!("{m:.3}")).collect();
    outcome(
        pass,
        format!(
            "fraction D > 0 = {fraction:.4}, queue ratio = {ratio:.4}, median deviation over n = {scales:?}: [{}]; {elapsed:?}",
            medians.join(", ")
        ),
    )
}

fn main() -> std::process::ExitCode {
    let criteria: [Criterion; 8] = [
        ("stationary point", criterion_1),
        ("pi at stationarity", criterion_2),
        ("canonical solve", criterion_3),
        ("high class-1 load run", criterion_4),
        ("S+ to A to S- run", criterion_5),
        ("ratio scaling", criterion_6),
        ("property suites", criterion_7),
        ("averaging principle", criterion_8),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let result = run();
        let status = if result.pass { "PASS" } else { "FAIL" };
        println!("criterion {} [{status}] {name}: {}", i + 1, result.detail);
        if !result.pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
        std::process::ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::ExitCode::FAILURE
    }
}
