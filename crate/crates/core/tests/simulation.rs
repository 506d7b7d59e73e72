use fqrt_fluid::fluid::{solve_ivp, ExtendedState, Trajectory};
use fqrt_fluid::model::{FluidState, ModelParams};
use fqrt_fluid::sim::{default_threshold, difference_process_stats, simulate, SimConfig};

fn canonical_fluid() -> Trajectory {
    let p = ModelParams::canonical();
    solve_ivp(&ExtendedState::empty(&p), &p, 0.01, 50.0).unwrap()
}

fn median_deviation(n: u32, seeds: std::ops::Range<u64>, fluid: &Trajectory) -> f64 {
    let p = ModelParams::canonical();
    let mut devs: Vec<f64> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .map(|seed| {
                scope.spawn(move || {
                    simulate(&SimConfig::new(p, n, seed))
                        .unwrap()
                        .deviation_from(fluid, 5.0)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    devs.sort_by(f64::total_cmp);
    devs[devs.len() / 2]
}

#[test]
fn scaled_paths_approach_the_fluid_trajectory() {
    let fluid = canonical_fluid();
    assert!(median_deviation(1000, 0..5, &fluid) < 0.15);
    assert!(median_deviation(16000, 0..3, &fluid) < 0.05);
}

#[test]
fn difference_process_spends_pi_star_of_the_time_positive() {
    let path = simulate(&SimConfig::new(ModelParams::canonical(), 2000, 4)).unwrap();
    let stats = difference_process_stats(&path, (20.0, 50.0)).unwrap();
    assert!((stats.fraction_positive - 0.2).abs() < 0.05, "{stats:?}");
    assert!((path.mean_queue_ratio((20.0, 50.0)).unwrap() - 0.8).abs() < 0.05);
}

#[test]
fn short_window_is_rejected() {
    let cfg = SimConfig {
        t_end: 1.0,
        ..SimConfig::new(ModelParams::canonical(), 20, 1)
    };
    let path = simulate(&cfg).unwrap();
    assert!(difference_process_stats(&path, (0.5, 1.0)).is_err());
}

#[test]
fn no_arrivals_drains_the_system() {
    let p = ModelParams {
        lambda1: 0.0,
        lambda2: 0.0,
        ..ModelParams::canonical()
    };
    let cfg = SimConfig {
        t_end: 40.0,
        sample_dt: 1.0,
        x0: Some(FluidState::new(0.0, 0.0, 0.0)),
        ..SimConfig::new(p, 200, 3)
    };
    let path = simulate(&cfg).unwrap();
    let last = path.samples.last().unwrap().state;
    assert_eq!((last.q1, last.q2), (0, 0));
    assert!(last.in_system() < 5, "{last:?}");
}

#[test]
fn thresholds_grow_sublinearly() {
    assert_eq!(default_threshold(1000, 1.0), 64);
    let (small, large) = (default_threshold(1000, 1.0), default_threshold(16000, 1.0));
    assert!(large > small);
    assert!((large as f64 / 16000.0) < (small as f64 / 1000.0));
}
