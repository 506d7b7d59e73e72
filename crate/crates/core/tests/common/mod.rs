#![allow(dead_code)]

use fqrt_fluid::model::{validate_params, ModelParams};
use proptest::prelude::*;
use rand::Rng;

pub const RATIOS: [(u32, u32); 6] = [(1, 1), (4, 5), (2, 3), (3, 2), (1, 2), (5, 4)];

/// Overloaded parameter sets; roughly nine in ten satisfy Assumption A.
pub fn draw_params<R: Rng>(rng: &mut R) -> ModelParams {
    let (j, k) = RATIOS[rng.random_range(0..RATIOS.len())];
    let m1 = rng.random_range(0.5..2.0);
    let m2 = rng.random_range(0.5..2.0);
    let mu11 = rng.random_range(0.3..2.0);
    let mu22 = rng.random_range(0.3..2.0);
    ModelParams {
        m1,
        m2,
        mu11,
        mu22,
        mu12: rng.random_range(0.3..2.0),
        mu21: rng.random_range(0.3..2.0),
        theta1: rng.random_range(0.1..2.0),
        theta2: rng.random_range(0.1..2.0),
        j,
        k,
        kappa: if rng.random_bool(0.5) {
            0.0
        } else {
            rng.random_range(0.0..0.5)
        },
        lambda1: m1 * mu11 + rng.random_range(0.1..4.0),
        lambda2: m2 * mu22 * rng.random_range(0.3..1.6),
    }
}

pub fn valid(p: &ModelParams) -> bool {
    validate_params(p).is_ok_and(|r| r.passed())
}

prop_compose! {
    pub fn params_strategy()(
        ratio in 0..RATIOS.len(),
        m1 in 0.5..2.0f64,
        m2 in 0.5..2.0f64,
        mu11 in 0.3..2.0f64,
        mu12 in 0.3..2.0f64,
        mu21 in 0.3..2.0f64,
        mu22 in 0.3..2.0f64,
        theta1 in 0.1..2.0f64,
        theta2 in 0.1..2.0f64,
        shifted in any::<bool>(),
        kappa in 0.0..0.5f64,
        extra1 in 0.1..4.0f64,
        load2 in 0.3..1.6f64,
    ) -> ModelParams {
        let (j, k) = RATIOS[ratio];
        ModelParams {
            lambda1: m1 * mu11 + extra1,
            lambda2: m2 * mu22 * load2,
            m1, m2, mu11, mu12, mu21, mu22, theta1, theta2, j, k,
            kappa: if shifted { kappa } else { 0.0 },
        }
    }
}

pub fn valid_params_strategy() -> impl Strategy<Value = ModelParams> {
    params_strategy().prop_filter("Assumption A", valid)
}
