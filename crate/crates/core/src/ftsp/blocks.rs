use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::FtspRates;

/// Generator blocks of the level-ordered FTSP: `B` on level 0, `A0` one
/// level up, `A1` within a level, `A2` one level down. Each is `2m x 2m` with
/// the phases above zero first.
#[derive(Debug, Clone, PartialEq)]
pub struct QbdBlocks {
    pub m: usize,
    pub b: DMatrix<f64>,
    pub a0: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
}

#[derive(Serialize)]
struct BlocksDump {
    m: usize,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "A0")]
    a0: Vec<Vec<f64>>,
    #[serde(rename = "A1")]
    a1: Vec<Vec<f64>>,
    #[serde(rename = "A2")]
    a2: Vec<Vec<f64>>,
}

pub(crate) fn rows(mat: &DMatrix<f64>) -> Vec<Vec<f64>> {
    mat.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl QbdBlocks {
    pub fn dim(&self) -> usize {
        2 * self.m
    }

    /// JSON object keyed by block name with row-major nested arrays.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(BlocksDump {
            m: self.m,
            b: rows(&self.b),
            a0: rows(&self.a0),
            a1: rows(&self.a1),
            a2: rows(&self.a2),
        })
        .expect("matrix dump is plain data")
    }

    /// `(A_i^+, A_i^-)` sub-blocks of `A_i`.
    pub fn halves(&self, which: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let a = match which {
            0 => &self.a0,
            1 => &self.a1,
            2 => &self.a2,
            _ => panic!("block index {which} out of range"),
        };
        let m = self.m;
        (a.view((0, 0), (m, m)).into_owned(), a.view((m, m), (m, m)).into_owned())
    }

    /// Largest absolute row sum of `B + A0` and `A0 + A1 + A2`.
    pub fn generator_residual(&self) -> f64 {
        let boundary = &self.b + &self.a0;
        let interior = &self.a0 + &self.a1 + &self.a2;
        let max_row = |mat: &DMatrix<f64>| mat.row_iter().map(|r| r.sum().abs()).fold(0.0, f64::max);
        max_row(&boundary).max(max_row(&interior))
    }
}

/// Level and phase of an FTSP state. Level `n` holds `nm+1, ..., nm+m`
/// (phases `0..m`) followed by `-nm, ..., -nm-m+1` (phases `m..2m`).
fn locate(state: i64, m: i64) -> (i64, usize) {
    if state > 0 {
        let level = (state - 1) / m;
        (level, (state - level * m - 1) as usize)
    } else {
        let depth = -state;
        let level = depth / m;
        (level, (m + depth - level * m) as usize)
    }
}

fn state_at(level: i64, phase: usize, m: i64) -> i64 {
    let phase = phase as i64;
    if phase < m {
        level * m + phase + 1
    } else {
        -(level * m) - (phase - m)
    }
}

pub fn build_blocks(rates: &FtspRates, j: u32, k: u32) -> QbdBlocks {
    let m = j.max(k) as usize;
    let mi = m as i64;
    let n = 2 * m;
    let mut b = DMatrix::zeros(n, n);
    let mut a0 = DMatrix::zeros(n, n);
    let mut a1 = DMatrix::zeros(n, n);
    let mut a2 = DMatrix::zeros(n, n);

    let plus = [
        (i64::from(k), rates.lam_k_plus),
        (i64::from(j), rates.lam_j_plus),
        (-i64::from(k), rates.mu_k_plus),
        (-i64::from(j), rates.mu_j_plus),
    ];
    let minus = [
        (i64::from(k), rates.lam_k_minus),
        (i64::from(j), rates.lam_j_minus),
        (-i64::from(k), rates.mu_k_minus),
        (-i64::from(j), rates.mu_j_minus),
    ];

    // Level 1 is representative of every interior level; level 0 gives B.
    for (level, within) in [(0i64, &mut b), (1i64, &mut a1)] {
        for phase in 0..n {
            let state = state_at(level, phase, mi);
            let jumps = if state > 0 { &plus } else { &minus };
            let mut out = 0.0;
            for &(step, rate) in jumps {
                if rate == 0.0 {
                    continue;
                }
                out += rate;
                let (to_level, to_phase) = locate(state + step, mi);
                match to_level - level {
                    0 => within[(phase, to_phase)] += rate,
                    1 => {
                        if level == 1 {
                            a0[(phase, to_phase)] += rate;
                        }
                    }
                    -1 => a2[(phase, to_phase)] += rate,
                    other => unreachable!("jump of {step} crossed {other} levels"),
                }
            }
            within[(phase, phase)] -= out;
        }
    }
    QbdBlocks { m, b, a0, a1, a2 }
}

/// Mean level drift of each half under the stationary vector of
/// `A+ = A0+ + A1+ + A2+` (and likewise `A-`). Upward is away from level 0
/// in both halves, so the pair is `(delta_plus / m, -delta_minus / m)`.
pub fn level_drifts(blocks: &QbdBlocks) -> (f64, f64) {
    let (a0p, a0m) = blocks.halves(0);
    let (a1p, a1m) = blocks.halves(1);
    let (a2p, a2m) = blocks.halves(2);
    let drift = |a0: DMatrix<f64>, a1: DMatrix<f64>, a2: DMatrix<f64>| {
        let nu = stationary_vector(&(&a0 + &a1 + &a2));
        let ones = DVector::from_element(a0.nrows(), 1.0);
        (nu.transpose() * (&a0 * &ones))[0] - (nu.transpose() * (&a2 * &ones))[0]
    };
    (drift(a0p, a1p, a2p), drift(a0m, a1m, a2m))
}

/// Stationary probability vector of a generator. A doubly stochastic
/// generator (zero column sums) gets the uniform vector, which stays valid
/// when the generator splits into several closed classes.
pub(crate) fn stationary_vector(gen: &DMatrix<f64>) -> DVector<f64> {
    let n = gen.nrows();
    let scale = gen.amax().max(1.0);
    if gen.column_iter().all(|c| c.sum().abs() <= 1e-12 * scale * n as f64) {
        return DVector::from_element(n, 1.0 / n as f64);
    }
    // Solve nu Q = 0 with the last balance equation replaced by nu 1 = 1.
    let mut sys = gen.transpose();
    for c in 0..n {
        sys[(n - 1, c)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    sys.lu()
        .solve(&rhs)
        .unwrap_or_else(|| DVector::from_element(n, 1.0 / n as f64))
}
