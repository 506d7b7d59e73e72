use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::blocks::{rows, QbdBlocks};
use super::{recurrence_by_blocks, Recurrence};
use crate::error::QbdError;

/// Stopping tolerance on `||1 - G 1||_inf`.
pub const LR_TOLERANCE: f64 = 1e-12;
pub const LR_MAX_ITERATIONS: usize = 60;
/// Residual still accepted when the iteration cap is reached.
pub const LR_CAP_TOLERANCE: f64 = 1e-9;

/// Singular values below this fraction of the largest count as null.
const NULL_REL_TOL: f64 = 1e-9;

/// Matrix-geometric solution `pi_n = alpha0 R^n` of a positive-recurrent QBD.
#[derive(Debug, Clone)]
pub struct QbdSolution {
    pub g: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub alpha0: DVector<f64>,
    pub pi12: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Serialize)]
struct SolutionDump {
    #[serde(rename = "G")]
    g: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    r: Vec<Vec<f64>>,
    alpha0: Vec<f64>,
    pi12: f64,
    iterations: usize,
    residual: f64,
}

impl QbdSolution {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(SolutionDump {
            g: rows(&self.g),
            r: rows(&self.r),
            alpha0: self.alpha0.iter().copied().collect(),
            pi12: self.pi12,
            iterations: self.iterations,
            residual: self.residual,
        })
        .expect("solution dump is plain data")
    }

    /// Largest modulus among the eigenvalues of `R`.
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.r)
    }

    /// Spectral radii of the `R+` and `R-` diagonal blocks.
    pub fn half_spectral_radii(&self) -> (f64, f64) {
        let m = self.r.nrows() / 2;
        (
            spectral_radius(&self.r.view((0, 0), (m, m)).into_owned()),
            spectral_radius(&self.r.view((m, m), (m, m)).into_owned()),
        )
    }

    /// Stationary probability of each level `0..levels`.
    pub fn level_masses(&self, levels: usize) -> Vec<f64> {
        let mut v = self.alpha0.transpose();
        let mut out = Vec::with_capacity(levels);
        for _ in 0..levels {
            out.push(v.sum());
            v = &v * &self.r;
        }
        out
    }

    /// `||A2 + A1 G + A0 G^2||_inf` and `||A0 + R A1 + R^2 A2||_inf`.
    pub fn equation_residuals(&self, blocks: &QbdBlocks) -> (f64, f64) {
        let g_res = &blocks.a2 + &blocks.a1 * &self.g + &blocks.a0 * &self.g * &self.g;
        let r_res = &blocks.a0 + &self.r * &blocks.a1 + &self.r * &self.r * &blocks.a2;
        (inf_norm(&g_res), inf_norm(&r_res))
    }
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub(crate) fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn solve_right(a: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().lu().solve(rhs)
}

/// Computes `G` by logarithmic reduction, then `R`, the boundary vector
/// `alpha0` and the mass above zero.
pub fn solve_qbd(blocks: &QbdBlocks) -> Result<QbdSolution, QbdError> {
    if recurrence_by_blocks(blocks) != Recurrence::PositiveRecurrent {
        let (up, down) = super::level_drifts(blocks);
        let m = blocks.m as f64;
        return Err(QbdError::NotPositiveRecurrent {
            delta_plus: up * m,
            delta_minus: -down * m,
        });
    }
    let n = blocks.dim();
    let id = DMatrix::<f64>::identity(n, n);
    let ones = DVector::from_element(n, 1.0);

    let c = blocks.a1.diagonal().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let p0 = &blocks.a0 / c;
    let p1 = &id + &blocks.a1 / c;
    let p2 = &blocks.a2 / c;

    let singular = |what: &str| QbdError::OracleSolve(format!("singular {what} in logarithmic reduction"));
    let base = &id - &p1;
    let mut down = solve_right(&base, &p2).ok_or_else(|| singular("I - P1"))?;
    let mut up = solve_right(&base, &p0).ok_or_else(|| singular("I - P1"))?;
    let mut g = down.clone();
    let mut t = up.clone();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < LR_MAX_ITERATIONS {
        iterations += 1;
        let u = &down * &up + &up * &down;
        let inv_base = &id - &u;
        down = solve_right(&inv_base, &(&down * &down)).ok_or_else(|| singular("I - U"))?;
        up = solve_right(&inv_base, &(&up * &up)).ok_or_else(|| singular("I - U"))?;
        g += &t * &down;
        t = &t * &up;
        residual = (&ones - &g * &ones).amax();
        if residual <= LR_TOLERANCE || t.amax() <= f64::EPSILON * 1e-4 {
            break;
        }
    }
    if !(residual <= LR_CAP_TOLERANCE) {
        return Err(QbdError::NonConvergent { iterations, residual });
    }

    let u = &blocks.a1 + &blocks.a0 * &g;
    // R (-U) = A0, solved through the transpose.
    let r = solve_right(&(-u).transpose(), &blocks.a0.transpose())
        .ok_or_else(|| singular("U"))?
        .transpose();

    let (alpha0, pi12) = boundary_vector(blocks, &r)?;
    Ok(QbdSolution {
        g,
        r,
        alpha0,
        pi12,
        iterations,
        residual,
    })
}

/// Left null vector of `B + R A2`, scaled so that total mass is one, and
/// the resulting mass on positive phases.
fn boundary_vector(blocks: &QbdBlocks, r: &DMatrix<f64>) -> Result<(DVector<f64>, f64), QbdError> {
    let n = blocks.dim();
    let m = blocks.m;
    let id = DMatrix::<f64>::identity(n, n);
    let boundary = &blocks.b + r * &blocks.a2;
    let svd = boundary.transpose().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let sigma = &svd.singular_values;
    let largest = sigma.max();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sigma[a].total_cmp(&sigma[b]));
    let smallest = sigma[order[0]];
    let second = if n > 1 { sigma[order[1]] } else { f64::INFINITY };
    let null: Vec<usize> = order
        .iter()
        .copied()
        .take_while(|&i| sigma[i] <= NULL_REL_TOL * largest)
        .collect();

    let i_minus_r = (&id - r).lu();
    let total = i_minus_r
        .solve(&DVector::from_element(n, 1.0))
        .ok_or(QbdError::SingularBoundary { smallest, second })?;
    let mut pos = DVector::zeros(n);
    pos.rows_mut(0, m).fill(1.0);
    let positive = i_minus_r
        .solve(&pos)
        .ok_or(QbdError::SingularBoundary { smallest, second })?;

    // With j, k not coprime the lattice splits into gcd(j, k) closed classes
    // that share one value of the positive mass; any null vector with
    // nonzero total mass gives it. Projecting the mass vector onto the null
    // space picks one whose mass is as large as possible.
    if null.is_empty() || null.len() > m {
        return Err(QbdError::SingularBoundary { smallest, second });
    }
    let mut alpha = DVector::zeros(n);
    for &i in &null {
        let v = v_t.row(i).transpose();
        alpha += v.dot(&total) * v;
    }
    let mass = alpha.dot(&total);
    if !(mass.abs() > 1e-12 * alpha.norm() * total.norm()) {
        return Err(QbdError::SingularBoundary { smallest, second });
    }
    alpha /= mass;
    let pi12 = alpha.dot(&positive).clamp(0.0, 1.0);
    Ok((alpha, pi12))
}
