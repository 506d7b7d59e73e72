use super::banded::BandedMatrix;
use super::FtspRates;
use crate::error::QbdError;

/// Mass allowed in the two outermost levels of the truncated chain.
pub const TAIL_MASS_LIMIT: f64 = 1e-12;

/// `pi12` from the FTSP truncated to levels `0..=levels`, solved directly on
/// the integer lattice. A jump that would leave the outermost level is
/// folded back by one level width, which is what substituting `A1 + A0` for
/// the top diagonal block does.
pub fn truncated_oracle_pi12(rates: &FtspRates, j: u32, k: u32, levels: usize) -> Result<f64, QbdError> {
    let d = rates.drifts(j, k);
    if !d.positive_recurrent() {
        return Err(QbdError::NotPositiveRecurrent {
            delta_plus: d.delta_plus,
            delta_minus: d.delta_minus,
        });
    }
    if levels < 2 {
        return Err(QbdError::TruncationInsufficient { levels, tail_mass: 1.0 });
    }
    let m = i64::from(j.max(k));
    let lo = -((levels as i64 + 1) * m - 1);
    let hi = (levels as i64 + 1) * m;
    let n = (hi - lo + 1) as usize;
    let idx = |s: i64| (s - lo) as usize;

    let jumps = |s: i64| {
        let (lk, lj, mk, mj) = if s > 0 {
            (rates.lam_k_plus, rates.lam_j_plus, rates.mu_k_plus, rates.mu_j_plus)
        } else {
            (rates.lam_k_minus, rates.lam_j_minus, rates.mu_k_minus, rates.mu_j_minus)
        };
        [
            (i64::from(k), lk),
            (i64::from(j), lj),
            (-i64::from(k), mk),
            (-i64::from(j), mj),
        ]
    };

    // Balance equations pi Q = 0 are the rows of Q^T; state `s` receives
    // from `s - step`, so the band is `m` wide on both sides.
    let band = m as usize;
    let mut qt = BandedMatrix::zeros(n, band, band);
    for s in lo..=hi {
        for (step, rate) in jumps(s) {
            if rate == 0.0 {
                continue;
            }
            let mut to = s + step;
            if to > hi {
                to -= m;
            } else if to < lo {
                to += m;
            }
            if to == s {
                continue;
            }
            qt.add(idx(to), idx(s), rate);
            qt.add(idx(s), idx(s), -rate);
        }
    }
    let anchor = idx(0);
    qt.set_row_unit(anchor);
    let mut pi = vec![0.0; n];
    pi[anchor] = 1.0;
    qt.solve(&mut pi).map_err(QbdError::OracleSolve)?;

    let total: f64 = pi.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(QbdError::OracleSolve(format!("unnormalisable solution (sum {total})")));
    }
    let mut positive = 0.0;
    let mut tail = 0.0;
    let edge = (levels as i64 - 1) * m;
    for s in lo..=hi {
        let v = pi[idx(s)] / total;
        if s > 0 {
            positive += v;
        }
        if s > edge || s <= -edge {
            tail += v;
        }
    }
    if tail > TAIL_MASS_LIMIT {
        return Err(QbdError::TruncationInsufficient {
            levels,
            tail_mass: tail,
        });
    }
    Ok(positive)
}
