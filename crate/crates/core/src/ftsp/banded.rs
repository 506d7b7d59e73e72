//! Banded LU with partial pivoting, used by the truncated-chain oracle so
//! that it shares no linear algebra with the matrix-geometric solver.

/// Square matrix with `kl` sub- and `ku` super-diagonals. Storage leaves
/// room for `kl` extra super-diagonals created by row interchanges.
#[derive(Debug, Clone)]
pub(crate) struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub(crate) fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandedMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    fn slot(&self, row: usize, col: usize) -> usize {
        // Column offset relative to the leftmost stored entry of the row.
        row * self.width + (col + self.kl - row)
    }

    fn in_band(&self, row: usize, col: usize) -> bool {
        col + self.kl >= row && col <= row + self.kl + self.ku
    }

    pub(crate) fn add(&mut self, row: usize, col: usize, value: f64) {
        assert!(
            col + self.kl >= row && col <= row + self.ku,
            "entry ({row}, {col}) outside the declared band"
        );
        let s = self.slot(row, col);
        self.data[s] += value;
    }

    pub(crate) fn set_row_unit(&mut self, row: usize) {
        for col in row.saturating_sub(self.kl)..(row + self.ku + 1).min(self.n) {
            let s = self.slot(row, col);
            self.data[s] = 0.0;
        }
        let s = self.slot(row, row);
        self.data[s] = 1.0;
    }

    fn get(&self, row: usize, col: usize) -> f64 {
        if self.in_band(row, col) {
            self.data[self.slot(row, col)]
        } else {
            0.0
        }
    }

    /// Solves `A x = b` in place, destroying the matrix.
    pub(crate) fn solve(mut self, b: &mut [f64]) -> Result<(), String> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let reach = self.kl + self.ku;
        for col in 0..n {
            let last = (col + self.kl).min(n - 1);
            let mut pivot = col;
            let mut best = self.get(col, col).abs();
            for row in col + 1..=last {
                let v = self.get(row, col).abs();
                if v > best {
                    best = v;
                    pivot = row;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(format!("zero pivot in column {col}"));
            }
            let right = (col + reach).min(n - 1);
            if pivot != col {
                for c in col..=right {
                    let (a, p) = (self.slot(col, c), self.slot(pivot, c));
                    self.data.swap(a, p);
                }
                b.swap(col, pivot);
            }
            let diag = self.get(col, col);
            for row in col + 1..=last {
                let s = self.slot(row, col);
                let factor = self.data[s] / diag;
                if factor == 0.0 {
                    continue;
                }
                self.data[s] = 0.0;
                for c in col + 1..=right {
                    let src = self.slot(col, c);
                    let dst = self.slot(row, c);
                    self.data[dst] -= factor * self.data[src];
                }
                b[row] -= factor * b[col];
            }
        }
        for row in (0..n).rev() {
            let right = (row + reach).min(n - 1);
            let mut acc = b[row];
            for c in row + 1..=right {
                acc -= self.get(row, c) * b[c];
            }
            b[row] = acc / self.get(row, row);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal_system_needing_pivots() {
        // [0 1 0; 2 0 1; 0 3 4] x = [1, 4, 11]  ->  x = [1, 1, 2]
        let mut a = BandedMatrix::zeros(3, 1, 1);
        a.add(0, 1, 1.0);
        a.add(1, 0, 2.0);
        a.add(1, 2, 1.0);
        a.add(2, 1, 3.0);
        a.add(2, 2, 4.0);
        let mut b = [1.0, 4.0, 11.0];
        a.solve(&mut b).unwrap();
        for (got, want) in b.iter().zip([1.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn matches_dense_elimination_on_random_band() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (n, kl, ku) = (40, 3, 5);
        let mut a = BandedMatrix::zeros(n, kl, ku);
        let mut dense = vec![vec![0.0; n]; n];
        for r in 0..n {
            for c in r.saturating_sub(kl)..(r + ku + 1).min(n) {
                let v: f64 = rng.random_range(-1.0..1.0);
                a.add(r, c, v);
                dense[r][c] = v;
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b: Vec<f64> = dense
            .iter()
            .map(|row| row.iter().zip(&x).map(|(a, b)| a * b).sum())
            .collect();
        a.solve(&mut b).unwrap();
        for (got, want) in b.iter().zip(&x) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = BandedMatrix::zeros(4, 1, 1);
        let mut b = [0.0; 4];
        assert!(a.solve(&mut b).is_err());
    }
}
