//! Dense LU factorization with partial pivoting, used for the simplex
//! basis matrix. Basis dimensions at desk scale stay in the low
//! thousands, where a dense factorization is simpler and plenty fast.

/// Packed LU factors of a square matrix with row permutation.
pub struct LuFactors {
    n: usize,
    /// Row-major packed L (unit diagonal, below) and U (on/above).
    lu: Vec<f64>,
    /// Row permutation: factored row i corresponds to original row perm[i].
    perm: Vec<usize>,
}

impl LuFactors {
    /// Factor a dense row-major `n x n` matrix. Returns `None` when the
    /// matrix is numerically singular.
    pub fn factor(n: usize, mut a: Vec<f64>, singular_tol: f64) -> Option<LuFactors> {
        debug_assert_eq!(a.len(), n * n);
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut pivot_row = k;
            let mut pivot_val = a[k * n + k].abs();
            for i in (k + 1)..n {
                let v = a[i * n + k].abs();
                if v > pivot_val {
                    pivot_val = v;
                    pivot_row = i;
                }
            }
            if pivot_val <= singular_tol {
                return None;
            }
            if pivot_row != k {
                perm.swap(k, pivot_row);
                for j in 0..n {
                    a.swap(k * n + j, pivot_row * n + j);
                }
            }
            let diag = a[k * n + k];
            for i in (k + 1)..n {
                let factor = a[i * n + k] / diag;
                a[i * n + k] = factor;
                if factor != 0.0 {
                    let (upper, lower) = a.split_at_mut(i * n);
                    let row_k = &upper[k * n + k + 1..k * n + n];
                    let row_i = &mut lower[k + 1..n];
                    for (ri, rk) in row_i.iter_mut().zip(row_k) {
                        *ri -= factor * rk;
                    }
                }
            }
        }
        Some(LuFactors { n, lu: a, perm })
    }

    /// Solve `A x = v` in place.
    pub fn solve(&self, v: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(v.len(), n);
        // Apply permutation.
        let mut w = vec![0.0; n];
        for i in 0..n {
            w[i] = v[self.perm[i]];
        }
        // Forward: L y = P v.
        for i in 1..n {
            let row = &self.lu[i * n..i * n + i];
            let mut s = w[i];
            for (j, &lij) in row.iter().enumerate() {
                s -= lij * w[j];
            }
            w[i] = s;
        }
        // Backward: U x = y.
        for i in (0..n).rev() {
            let row = &self.lu[i * n..(i + 1) * n];
            let mut s = w[i];
            for j in (i + 1)..n {
                s -= row[j] * w[j];
            }
            w[i] = s / row[i];
        }
        v.copy_from_slice(&w);
    }

    /// Solve `A^T x = v` in place.
    pub fn solve_transpose(&self, v: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(v.len(), n);
        let mut w = v.to_vec();
        // U^T y = v (forward).
        for i in 0..n {
            let mut s = w[i];
            for j in 0..i {
                s -= self.lu[j * n + i] * w[j];
            }
            w[i] = s / self.lu[i * n + i];
        }
        // L^T z = y (backward).
        for i in (0..n).rev() {
            let mut s = w[i];
            for j in (i + 1)..n {
                s -= self.lu[j * n + i] * w[j];
            }
            w[i] = s;
        }
        // Undo permutation: x[perm[i]] = z[i].
        for i in 0..n {
            v[self.perm[i]] = w[i];
        }
    }
}
