//! Euclidean projection onto a polyhedron via the Goldfarb-Idnani dual
//! active-set method, specialized to an identity Hessian.
//!
//! Solves `min ||x - center||^2` over `{x : Ax = b, l <= x <= u,
//! normal_j . x + offset_j <= level}`. Cut counts in the bundle method
//! stay small, so an active-set method terminates exactly in a handful
//! of updates.

use crate::num::dot;
use thiserror::Error;

/// Bounded affine region `{x : Ax = b, l <= x <= u}`.
#[derive(Clone, Debug)]
pub struct Region {
    pub dim: usize,
    /// Sparse equality rows `(coeffs, rhs)`.
    pub eq_rows: Vec<(Vec<(usize, f64)>, f64)>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Affine constraint `normal . x + offset <= level` of the level set.
#[derive(Clone, Debug)]
pub struct ProjectionCut {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProjectionError {
    #[error("level set is empty")]
    LevelSetEmpty,
    #[error("projection failed numerically: {0}")]
    Numerical(&'static str),
}

/// Project `center` onto the region intersected with the level set.
pub fn solve_level_projection(
    center: &[f64],
    cuts: &[ProjectionCut],
    level: f64,
    region: &Region,
) -> Result<Vec<f64>, ProjectionError> {
    let n = region.dim;
    assert_eq!(center.len(), n);

    // Assemble inequality constraints in `normal . x >= rhs` form:
    // bounds first, then cuts.
    let mut ineq: Vec<(Vec<f64>, f64)> = Vec::new();
    for j in 0..n {
        if region.lower[j].is_finite() {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            ineq.push((a, region.lower[j]));
        }
        if region.upper[j].is_finite() {
            let mut a = vec![0.0; n];
            a[j] = -1.0;
            ineq.push((a, -region.upper[j]));
        }
    }
    for cut in cuts {
        assert_eq!(cut.normal.len(), n);
        let a: Vec<f64> = cut.normal.iter().map(|v| -v).collect();
        ineq.push((a, cut.offset - level));
    }

    let mut st = GiState::new(n, center);

    // Activate the equality rows first; they are never dropped.
    for (coeffs, rhs) in &region.eq_rows {
        let mut a = vec![0.0; n];
        for &(j, v) in coeffs {
            a[j] += v;
        }
        let s = dot(&a, &st.x) - rhs;
        // Orient so the violation is nonpositive, as the add step expects.
        let (a, rhs) = if s > 0.0 {
            (a.iter().map(|v| -v).collect::<Vec<_>>(), -rhs)
        } else {
            (a, *rhs)
        };
        st.add_equality(&a, rhs)?;
    }
    let n_eq = st.active.len();

    let max_steps = 100 + 20 * (n + ineq.len());
    let mut steps = 0usize;
    loop {
        steps += 1;
        if steps > max_steps {
            return Err(ProjectionError::Numerical("iteration cap exceeded"));
        }
        // Most violated inactive inequality.
        let mut chosen: Option<(usize, f64)> = None;
        for (k, (a, rhs)) in ineq.iter().enumerate() {
            if st.active.iter().any(|&c| c == Constraint::Ineq(k)) {
                continue;
            }
            let s = dot(a, &st.x) - rhs;
            let tol = 1e-10 * (1.0 + rhs.abs());
            if s < -tol && chosen.map_or(true, |(_, sb)| s < sb) {
                chosen = Some((k, s));
            }
        }
        let Some((p, mut s_p)) = chosen else {
            return Ok(st.x);
        };
        let a_p = ineq[p].0.clone();
        let mut u_plus = 0.0;

        loop {
            steps += 1;
            if steps > max_steps {
                return Err(ProjectionError::Numerical("iteration cap exceeded"));
            }
            let (z, r) = st.directions(&a_p);
            let zn = dot(&z, &a_p);

            // Blocking constraint among active inequalities.
            let mut t1 = f64::INFINITY;
            let mut block: Option<usize> = None;
            for (idx, c) in st.active.iter().enumerate() {
                if idx < n_eq || matches!(c, Constraint::Eq) {
                    continue;
                }
                if r[idx] > 1e-12 {
                    let ratio = st.multipliers[idx] / r[idx];
                    if ratio < t1 {
                        t1 = ratio;
                        block = Some(idx);
                    }
                }
            }
            let t2 = if zn > 1e-12 { -s_p / zn } else { f64::INFINITY };
            let t = t1.min(t2);
            if t.is_infinite() {
                return Err(ProjectionError::LevelSetEmpty);
            }

            if t2.is_infinite() {
                // Dual step only.
                for (um, ri) in st.multipliers.iter_mut().zip(&r) {
                    *um -= t * ri;
                }
                u_plus += t;
                st.drop_constraint(block.expect("finite t1 implies a blocker"));
                continue;
            }

            for (xi, zi) in st.x.iter_mut().zip(&z) {
                *xi += t * zi;
            }
            for (um, ri) in st.multipliers.iter_mut().zip(&r) {
                *um -= t * ri;
            }
            u_plus += t;
            s_p += t * zn;

            if (t - t2).abs() <= 1e-14 * (1.0 + t2.abs()) {
                st.add_active(Constraint::Ineq(p), &a_p, u_plus)?;
                break;
            }
            st.drop_constraint(block.expect("partial step has a blocker"));
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Constraint {
    Eq,
    Ineq(usize),
}

/// Active-set state: point, multipliers and a QR factorization of the
/// active constraint normals (Q dense n x n, R upper triangular).
struct GiState {
    n: usize,
    x: Vec<f64>,
    active: Vec<Constraint>,
    multipliers: Vec<f64>,
    /// Column-major orthogonal Q.
    q: Vec<f64>,
    /// R columns; column k has k+1 entries.
    r_cols: Vec<Vec<f64>>,
}

impl GiState {
    fn new(n: usize, center: &[f64]) -> Self {
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            q[i * n + i] = 1.0;
        }
        GiState {
            n,
            x: center.to_vec(),
            active: Vec::new(),
            multipliers: Vec::new(),
            q,
            r_cols: Vec::new(),
        }
    }

    fn qt_mul(&self, a: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n).map(|k| dot(&self.q[k * n..(k + 1) * n], a)).collect()
    }

    /// Step directions for a candidate normal: `z` in primal space and
    /// `r` in the space of active multipliers.
    fn directions(&self, a: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let q_count = self.active.len();
        let w = self.qt_mul(a);
        let mut z = vec![0.0; n];
        for k in q_count..n {
            let wk = w[k];
            if wk != 0.0 {
                let col = &self.q[k * n..(k + 1) * n];
                for (zi, ci) in z.iter_mut().zip(col) {
                    *zi += wk * ci;
                }
            }
        }
        // Back-substitute R r = w[0..q].
        let mut r = w[..q_count].to_vec();
        for k in (0..q_count).rev() {
            let mut s = r[k];
            for j in (k + 1)..q_count {
                s -= self.r_cols[j][k] * r[j];
            }
            r[k] = s / self.r_cols[k][k];
        }
        (z, r)
    }

    fn add_equality(&mut self, a: &[f64], rhs: f64) -> Result<(), ProjectionError> {
        let s = dot(a, &self.x) - rhs;
        let (z, r) = self.directions(a);
        let zn = dot(&z, a);
        if zn <= 1e-12 {
            if s.abs() <= 1e-8 * (1.0 + rhs.abs()) {
                return Ok(()); // redundant equality
            }
            return Err(ProjectionError::Numerical("inconsistent equality rows"));
        }
        let t = -s / zn;
        for (xi, zi) in self.x.iter_mut().zip(&z) {
            *xi += t * zi;
        }
        for (um, ri) in self.multipliers.iter_mut().zip(&r) {
            *um -= t * ri;
        }
        self.add_active(Constraint::Eq, a, t)
    }

    fn add_active(
        &mut self,
        c: Constraint,
        a: &[f64],
        multiplier: f64,
    ) -> Result<(), ProjectionError> {
        let n = self.n;
        let q_count = self.active.len();
        if q_count >= n {
            return Err(ProjectionError::Numerical("active set overflow"));
        }
        let mut w = self.qt_mul(a);
        // Rotate components q_count+1..n into w[q_count].
        for i in ((q_count + 1)..n).rev() {
            let (c_rot, s_rot, nrm) = givens(w[i - 1], w[i]);
            if s_rot != 0.0 {
                w[i - 1] = nrm;
                w[i] = 0.0;
                self.rotate_q(i - 1, i, c_rot, s_rot);
            }
        }
        if w[q_count].abs() <= 1e-12 {
            return Err(ProjectionError::Numerical("dependent active constraint"));
        }
        self.r_cols.push(w[..=q_count].to_vec());
        self.active.push(c);
        self.multipliers.push(multiplier);
        Ok(())
    }

    fn drop_constraint(&mut self, idx: usize) {
        let q_count = self.active.len();
        self.active.remove(idx);
        self.multipliers.remove(idx);
        self.r_cols.remove(idx);
        // Columns idx.. now have one extra subdiagonal entry; restore
        // triangularity with Givens rotations.
        for j in idx..(q_count - 1) {
            let col_len = self.r_cols[j].len();
            if col_len > j + 1 {
                let a = self.r_cols[j][j];
                let b = self.r_cols[j][j + 1];
                let (c_rot, s_rot, nrm) = givens(a, b);
                self.r_cols[j][j] = nrm;
                self.r_cols[j].truncate(j + 1);
                for col in self.r_cols[(j + 1)..].iter_mut() {
                    let x = col[j];
                    let y = col[j + 1];
                    col[j] = c_rot * x + s_rot * y;
                    col[j + 1] = -s_rot * x + c_rot * y;
                }
                self.rotate_q(j, j + 1, c_rot, s_rot);
            } else {
                self.r_cols[j].truncate(j + 1);
            }
        }
        if let Some(last) = self.r_cols.last_mut() {
            last.truncate(q_count - 1);
        }
    }

    /// Apply a Givens rotation to columns i, j of Q (acting on the right).
    fn rotate_q(&mut self, i: usize, j: usize, c: f64, s: f64) {
        let n = self.n;
        for row in 0..n {
            let qi = self.q[i * n + row];
            let qj = self.q[j * n + row];
            self.q[i * n + row] = c * qi + s * qj;
            self.q[j * n + row] = -s * qi + c * qj;
        }
    }
}

fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    if b == 0.0 {
        (1.0, 0.0, a)
    } else {
        let nrm = a.hypot(b);
        (a / nrm, b / nrm, nrm)
    }
}
