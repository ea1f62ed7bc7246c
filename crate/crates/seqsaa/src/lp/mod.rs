//! Self-contained linear programming kernel.
//!
//! A bounded-variable two-phase revised simplex (dense LU basis with
//! product-form updates) plus a dual active-set projection solver for the
//! level-set quadratic programs of the bundle method. Solves are
//! deterministic: fixed Dantzig pricing with a Bland fallback after a run
//! of degenerate pivots, fixed tie-breaking in the ratio test.

mod lu;
mod projection;
mod simplex;

pub use projection::{solve_level_projection, ProjectionCut, ProjectionError, Region};

use thiserror::Error;

/// Row sense of a linear constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// Solve outcome classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("numerical failure in simplex after {attempts} refactorization attempts")]
    NumericalFailure { attempts: usize },
    #[error("malformed linear program: {0}")]
    BadInput(String),
}

/// One linear constraint row in sparse form.
#[derive(Clone, Debug)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A linear program `min c^T x` subject to sparse rows and variable bounds.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub ncols: usize,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// New LP with `ncols` variables, zero objective, bounds `[0, +inf)`.
    pub fn new(ncols: usize) -> Self {
        LinearProgram {
            ncols,
            objective: vec![0.0; ncols],
            rows: Vec::new(),
            lower: vec![0.0; ncols],
            upper: vec![f64::INFINITY; ncols],
        }
    }

    pub fn set_objective(&mut self, col: usize, coeff: f64) {
        self.objective[col] = coeff;
    }

    pub fn set_bounds(&mut self, col: usize, lower: f64, upper: f64) {
        self.lower[col] = lower;
        self.upper[col] = upper;
    }

    /// Add a constraint row; duplicate column entries are summed.
    pub fn add_row(&mut self, sense: Sense, rhs: f64, coeffs: &[(usize, f64)]) -> usize {
        let mut merged: Vec<(usize, f64)> = coeffs.to_vec();
        merged.sort_by_key(|&(j, _)| j);
        merged.dedup_by(|later, earlier| {
            if later.0 == earlier.0 {
                earlier.1 += later.1;
                true
            } else {
                false
            }
        });
        merged.retain(|&(_, v)| v != 0.0);
        self.rows.push(Row { coeffs: merged, sense, rhs });
        self.rows.len() - 1
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    /// Count of structural nonzeros.
    pub fn nonzeros(&self) -> usize {
        self.rows.iter().map(|r| r.coeffs.len()).sum()
    }

    fn validate(&self) -> Result<(), LpError> {
        if self.objective.len() != self.ncols
            || self.lower.len() != self.ncols
            || self.upper.len() != self.ncols
        {
            return Err(LpError::BadInput("dimension mismatch".into()));
        }
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l > u {
                return Err(LpError::BadInput(format!("bounds crossed on column {j}")));
            }
            if l.is_nan() || u.is_nan() {
                return Err(LpError::BadInput(format!("NaN bound on column {j}")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.rhs.is_nan() {
                return Err(LpError::BadInput(format!("NaN rhs on row {i}")));
            }
            for &(col, v) in &row.coeffs {
                if col >= self.ncols {
                    return Err(LpError::BadInput(format!("column {col} out of range in row {i}")));
                }
                if v.is_nan() || v.is_infinite() {
                    return Err(LpError::BadInput(format!("bad coefficient in row {i}")));
                }
            }
        }
        Ok(())
    }

    /// Solve with an optional warm basis (the basic column per row from a
    /// previous solve of a structurally identical LP).
    pub fn solve(&self, warm_basis: Option<&[usize]>) -> Result<LpSolution, LpError> {
        self.validate()?;
        simplex::solve(self, warm_basis)
    }

    /// Plain-text dump for debugging failed solves.
    pub fn dump(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let _ = writeln!(s, "lp: {} cols, {} rows", self.ncols, self.rows.len());
        let _ = writeln!(s, "min {:?}", self.objective);
        for row in &self.rows {
            let sym = match row.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(s, "  {:?} {} {}", row.coeffs, sym, row.rhs);
        }
        let _ = writeln!(s, "lb {:?}", self.lower);
        let _ = writeln!(s, "ub {:?}", self.upper);
        s
    }
}

/// Result of a simplex solve.
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values, one per column. Meaningful when optimal.
    pub primal: Vec<f64>,
    /// Row duals, one per row (equality convention: `>=` rows have
    /// nonnegative duals in a minimization, `<=` rows nonpositive).
    pub dual: Vec<f64>,
    pub objective: f64,
    /// Dual objective via bound multipliers; equals `objective` at an
    /// optimum up to tolerance.
    pub dual_objective: f64,
    /// Basic column per row, reusable as a warm basis.
    pub basis: Vec<usize>,
    /// Simplex pivot count (both phases), for work accounting tests.
    pub pivots: usize,
}
