//! Bounded-variable two-phase revised simplex.
//!
//! Phase 1 minimizes the sum of artificial variables from an all-artificial
//! starting basis; phase 2 minimizes the true objective with artificials
//! fixed at zero. The basis inverse is a dense LU refreshed periodically,
//! with product-form eta updates between refreshes. Pricing is Dantzig
//! (most negative reduced cost, lowest index on ties) with a Bland
//! fallback after a run of degenerate pivots, which makes every solve
//! deterministic for identical input.

use super::lu::LuFactors;
use super::{LinearProgram, LpError, LpSolution, LpStatus, Sense};

const REFRESH_INTERVAL: usize = 100;
const DEGENERATE_RUN_LIMIT: usize = 100;
const RATIO_PIVOT_TOL: f64 = 1e-10;
const SINGULAR_TOL: f64 = 1e-12;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Nonbasic free variable pinned at zero.
    FreeZero,
}

struct Tableau {
    nrows: usize,
    nstruct: usize,
    /// structural + slack count; artificials live past this index.
    nreal: usize,
    ncols: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Phase-2 objective per column.
    cost: Vec<f64>,
    rhs: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    xb: Vec<f64>,
    lu: Option<LuFactors>,
    etas: Vec<(usize, Vec<f64>)>,
    feas_tol: f64,
    dual_tol: f64,
    pivots: usize,
    phase: u8,
    degen_run: usize,
}

impl Tableau {
    fn new(lp: &LinearProgram) -> Self {
        let nrows = lp.rows.len();
        let nstruct = lp.ncols;
        let nreal = nstruct + nrows;
        let ncols = nreal + nrows;

        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ncols];
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, v) in &row.coeffs {
                if v != 0.0 {
                    cols[j].push((i, v));
                }
            }
            // One slack per row turns every row into an equality.
            cols[nstruct + i].push((i, 1.0));
        }

        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        for row in &lp.rows {
            match row.sense {
                Sense::Le => {
                    lower.push(0.0);
                    upper.push(f64::INFINITY);
                }
                Sense::Ge => {
                    lower.push(f64::NEG_INFINITY);
                    upper.push(0.0);
                }
                Sense::Eq => {
                    lower.push(0.0);
                    upper.push(0.0);
                }
            }
        }
        // Artificial bounds; tightened to [0,0] when phase 2 starts.
        lower.extend(std::iter::repeat(0.0).take(nrows));
        upper.extend(std::iter::repeat(f64::INFINITY).take(nrows));

        let mut cost = lp.objective.clone();
        cost.extend(std::iter::repeat(0.0).take(2 * nrows));

        let rhs: Vec<f64> = lp.rows.iter().map(|r| r.rhs).collect();
        let b_scale = 1.0 + rhs.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let c_scale = 1.0 + lp.objective.iter().fold(0.0f64, |m, &v| m.max(v.abs()));

        Tableau {
            nrows,
            nstruct,
            nreal,
            ncols,
            cols,
            lower,
            upper,
            cost,
            rhs,
            state: vec![VarState::AtLower; ncols],
            basis: Vec::new(),
            xb: Vec::new(),
            lu: None,
            etas: Vec::new(),
            feas_tol: 1e-9 * b_scale,
            dual_tol: 1e-9 * c_scale,
            pivots: 0,
            phase: 1,
            degen_run: 0,
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::AtLower => self.lower[j],
            VarState::AtUpper => self.upper[j],
            VarState::FreeZero => 0.0,
            VarState::Basic(_) => unreachable!("basic column has no nonbasic value"),
        }
    }

    fn initial_nonbasic_state(&self, j: usize) -> VarState {
        if self.lower[j].is_finite() {
            VarState::AtLower
        } else if self.upper[j].is_finite() {
            VarState::AtUpper
        } else {
            VarState::FreeZero
        }
    }

    /// Residual b - A x_N over the current nonbasic values, for rows only
    /// (artificial columns excluded).
    fn residuals(&self) -> Vec<f64> {
        let mut res = self.rhs.clone();
        for j in 0..self.nreal {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let v = self.nonbasic_value(j);
            if v != 0.0 {
                for &(i, a) in &self.cols[j] {
                    res[i] -= a * v;
                }
            }
        }
        res
    }

    /// Cold start: every real column nonbasic, artificial basis sized to
    /// absorb the residual of each row.
    fn cold_start(&mut self) {
        for j in 0..self.nreal {
            self.state[j] = self.initial_nonbasic_state(j);
        }
        for i in 0..self.nrows {
            let art = self.nreal + i;
            self.lower[art] = 0.0;
            self.upper[art] = f64::INFINITY;
            self.state[art] = VarState::AtLower;
        }
        let res = self.residuals();
        self.basis.clear();
        self.xb.clear();
        for i in 0..self.nrows {
            let art = self.nreal + i;
            let sign = if res[i] >= 0.0 { 1.0 } else { -1.0 };
            self.cols[art] = vec![(i, sign)];
            self.state[art] = VarState::Basic(i);
            self.basis.push(art);
            self.xb.push(res[i].abs());
        }
        self.lu = None;
        self.etas.clear();
        self.phase = 1;
    }

    /// Try to install a caller-provided basis; true on success.
    fn warm_start(&mut self, warm: &[usize]) -> bool {
        if warm.len() != self.nrows {
            return false;
        }
        let mut seen = vec![false; self.ncols];
        for &j in warm {
            if j >= self.nreal || seen[j] {
                return false;
            }
            seen[j] = true;
        }
        for j in 0..self.ncols {
            self.state[j] = if j < self.nreal {
                self.initial_nonbasic_state(j)
            } else {
                // Artificials locked out under a warm start.
                VarState::AtLower
            };
        }
        for i in self.nreal..self.ncols {
            self.lower[i] = 0.0;
            self.upper[i] = 0.0;
        }
        self.basis = warm.to_vec();
        for (pos, &j) in warm.iter().enumerate() {
            self.state[j] = VarState::Basic(pos);
        }
        self.etas.clear();
        if self.refactor().is_err() {
            return false;
        }
        // Accept only a primal-feasible warm basis; otherwise restart cold.
        let ok = (0..self.nrows).all(|i| {
            let j = self.basis[i];
            self.xb[i] >= self.lower[j] - 1e3 * self.feas_tol
                && self.xb[i] <= self.upper[j] + 1e3 * self.feas_tol
        });
        if ok {
            self.phase = 2;
        }
        ok
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let n = self.nrows;
        let mut dense = vec![0.0; n * n];
        for (pos, &j) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[j] {
                dense[i * n + pos] = v;
            }
        }
        let lu = LuFactors::factor(n, dense, SINGULAR_TOL)
            .ok_or(LpError::NumericalFailure { attempts: 1 })?;
        self.lu = Some(lu);
        self.etas.clear();
        // Recompute basic values from scratch for accuracy.
        let mut res = self.residuals();
        self.ftran(&mut res);
        self.xb = res;
        Ok(())
    }

    fn ftran(&self, v: &mut [f64]) {
        self.lu.as_ref().expect("factorized").solve(v);
        for (r, d) in &self.etas {
            let t = v[*r] / d[*r];
            if t != 0.0 {
                for (vi, di) in v.iter_mut().zip(d.iter()) {
                    *vi -= t * di;
                }
            }
            v[*r] = t;
        }
    }

    fn btran(&self, v: &mut [f64]) {
        for (r, d) in self.etas.iter().rev() {
            let mut dot = 0.0;
            for (vi, di) in v.iter().zip(d.iter()) {
                dot += vi * di;
            }
            v[*r] -= (dot - v[*r]) / d[*r];
        }
        self.lu.as_ref().expect("factorized").solve_transpose(v);
    }

    fn duals(&self, phase1: bool) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for (pos, &j) in self.basis.iter().enumerate() {
            y[pos] = if phase1 {
                if j >= self.nreal {
                    1.0
                } else {
                    0.0
                }
            } else {
                self.cost[j]
            };
        }
        self.btran(&mut y);
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64], phase1: bool) -> f64 {
        let cj = if phase1 {
            if j >= self.nreal {
                1.0
            } else {
                0.0
            }
        } else {
            self.cost[j]
        };
        let mut rc = cj;
        for &(i, v) in &self.cols[j] {
            rc -= y[i] * v;
        }
        rc
    }

    /// Pick the entering column; returns (column, direction).
    fn price(&self, y: &[f64], phase1: bool, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.nreal {
            let (eligible_dir, score) = match self.state[j] {
                VarState::Basic(_) => continue,
                VarState::AtLower => {
                    if self.lower[j] == self.upper[j] {
                        continue;
                    }
                    let rc = self.reduced_cost(j, y, phase1);
                    if rc < -self.dual_tol {
                        (1.0, -rc)
                    } else {
                        continue;
                    }
                }
                VarState::AtUpper => {
                    if self.lower[j] == self.upper[j] {
                        continue;
                    }
                    let rc = self.reduced_cost(j, y, phase1);
                    if rc > self.dual_tol {
                        (-1.0, rc)
                    } else {
                        continue;
                    }
                }
                VarState::FreeZero => {
                    let rc = self.reduced_cost(j, y, phase1);
                    if rc.abs() > self.dual_tol {
                        (-rc.signum(), rc.abs())
                    } else {
                        continue;
                    }
                }
            };
            if bland {
                return Some((j, eligible_dir));
            }
            if best.map_or(true, |(_, _, s)| score > s) {
                best = Some((j, eligible_dir, score));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    /// Ratio test. Returns `None` for an unbounded direction, otherwise
    /// (step, blocking basis position or None for a bound flip).
    fn ratio_test(&self, q: usize, dir: f64, d: &[f64]) -> Option<(f64, Option<usize>)> {
        let mut best_t = f64::INFINITY;
        let mut best_pos: Option<usize> = None;
        let mut best_piv = 0.0;
        for (i, &di) in d.iter().enumerate() {
            let sd = dir * di;
            if sd.abs() <= RATIO_PIVOT_TOL {
                continue;
            }
            let p = self.basis[i];
            let t = if sd > 0.0 {
                if self.lower[p].is_finite() {
                    (self.xb[i] - self.lower[p]) / sd
                } else {
                    continue;
                }
            } else if self.upper[p].is_finite() {
                (self.xb[i] - self.upper[p]) / sd
            } else {
                continue;
            };
            let t = t.max(0.0);
            let piv = di.abs();
            if t < best_t - 1e-12 || (t < best_t + 1e-12 && piv > best_piv) {
                best_t = t;
                best_pos = Some(i);
                best_piv = piv;
            }
        }
        // The entering variable may reach its own opposite bound first.
        let own_span = match self.state[q] {
            VarState::AtLower => self.upper[q] - self.lower[q],
            VarState::AtUpper => self.upper[q] - self.lower[q],
            VarState::FreeZero => f64::INFINITY,
            VarState::Basic(_) => unreachable!(),
        };
        if own_span <= best_t + 1e-12 && own_span.is_finite() {
            return Some((own_span, None));
        }
        if best_t.is_infinite() {
            return None;
        }
        Some((best_t, best_pos))
    }

    fn column_dense(&self, j: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.nrows];
        for &(i, a) in &self.cols[j] {
            v[i] = a;
        }
        v
    }

    fn phase1_objective(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.xb)
            .filter(|(&j, _)| j >= self.nreal)
            .map(|(_, &v)| v)
            .sum()
    }

    fn objective(&self) -> f64 {
        let mut obj = 0.0;
        for j in 0..self.nreal {
            match self.state[j] {
                VarState::Basic(_) => {}
                _ => obj += self.cost[j] * self.nonbasic_value(j),
            }
        }
        for (pos, &j) in self.basis.iter().enumerate() {
            obj += self.cost[j] * self.xb[pos];
        }
        obj
    }

    fn enter_phase2(&mut self) {
        for i in 0..self.nrows {
            let art = self.nreal + i;
            self.lower[art] = 0.0;
            self.upper[art] = 0.0;
            if !matches!(self.state[art], VarState::Basic(_)) {
                self.state[art] = VarState::AtLower;
            }
        }
        self.phase = 2;
        self.degen_run = 0;
    }

    /// Run the simplex loop for the current phase. Returns false when the
    /// direction was unbounded (phase 2 only).
    fn iterate(&mut self, phase1: bool) -> Result<bool, LpError> {
        let iter_cap = 200 * (self.nrows + self.nreal) + 20_000;
        let mut bland = false;
        for _ in 0..iter_cap {
            if self.etas.len() >= REFRESH_INTERVAL {
                self.refactor()?;
            }
            if phase1 && self.phase1_objective() <= 0.25 * self.feas_tol {
                return Ok(true);
            }
            let y = self.duals(phase1);
            let Some((q, dir)) = self.price(&y, phase1, bland) else {
                return Ok(true);
            };
            let mut d = self.column_dense(q);
            self.ftran(&mut d);
            let Some((t, blocking)) = self.ratio_test(q, dir, &d) else {
                if phase1 {
                    // Phase-1 objective is bounded below; an unbounded ray
                    // here means the factorization degraded.
                    return Err(LpError::NumericalFailure { attempts: 1 });
                }
                return Ok(false);
            };
            if t <= 1e-11 {
                self.degen_run += 1;
                if self.degen_run > DEGENERATE_RUN_LIMIT {
                    bland = true;
                }
            } else {
                self.degen_run = 0;
                bland = false;
            }
            // Move basic values along the direction.
            if t != 0.0 {
                for (xbi, di) in self.xb.iter_mut().zip(&d) {
                    *xbi -= dir * t * di;
                }
            }
            match blocking {
                None => {
                    // Bound flip of the entering variable.
                    self.state[q] = match self.state[q] {
                        VarState::AtLower => VarState::AtUpper,
                        VarState::AtUpper => VarState::AtLower,
                        s => s,
                    };
                }
                Some(r) => {
                    let leaving = self.basis[r];
                    let entering_value = match self.state[q] {
                        VarState::AtLower => self.lower[q] + dir * t,
                        VarState::AtUpper => self.upper[q] + dir * t,
                        VarState::FreeZero => dir * t,
                        VarState::Basic(_) => unreachable!(),
                    };
                    // Decide which bound the leaving variable hit.
                    let sd = dir * d[r];
                    self.state[leaving] = if sd > 0.0 {
                        VarState::AtLower
                    } else {
                        VarState::AtUpper
                    };
                    self.xb[r] = entering_value;
                    self.basis[r] = q;
                    self.state[q] = VarState::Basic(r);
                    self.etas.push((r, d));
                    self.pivots += 1;
                }
            }
        }
        Err(LpError::NumericalFailure { attempts: 1 })
    }

    fn extract(&mut self, status: LpStatus) -> LpSolution {
        let mut primal = vec![0.0; self.nstruct];
        for (j, p) in primal.iter_mut().enumerate() {
            *p = match self.state[j] {
                VarState::Basic(pos) => self.xb[pos],
                _ => self.nonbasic_value(j),
            };
        }
        let y = if self.lu.is_some() { self.duals(false) } else { vec![0.0; self.nrows] };
        let mut dual_objective: f64 = y.iter().zip(&self.rhs).map(|(yi, bi)| yi * bi).sum();
        for j in 0..self.nreal {
            match self.state[j] {
                VarState::Basic(_) | VarState::FreeZero => {}
                _ => {
                    let v = self.nonbasic_value(j);
                    if v != 0.0 {
                        dual_objective += self.reduced_cost(j, &y, false) * v;
                    }
                }
            }
        }
        LpSolution {
            status,
            primal,
            dual: y,
            objective: self.objective(),
            dual_objective,
            basis: self.basis.clone(),
            pivots: self.pivots,
        }
    }
}

pub fn solve(lp: &LinearProgram, warm_basis: Option<&[usize]>) -> Result<LpSolution, LpError> {
    let mut attempts = 0usize;
    loop {
        attempts += 1;
        match solve_once(lp, if attempts == 1 { warm_basis } else { None }) {
            Ok(sol) => return Ok(sol),
            Err(LpError::BadInput(m)) => return Err(LpError::BadInput(m)),
            Err(LpError::NumericalFailure { .. }) if attempts < 3 => continue,
            Err(LpError::NumericalFailure { .. }) => {
                return Err(LpError::NumericalFailure { attempts })
            }
        }
    }
}

fn solve_once(lp: &LinearProgram, warm_basis: Option<&[usize]>) -> Result<LpSolution, LpError> {
    let mut t = Tableau::new(lp);

    let warmed = warm_basis.map_or(false, |w| t.warm_start(w));
    if !warmed {
        t.cold_start();
        t.refactor()?;
        if !t.iterate(true)? {
            return Err(LpError::NumericalFailure { attempts: 1 });
        }
        // Confirm infeasibility decisions on a fresh factorization.
        t.refactor()?;
        if t.phase1_objective() > 1e-8 * (1.0 + t.rhs.iter().fold(0.0f64, |m, &v| m.max(v.abs())))
        {
            return Ok(t.extract(LpStatus::Infeasible));
        }
        t.enter_phase2();
    }

    // Phase 2 with a confirmation loop: re-verify optimality on a fresh
    // factorization before reporting.
    for _ in 0..4 {
        if !t.iterate(false)? {
            return Ok(t.extract(LpStatus::Unbounded));
        }
        t.refactor()?;
        let y = t.duals(false);
        if t.price(&y, false, false).is_none() {
            return Ok(t.extract(LpStatus::Optimal));
        }
    }
    Err(LpError::NumericalFailure { attempts: 1 })
}
