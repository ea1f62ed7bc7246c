//! Two-stage stochastic LP data model: instances with fixed recourse, a
//! stochastic right-hand side / technology matrix, second-stage
//! evaluation with duals, and the deterministic-equivalent construction
//! used as a ground-truth oracle.

pub mod named;

use crate::lp::{LinearProgram, LpError, LpStatus, Sense};
use crate::num::dot;
use crate::sampling::ScenarioModel;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

/// Identifies which sampler stream produced a scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SamplerKind {
    Iid,
    Antithetic,
    Lhs,
    /// Enumerated member of a finite support (ground-truth paths).
    Support,
}

/// Stream position of one realization: sampler, outer iteration, draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioId {
    pub sampler: SamplerKind,
    pub outer: u64,
    pub draw: u64,
}

/// One realization xi: right-hand side `h` and the stochastic part of the
/// technology matrix. `W` and `d` are scenario-independent (fixed
/// recourse).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub h: Vec<f64>,
    /// Stochastic technology entries `(row, col, value)` added on top of
    /// the instance's deterministic technology matrix.
    pub t_delta: Vec<(usize, usize, f64)>,
    pub id: ScenarioId,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("second-stage subproblem infeasible at scenario {outer}/{draw}: relatively complete recourse violated")]
    Infeasible { outer: u64, draw: u64 },
    #[error("second-stage subproblem unbounded at scenario {outer}/{draw}: recourse value -inf")]
    Unbounded { outer: u64, draw: u64 },
    #[error("extensive form too large: {nonzeros} nonzeros over cap {cap}")]
    TooLarge { nonzeros: usize, cap: usize },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// First-stage data, fixed recourse second stage, and the stochastic
/// model generating `(h, T)` realizations.
#[derive(Clone, Debug)]
pub struct TwoStageInstance {
    pub name: String,
    pub n1: usize,
    pub r1: usize,
    pub a: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub x_lower: Vec<f64>,
    pub x_upper: Vec<f64>,
    pub n2: usize,
    pub r2: usize,
    pub w: Vec<(usize, usize, f64)>,
    pub d: Vec<f64>,
    pub model: ScenarioModel,
    // Derived row-major views, built once.
    a_rows: Vec<Vec<(usize, f64)>>,
    w_rows: Vec<Vec<(usize, f64)>>,
}

impl TwoStageInstance {
    /// Build and validate an instance. Checks dimensions, the stochastic
    /// model, nonemptiness of the first-stage region and its compactness
    /// (two LP solves).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        n1: usize,
        r1: usize,
        a: Vec<(usize, usize, f64)>,
        b: Vec<f64>,
        c: Vec<f64>,
        x_lower: Vec<f64>,
        x_upper: Vec<f64>,
        n2: usize,
        r2: usize,
        w: Vec<(usize, usize, f64)>,
        d: Vec<f64>,
        model: ScenarioModel,
    ) -> Result<Self, ModelError> {
        let bad = |m: String| Err(ModelError::InvalidInstance(m));
        if b.len() != r1 || c.len() != n1 || x_lower.len() != n1 || x_upper.len() != n1 {
            return bad("first-stage dimension mismatch".into());
        }
        if d.len() != n2 {
            return bad("second-stage cost dimension mismatch".into());
        }
        for &(i, j, _) in &a {
            if i >= r1 || j >= n1 {
                return bad(format!("A entry ({i},{j}) out of range"));
            }
        }
        for &(i, j, _) in &w {
            if i >= r2 || j >= n2 {
                return bad(format!("W entry ({i},{j}) out of range"));
            }
        }
        for (j, (&l, &u)) in x_lower.iter().zip(&x_upper).enumerate() {
            if !(l <= u) {
                return bad(format!("crossed bounds on x[{j}]"));
            }
            if !l.is_finite() || !u.is_finite() {
                return bad(format!(
                    "x[{j}] bounds must be finite so the first-stage region is compact"
                ));
            }
        }
        model
            .validate(r2, n1)
            .map_err(|e| ModelError::InvalidInstance(format!("stochastic model: {e}")))?;

        let a_rows = to_rows(r1, &a);
        let w_rows = to_rows(r2, &w);
        let inst = TwoStageInstance {
            name: name.into(),
            n1,
            r1,
            a,
            b,
            c,
            x_lower,
            x_upper,
            n2,
            r2,
            w,
            d,
            model,
            a_rows,
            w_rows,
        };
        inst.check_first_stage_region()?;
        Ok(inst)
    }

    fn check_first_stage_region(&self) -> Result<(), ModelError> {
        // Feasibility: min 0 over X must be optimal.
        let lp = self.first_stage_lp(&vec![0.0; self.n1]);
        let sol = lp.solve(None)?;
        if sol.status != LpStatus::Optimal {
            return Err(ModelError::InvalidInstance(
                "first-stage region is empty".into(),
            ));
        }
        // Boundedness: max sum(x) finite. With finite bounds this holds;
        // the solve also certifies consistency of the row data.
        let lp = self.first_stage_lp(&vec![-1.0; self.n1]);
        let sol = lp.solve(None)?;
        if sol.status != LpStatus::Optimal {
            return Err(ModelError::InvalidInstance(
                "first-stage region is unbounded".into(),
            ));
        }
        Ok(())
    }

    /// LP over X with the given objective.
    pub fn first_stage_lp(&self, objective: &[f64]) -> LinearProgram {
        let mut lp = LinearProgram::new(self.n1);
        for (j, &cj) in objective.iter().enumerate() {
            lp.set_objective(j, cj);
            lp.set_bounds(j, self.x_lower[j], self.x_upper[j]);
        }
        for (i, row) in self.a_rows.iter().enumerate() {
            lp.add_row(Sense::Eq, self.b[i], row);
        }
        lp
    }

    pub fn region(&self) -> crate::lp::Region {
        crate::lp::Region {
            dim: self.n1,
            eq_rows: self
                .a_rows
                .iter()
                .zip(&self.b)
                .map(|(r, &rhs)| (r.clone(), rhs))
                .collect(),
            lower: self.x_lower.clone(),
            upper: self.x_upper.clone(),
        }
    }

    /// Magnitude of first-stage costs, used to scale defaults.
    pub fn cost_scale(&self) -> f64 {
        1.0 + self.c.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// `x` feasible for X within tolerance.
    pub fn is_first_stage_feasible(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.n1 {
            return false;
        }
        for j in 0..self.n1 {
            if x[j] < self.x_lower[j] - tol || x[j] > self.x_upper[j] + tol {
                return false;
            }
        }
        self.a_rows.iter().zip(&self.b).all(|(row, &rhs)| {
            (row.iter().map(|&(j, v)| v * x[j]).sum::<f64>() - rhs).abs() <= tol * (1.0 + rhs.abs())
        })
    }

    /// Deterministic part of `T x` (one entry per second-stage row).
    pub fn base_tx(&self, x: &[f64]) -> Vec<f64> {
        let mut tx = vec![0.0; self.r2];
        for &(i, j, v) in self.model.t_base() {
            tx[i] += v * x[j];
        }
        tx
    }

    /// Right-hand side `h - T x` of the subproblem for one scenario,
    /// given the precomputed deterministic part of `T x`.
    pub fn subproblem_rhs(&self, x: &[f64], base_tx: &[f64], scenario: &Scenario) -> Vec<f64> {
        let mut rhs: Vec<f64> = scenario.h.iter().zip(base_tx).map(|(h, tx)| h - tx).collect();
        for &(i, j, v) in &scenario.t_delta {
            rhs[i] -= v * x[j];
        }
        rhs
    }

    /// `T(xi)^T lambda` for one scenario (used for cut gradients).
    pub fn t_transpose_lambda(&self, scenario: &Scenario, lambda: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n1];
        for &(i, j, v) in self.model.t_base() {
            out[j] += v * lambda[i];
        }
        for &(i, j, v) in &scenario.t_delta {
            out[j] += v * lambda[i];
        }
        out
    }

    pub fn w_rows(&self) -> &[Vec<(usize, f64)>] {
        &self.w_rows
    }

    /// Content hash of the instance data (ground-truth cache key).
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let dto = InstanceJson::from_instance(self);
        let bytes = serde_json::to_vec(&dto).expect("instance serializes");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let out = hasher.finalize();
        out.iter().take(16).map(|b| format!("{b:02x}")).collect()
    }
}

/// Row-major view with duplicate (row, col) entries summed.
fn to_rows(nrows: usize, triplets: &[(usize, usize, f64)]) -> Vec<Vec<(usize, f64)>> {
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
    for &(i, j, v) in triplets {
        rows[i].push((j, v));
    }
    for row in rows.iter_mut() {
        row.sort_by_key(|&(j, _)| j);
        row.dedup_by(|later, earlier| {
            if later.0 == earlier.0 {
                earlier.1 += later.1;
                true
            } else {
                false
            }
        });
        row.retain(|&(_, v)| v != 0.0);
    }
    rows
}

/// Optimal value and dual of one second-stage subproblem.
#[derive(Clone, Debug)]
pub struct SecondStageResult {
    pub value: f64,
    pub dual: Vec<f64>,
}

/// Solve `min { d^T y : W y >= h - T x, y >= 0 }` for one scenario.
///
/// Infeasibility means relatively complete recourse is violated and
/// aborts the run; unboundedness means the recourse value is -inf.
pub fn evaluate_second_stage(
    instance: &TwoStageInstance,
    x: &[f64],
    scenario: &Scenario,
) -> Result<SecondStageResult, ModelError> {
    let base_tx = instance.base_tx(x);
    evaluate_second_stage_with_base(instance, x, &base_tx, scenario)
}

/// Fast path taking the precomputed deterministic part of `T x`.
pub fn evaluate_second_stage_with_base(
    instance: &TwoStageInstance,
    x: &[f64],
    base_tx: &[f64],
    scenario: &Scenario,
) -> Result<SecondStageResult, ModelError> {
    let rhs = instance.subproblem_rhs(x, base_tx, scenario);
    let mut lp = LinearProgram::new(instance.n2);
    for (j, &dj) in instance.d.iter().enumerate() {
        lp.set_objective(j, dj);
    }
    for (i, row) in instance.w_rows.iter().enumerate() {
        lp.add_row(Sense::Ge, rhs[i], row);
    }
    let sol = lp.solve(None)?;
    match sol.status {
        LpStatus::Optimal => Ok(SecondStageResult { value: sol.objective, dual: sol.dual }),
        LpStatus::Infeasible => Err(ModelError::Infeasible {
            outer: scenario.id.outer,
            draw: scenario.id.draw,
        }),
        LpStatus::Unbounded => Err(ModelError::Unbounded {
            outer: scenario.id.outer,
            draw: scenario.id.draw,
        }),
    }
}

/// Sample mean and variance (divisor `m`, not `m - 1`) of the recourse
/// values over an ordered scenario list. Reduction is in fixed scenario
/// order regardless of evaluation parallelism.
pub fn sample_average(
    instance: &TwoStageInstance,
    x: &[f64],
    scenarios: &[Scenario],
) -> Result<(f64, f64), ModelError> {
    assert!(!scenarios.is_empty(), "sample_average needs at least one scenario");
    let values = evaluate_all(instance, x, scenarios)?;
    Ok(mean_and_variance(&values))
}

/// Evaluate every scenario at `x`, in parallel, returning values in
/// scenario order.
pub fn evaluate_all(
    instance: &TwoStageInstance,
    x: &[f64],
    scenarios: &[Scenario],
) -> Result<Vec<f64>, ModelError> {
    Ok(evaluate_all_with_duals(instance, x, scenarios)?
        .into_iter()
        .map(|r| r.value)
        .collect())
}

/// Evaluate every scenario at `x` keeping duals, in fixed order.
pub fn evaluate_all_with_duals(
    instance: &TwoStageInstance,
    x: &[f64],
    scenarios: &[Scenario],
) -> Result<Vec<SecondStageResult>, ModelError> {
    use rayon::prelude::*;
    let base_tx = instance.base_tx(x);
    let results: Vec<Result<SecondStageResult, ModelError>> = scenarios
        .par_iter()
        .map(|sc| evaluate_second_stage_with_base(instance, x, &base_tx, sc))
        .collect();
    // Sequential harvest keeps error choice and ordering deterministic.
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        out.push(r?);
    }
    Ok(out)
}

/// Mean and divisor-m variance in fixed input order.
pub fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
    (mean, var)
}

/// An instance paired with an ordered scenario list and uniform weights.
#[derive(Clone)]
pub struct SamplePathProblem {
    pub instance: Arc<TwoStageInstance>,
    pub scenarios: Vec<Scenario>,
}

impl SamplePathProblem {
    pub fn new(instance: Arc<TwoStageInstance>, scenarios: Vec<Scenario>) -> Self {
        assert!(!scenarios.is_empty(), "sample-path problem needs m >= 1");
        SamplePathProblem { instance, scenarios }
    }

    pub fn m(&self) -> usize {
        self.scenarios.len()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.scenarios.len() as f64
    }

    /// Full objective `c^T x + Q_m(x)` plus divisor-m variance at `x`.
    pub fn objective_at(&self, x: &[f64]) -> Result<(f64, f64), ModelError> {
        let (mean, var) = sample_average(&self.instance, x, &self.scenarios)?;
        Ok((dot(&self.instance.c, x) + mean, var))
    }
}

/// Default nonzero cap for the deterministic equivalent.
pub const EXTENSIVE_FORM_NONZERO_CAP: usize = 1_000_000;

/// Build the deterministic equivalent of a uniformly weighted scenario
/// list: `min c^T x + (1/m) sum d^T y_i` subject to `Ax = b`,
/// `T_i x + W y_i >= h_i`, bounds on `x`, `y_i >= 0`.
pub fn build_extensive_form(
    instance: &TwoStageInstance,
    scenarios: &[Scenario],
    nonzero_cap: usize,
) -> Result<LinearProgram, ModelError> {
    let m = scenarios.len();
    let weights = vec![1.0 / m as f64; m];
    build_weighted_extensive_form(instance, scenarios, &weights, nonzero_cap)
}

/// Weighted deterministic equivalent (ground-truth path for finite
/// supports with general probabilities).
pub fn build_weighted_extensive_form(
    instance: &TwoStageInstance,
    scenarios: &[Scenario],
    weights: &[f64],
    nonzero_cap: usize,
) -> Result<LinearProgram, ModelError> {
    assert_eq!(scenarios.len(), weights.len());
    assert!(!scenarios.is_empty());
    let m = scenarios.len();
    let t_base_nnz = instance.model.t_base().len();
    let w_nnz = instance.w.len();
    let estimated = instance.a.len()
        + m * (w_nnz + t_base_nnz)
        + scenarios.iter().map(|s| s.t_delta.len()).sum::<usize>();
    if estimated > nonzero_cap {
        return Err(ModelError::TooLarge { nonzeros: estimated, cap: nonzero_cap });
    }

    let ncols = instance.n1 + m * instance.n2;
    let mut lp = LinearProgram::new(ncols);
    for j in 0..instance.n1 {
        lp.set_objective(j, instance.c[j]);
        lp.set_bounds(j, instance.x_lower[j], instance.x_upper[j]);
    }
    for (k, wk) in weights.iter().enumerate() {
        let off = instance.n1 + k * instance.n2;
        for j in 0..instance.n2 {
            lp.set_objective(off + j, wk * instance.d[j]);
        }
    }
    for (i, row) in instance.a_rows.iter().enumerate() {
        lp.add_row(Sense::Eq, instance.b[i], row);
    }
    for (k, sc) in scenarios.iter().enumerate() {
        let off = instance.n1 + k * instance.n2;
        // T(xi) x + W y_k >= h(xi), assembled row by row.
        let mut trows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); instance.r2];
        for &(i, j, v) in instance.model.t_base() {
            trows[i].push((j, v));
        }
        for &(i, j, v) in &sc.t_delta {
            trows[i].push((j, v));
        }
        for i in 0..instance.r2 {
            let mut coeffs = trows[i].clone();
            for &(j, v) in &instance.w_rows[i] {
                coeffs.push((off + j, v));
            }
            lp.add_row(Sense::Ge, sc.h[i], &coeffs);
        }
    }
    Ok(lp)
}

/// JSON schema for instances:
/// `{n1, r1, A, b, c, x_upper, n2, r2, W, d, model, ...}` with matrices
/// as `[row, col, value]` triplets.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceJson {
    #[serde(default)]
    pub name: Option<String>,
    pub n1: usize,
    pub r1: usize,
    #[serde(rename = "A")]
    pub a: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    #[serde(default)]
    pub x_lower: Option<Vec<f64>>,
    pub x_upper: Vec<f64>,
    pub n2: usize,
    pub r2: usize,
    #[serde(rename = "W")]
    pub w: Vec<(usize, usize, f64)>,
    pub d: Vec<f64>,
    pub model: ScenarioModel,
}

impl InstanceJson {
    pub fn from_instance(inst: &TwoStageInstance) -> Self {
        InstanceJson {
            name: Some(inst.name.clone()),
            n1: inst.n1,
            r1: inst.r1,
            a: inst.a.clone(),
            b: inst.b.clone(),
            c: inst.c.clone(),
            x_lower: Some(inst.x_lower.clone()),
            x_upper: inst.x_upper.clone(),
            n2: inst.n2,
            r2: inst.r2,
            w: inst.w.clone(),
            d: inst.d.clone(),
            model: inst.model.clone(),
        }
    }

    pub fn into_instance(self) -> Result<TwoStageInstance, ModelError> {
        let lower = self.x_lower.unwrap_or_else(|| vec![0.0; self.n1]);
        TwoStageInstance::new(
            self.name.unwrap_or_else(|| "unnamed".into()),
            self.n1,
            self.r1,
            self.a,
            self.b,
            self.c,
            lower,
            self.x_upper,
            self.n2,
            self.r2,
            self.w,
            self.d,
            self.model,
        )
    }
}
