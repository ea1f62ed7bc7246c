//! Dual-multiplier pool and warm-start initialization.
//!
//! With fixed recourse every second-stage subproblem shares one dual
//! polyhedron `D = {lambda >= 0 : W^T lambda <= d}`, so optimal duals
//! collected anywhere stay feasible everywhere. The pool accumulates
//! deduplicated duals; for a fresh scenario set it reconstructs a
//! cutting-plane model by a cutting loop on the relaxed master, whose
//! optimum is a valid lower bound on the sample-path optimum. Generating
//! one constraint costs `m` matrix-vector products and no LP solves.

use crate::bundle::{Cut, CutOrigin};
use crate::lp::{LpStatus, Sense};
use crate::model::{SamplePathProblem, TwoStageInstance};
use crate::num::{dist2_sq, dot, norm2};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WarmstartError {
    #[error("dual vector violates W^T lambda <= d by {violation:.3e} (lp kernel bug)")]
    DualInfeasible { violation: f64 },
    #[error(transparent)]
    Lp(#[from] crate::lp::LpError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolAdd {
    Inserted,
    Duplicate,
    Rejected,
}

/// Pool of second-stage optimal dual vectors with Euclidean
/// deduplication and least-recently-selected eviction.
pub struct DualPool {
    duals: Vec<Vec<f64>>,
    last_selected: Vec<u64>,
    clock: u64,
    capacity: usize,
    dedup_relative: f64,
    /// Exact bit-pattern prefilter; repeated subproblem solves reproduce
    /// duals bit-for-bit, so this rejects most repeats cheaply.
    seen: HashSet<Vec<u64>>,
}

pub const DEFAULT_POOL_CAPACITY: usize = 5000;
pub const DEFAULT_DEDUP_RELATIVE: f64 = 1e-6;

impl DualPool {
    pub fn new(capacity: usize, dedup_relative: f64) -> Self {
        DualPool {
            duals: Vec::new(),
            last_selected: Vec::new(),
            clock: 0,
            capacity,
            dedup_relative,
            seen: HashSet::new(),
        }
    }

    pub fn with_defaults() -> Self {
        Self::new(DEFAULT_POOL_CAPACITY, DEFAULT_DEDUP_RELATIVE)
    }

    pub fn len(&self) -> usize {
        self.duals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.duals.is_empty()
    }

    pub fn duals(&self) -> &[Vec<f64>] {
        &self.duals
    }

    /// Insert a dual from an optimal subproblem solve. Verifies
    /// membership in the dual polyhedron, rejects near-duplicates by the
    /// threshold `dedup_relative * (1 + ||lambda||)`, and evicts the
    /// least-recently-selected member at capacity.
    pub fn add(
        &mut self,
        instance: &TwoStageInstance,
        lambda: &[f64],
    ) -> Result<PoolAdd, WarmstartError> {
        let violation = dual_violation(instance, lambda);
        if violation > 1e-8 * (1.0 + max_abs(&instance.d)) {
            return Err(WarmstartError::DualInfeasible { violation });
        }
        if self.capacity == 0 {
            return Ok(PoolAdd::Rejected);
        }
        let pattern: Vec<u64> = lambda.iter().map(|v| v.to_bits()).collect();
        if self.seen.contains(&pattern) {
            return Ok(PoolAdd::Duplicate);
        }
        let threshold = self.dedup_relative * (1.0 + norm2(lambda));
        let thr_sq = threshold * threshold;
        if self.duals.iter().any(|m| dist2_sq(m, lambda) < thr_sq) {
            self.seen.insert(pattern);
            return Ok(PoolAdd::Duplicate);
        }
        self.seen.insert(pattern);
        if self.duals.len() >= self.capacity {
            let victim = self
                .last_selected
                .iter()
                .enumerate()
                .min_by_key(|(_, &s)| s)
                .map(|(i, _)| i)
                .expect("nonempty at capacity");
            self.duals[victim] = lambda.to_vec();
            self.last_selected[victim] = self.clock;
        } else {
            self.duals.push(lambda.to_vec());
            self.last_selected.push(self.clock);
        }
        Ok(PoolAdd::Inserted)
    }

    fn mark_selected(&mut self, index: usize) {
        self.clock += 1;
        self.last_selected[index] = self.clock;
    }

    /// Plain-text snapshot for debugging.
    pub fn snapshot(&self) -> String {
        use std::fmt::Write as _;
        let mut s =
            format!("dual pool: {} members, capacity {}\n", self.duals.len(), self.capacity);
        for (i, d) in self.duals.iter().enumerate() {
            let _ = writeln!(s, "  [{i}] {d:?}");
        }
        s
    }
}

/// Max violation of `lambda >= 0` and `W^T lambda <= d`.
fn dual_violation(instance: &TwoStageInstance, lambda: &[f64]) -> f64 {
    let mut wt_lambda = vec![0.0; instance.n2];
    for &(i, j, v) in &instance.w {
        wt_lambda[j] += v * lambda[i];
    }
    let mut violation = 0.0f64;
    for (j, &wl) in wt_lambda.iter().enumerate() {
        violation = violation.max(wl - instance.d[j]);
    }
    for &l in lambda {
        violation = violation.max(-l);
    }
    violation
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Outcome of the warm-start cutting loop.
pub struct WarmstartInit {
    /// Argmin of the final relaxed master.
    pub x0: Vec<f64>,
    /// Final master optimum: a valid lower bound on the sample-path
    /// optimum. `None` when the pool was empty.
    pub z0: Option<f64>,
    pub cuts: Vec<Cut>,
    pub rounds: usize,
}

pub const WARMSTART_ROUND_CAP: usize = 500;

/// Reconstruct an initial cutting-plane model for a fresh scenario set
/// from the pooled duals.
///
/// Repeats: pick the best pool dual per scenario at the current master
/// argmin (pure enumeration), assemble the aggregate constraint, add it
/// if violated, re-solve the relaxed master `min c^T x + theta` over X.
/// Stops at the first non-violated constraint.
pub fn warmstart_master(
    problem: &SamplePathProblem,
    pool: &mut DualPool,
    start: &[f64],
) -> Result<WarmstartInit, WarmstartError> {
    let instance = &*problem.instance;
    if pool.is_empty() {
        return Ok(WarmstartInit { x0: start.to_vec(), z0: None, cuts: Vec::new(), rounds: 0 });
    }

    let n1 = instance.n1;
    let mut cuts: Vec<Cut> = Vec::new();
    let mut x_hat = start.to_vec();
    let mut theta_hat = f64::NEG_INFINITY;
    let mut z_hat = None;
    let mut rounds = 0;

    while rounds < WARMSTART_ROUND_CAP {
        rounds += 1;
        let cut = select_aggregate_cut(problem, pool, &x_hat);
        let violated = theta_hat == f64::NEG_INFINITY
            || cut.intercept + dot(&cut.gradient, &x_hat) - theta_hat
                > 1e-9 * (1.0 + theta_hat.abs());
        if !violated {
            rounds -= 1; // final separation round added nothing
            break;
        }
        cuts.push(cut);

        // Relaxed master: min c^T x + theta, theta >= each cut.
        let mut lp = instance.first_stage_lp(&instance.c);
        let theta_col = n1;
        lp.objective.push(1.0);
        lp.lower.push(f64::NEG_INFINITY);
        lp.upper.push(f64::INFINITY);
        lp.ncols += 1;
        for cut in &cuts {
            let mut coeffs: Vec<(usize, f64)> = cut
                .gradient
                .iter()
                .enumerate()
                .filter(|(_, g)| **g != 0.0)
                .map(|(j, g)| (j, -*g))
                .collect();
            coeffs.push((theta_col, 1.0));
            lp.add_row(Sense::Ge, cut.intercept, &coeffs);
        }
        let sol = lp.solve(None)?;
        debug_assert_eq!(sol.status, LpStatus::Optimal, "warm master over compact X is solvable");
        if sol.status != LpStatus::Optimal {
            break;
        }
        x_hat = sol.primal[..n1].to_vec();
        theta_hat = sol.primal[n1];
        z_hat = Some(sol.objective);
    }

    Ok(WarmstartInit { x0: x_hat, z0: z_hat, cuts, rounds })
}

/// Best pool dual per scenario at `x`, assembled into one aggregate cut
/// on the mean recourse function.
fn select_aggregate_cut(problem: &SamplePathProblem, pool: &mut DualPool, x: &[f64]) -> Cut {
    let instance = &*problem.instance;
    let m = problem.m();
    let weight = 1.0 / m as f64;
    let base_tx = instance.base_tx(x);

    let mut gradient = vec![0.0; instance.n1];
    let mut intercept = 0.0;
    let mut selected: Vec<usize> = Vec::with_capacity(m);
    for scenario in &problem.scenarios {
        let rhs = instance.subproblem_rhs(x, &base_tx, scenario);
        let (mut best_idx, mut best_val) = (0usize, f64::NEG_INFINITY);
        for (idx, lambda) in pool.duals.iter().enumerate() {
            let v = dot(lambda, &rhs);
            if v > best_val {
                best_val = v;
                best_idx = idx;
            }
        }
        selected.push(best_idx);
        let lambda = &pool.duals[best_idx];
        // theta >= lambda^T (h - T x): intercept lambda^T h, gradient -T^T lambda.
        intercept += weight * dot(lambda, &scenario.h);
        let ttl = instance.t_transpose_lambda(scenario, lambda);
        for (g, t) in gradient.iter_mut().zip(&ttl) {
            *g -= weight * t;
        }
    }
    for idx in selected {
        pool.mark_selected(idx);
    }
    Cut { gradient, intercept, origin: CutOrigin::WarmStart, generated_at: x.to_vec() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SamplerKind, Scenario, ScenarioId, TwoStageInstance};
    use crate::sampling::ScenarioModel;
    use std::sync::Arc;

    fn toy() -> TwoStageInstance {
        // Q(x, h) = max(0, h - x) with unit recourse cost.
        TwoStageInstance::new(
            "toy",
            1,
            0,
            vec![],
            vec![],
            vec![0.5],
            vec![0.0],
            vec![10.0],
            1,
            1,
            vec![(0, 0, 1.0)],
            vec![1.0],
            ScenarioModel::deterministic(vec![3.0], vec![(0, 0, 1.0)]),
        )
        .unwrap()
    }

    fn sc(h: f64, draw: u64) -> Scenario {
        Scenario {
            h: vec![h],
            t_delta: vec![],
            id: ScenarioId { sampler: SamplerKind::Support, outer: 0, draw },
        }
    }

    #[test]
    fn pool_insert_duplicate_threshold() {
        let inst = toy();
        let mut pool = DualPool::new(10, 1e-6);
        assert_eq!(pool.add(&inst, &[1.0]).unwrap(), PoolAdd::Inserted);
        assert_eq!(pool.add(&inst, &[1.0]).unwrap(), PoolAdd::Duplicate);
        // Distance 0.5 * threshold from a member: duplicate.
        let thr = 1e-6 * (1.0 + 1.0);
        assert_eq!(pool.add(&inst, &[1.0 - 0.5 * thr]).unwrap(), PoolAdd::Duplicate);
        assert_eq!(pool.add(&inst, &[0.0]).unwrap(), PoolAdd::Inserted);
        assert_eq!(pool.len(), 2);
    }

    #[test]
    fn pool_rejects_dual_infeasible() {
        let inst = toy();
        let mut pool = DualPool::with_defaults();
        // W^T lambda = 2.0 > d = 1.0.
        assert!(matches!(pool.add(&inst, &[2.0]), Err(WarmstartError::DualInfeasible { .. })));
        // Negative multiplier is outside the dual cone.
        assert!(matches!(pool.add(&inst, &[-1.0]), Err(WarmstartError::DualInfeasible { .. })));
    }

    #[test]
    fn empty_pool_passthrough() {
        let inst = Arc::new(toy());
        let problem = SamplePathProblem::new(inst, vec![sc(3.0, 0)]);
        let mut pool = DualPool::with_defaults();
        let init = warmstart_master(&problem, &mut pool, &[2.0]).unwrap();
        assert_eq!(init.x0, vec![2.0]);
        assert!(init.z0.is_none());
        assert!(init.cuts.is_empty());
    }

    #[test]
    fn zero_dual_gives_first_stage_minimum() {
        // Pool = {0}: single cut theta >= 0, so the master reduces to
        // min c^T x = 0 at x = 0.
        let inst = Arc::new(toy());
        let problem = SamplePathProblem::new(inst.clone(), vec![sc(3.0, 0)]);
        let mut pool = DualPool::with_defaults();
        pool.add(&inst, &[0.0]).unwrap();
        let init = warmstart_master(&problem, &mut pool, &[2.0]).unwrap();
        assert_eq!(init.cuts.len(), 1);
        let z0 = init.z0.unwrap();
        assert!((z0 - 0.0).abs() < 1e-9, "z0 = {z0}");
        assert!((init.x0[0] - 0.0).abs() < 1e-9);
    }

    #[test]
    fn complete_dual_set_is_exact() {
        // Dual polyhedron of min{y : y >= h - x, y >= 0} is [0,1]; its
        // extreme points {0, 1} give an exact master: z0 = z*_m.
        let inst = Arc::new(toy());
        let scenarios = vec![sc(1.0, 0), sc(3.0, 1), sc(5.0, 2)];
        let problem = SamplePathProblem::new(inst.clone(), scenarios.clone());
        let mut pool = DualPool::with_defaults();
        pool.add(&inst, &[0.0]).unwrap();
        pool.add(&inst, &[1.0]).unwrap();
        let init = warmstart_master(&problem, &mut pool, &[0.0]).unwrap();
        let z0 = init.z0.unwrap();

        let lp = crate::model::build_extensive_form(&inst, &scenarios, 1_000_000).unwrap();
        let z_star = lp.solve(None).unwrap().objective;
        assert!((z0 - z_star).abs() < 1e-8, "z0 = {z0}, z* = {z_star}");
    }

    #[test]
    fn pool_growth_never_hurts() {
        let inst = Arc::new(toy());
        let scenarios = vec![sc(1.0, 0), sc(4.0, 1)];
        let problem = SamplePathProblem::new(inst.clone(), scenarios);
        let mut small = DualPool::with_defaults();
        small.add(&inst, &[1.0]).unwrap();
        let z_small = warmstart_master(&problem, &mut small, &[0.0]).unwrap().z0.unwrap();
        let mut big = DualPool::with_defaults();
        big.add(&inst, &[1.0]).unwrap();
        big.add(&inst, &[0.0]).unwrap();
        let z_big = warmstart_master(&problem, &mut big, &[0.0]).unwrap().z0.unwrap();
        assert!(z_big >= z_small - 1e-9);
    }
}
