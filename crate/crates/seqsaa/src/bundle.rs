//! Level bundle method used as the sample-path solver.
//!
//! Maintains a cutting-plane model of the mean recourse function, a best
//! observed objective `z_upper`, and a master lower bound `z_lower`. Each
//! inner iteration evaluates all scenario subproblems at one trial point,
//! adds cuts, refreshes the lower bound, and obtains the next trial point
//! by projecting the stability center (the incumbent) onto the level set
//! `{x in X : c^T x + cut_j(x) <= level}` with
//! `level = z_upper - (1 - alpha_lev) (z_upper - z_lower)`. An empty
//! level set raises `z_lower` to the level without a function
//! evaluation. Inner iterations stop as soon as the gap
//! `z_upper - z_lower` falls below the tolerance of the active stop rule.

use crate::lp::{LpStatus, ProjectionCut, ProjectionError, Sense};
use crate::model::{self, ModelError, SamplePathProblem, Scenario, TwoStageInstance};
use crate::num::{clamp, dot};
use crate::warmstart::{DualPool, WarmstartError, WarmstartInit};
use thiserror::Error;

/// Where a cut came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutOrigin {
    /// Averaged over all scenarios of the evaluation.
    Aggregate,
    /// Averaged over one scenario block (multi-cut mode).
    Block(usize),
    /// Reconstructed from the dual pool.
    WarmStart,
}

/// Affine minorant of the mean recourse function:
/// `Q_m(x) >= intercept + gradient^T x`.
#[derive(Clone, Debug)]
pub struct Cut {
    pub gradient: Vec<f64>,
    pub intercept: f64,
    pub origin: CutOrigin,
    pub generated_at: Vec<f64>,
}

impl Cut {
    pub fn value_at(&self, x: &[f64]) -> f64 {
        self.intercept + dot(&self.gradient, x)
    }
}

/// Inner-loop termination rule.
#[derive(Clone, Copy, Debug)]
pub enum StopRule {
    /// Adaptive sampling-error balance:
    /// `eps = nu * m^{-1/2} * clamp(sigma_hat, [sigma_min, sigma_max])`.
    Adaptive { nu: f64, sigma_min: f64, sigma_max: f64 },
    /// `gap <= tol * (1 + |z_upper|)`.
    RelativeGap(f64),
    /// `gap <= tol`.
    AbsoluteGap(f64),
}

impl StopRule {
    fn tolerance(&self, sigma_hat: f64, m: usize, z_upper: f64) -> f64 {
        match *self {
            StopRule::Adaptive { nu, sigma_min, sigma_max } => {
                adaptive_tolerance(sigma_hat, m, nu, sigma_min, sigma_max)
            }
            StopRule::RelativeGap(tol) => tol * (1.0 + z_upper.abs()),
            StopRule::AbsoluteGap(tol) => tol,
        }
    }
}

/// The inner termination tolerance
/// `eps = nu * m^{-1/2} * proj(sigma_hat, [sigma_min, sigma_max])`.
pub fn adaptive_tolerance(
    sigma_hat: f64,
    m: usize,
    nu: f64,
    sigma_min: f64,
    sigma_max: f64,
) -> f64 {
    assert!(sigma_min > 0.0 && sigma_min < sigma_max, "need 0 < sigma_min < sigma_max");
    assert!(nu > 0.0 && m >= 1);
    nu * (m as f64).sqrt().recip() * clamp(sigma_hat, sigma_min, sigma_max)
}

#[derive(Clone, Debug)]
pub struct BundleParams {
    /// Level interpolation parameter in (0, 1); 0 degenerates to a pure
    /// cutting-plane step onto the master optimal face.
    pub alpha_lev: f64,
    /// Scenario blocks for multi-cut mode (1 = single aggregate cut).
    pub cut_blocks: usize,
    /// Model size cap; loosest cuts at the incumbent are dropped first.
    pub max_cuts: usize,
    pub max_inner: usize,
}

impl Default for BundleParams {
    fn default() -> Self {
        BundleParams { alpha_lev: 0.5, cut_blocks: 1, max_cuts: 300, max_inner: 1000 }
    }
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lp(#[from] crate::lp::LpError),
    #[error(transparent)]
    Warmstart(#[from] WarmstartError),
    #[error("level bundle failed numerically: {0}")]
    Numerical(String),
}

/// One record per inner iteration.
#[derive(Clone, Debug)]
pub struct InnerTraceRow {
    pub t: usize,
    pub z_upper: f64,
    pub z_lower: f64,
    pub gap: f64,
    pub tolerance: f64,
    pub sigma_hat: f64,
    pub lp_solves: usize,
}

/// Result of one sample-path solve.
#[derive(Clone, Debug)]
pub struct InnerResult {
    pub x_hat: Vec<f64>,
    /// `c^T x_hat + Q_m(x_hat)`, the final upper bound.
    pub objective: f64,
    pub z_lower: f64,
    pub gap: f64,
    pub tolerance: f64,
    pub sigma_hat: f64,
    /// Function evaluations, counting the initial one at the start point.
    pub inner_iterations: usize,
    /// Second-stage LPs solved.
    pub lp_solves: usize,
    /// Master LPs and projections solved (not second-stage work).
    pub master_solves: usize,
    pub cuts: Vec<Cut>,
    /// Set when the iteration cap was hit before reaching the tolerance.
    pub hit_max_inner: bool,
    pub trace: Vec<InnerTraceRow>,
}

struct Evaluation {
    objective: f64,
    sigma_sq: f64,
    cuts: Vec<Cut>,
}

/// Evaluate all subproblems at `x`: objective, divisor-m variance, new
/// cuts, and dual harvest into the pool.
fn evaluate_point(
    instance: &TwoStageInstance,
    scenarios: &[Scenario],
    weights: &[f64],
    x: &[f64],
    cut_blocks: usize,
    pool: &mut Option<&mut DualPool>,
) -> Result<Evaluation, BundleError> {
    let results = model::evaluate_all_with_duals(instance, x, scenarios)?;
    let q_bar: f64 = results.iter().zip(weights).map(|(r, w)| w * r.value).sum();
    let sigma_sq: f64 = results
        .iter()
        .zip(weights)
        .map(|(r, w)| w * (r.value - q_bar) * (r.value - q_bar))
        .sum();

    let n1 = instance.n1;
    let mut aggregate = Cut {
        gradient: vec![0.0; n1],
        intercept: 0.0,
        origin: CutOrigin::Aggregate,
        generated_at: x.to_vec(),
    };
    for ((r, w), sc) in results.iter().zip(weights).zip(scenarios) {
        aggregate.intercept += w * dot(&r.dual, &sc.h);
        let ttl = instance.t_transpose_lambda(sc, &r.dual);
        for (g, t) in aggregate.gradient.iter_mut().zip(&ttl) {
            *g -= w * t;
        }
    }

    let mut cuts = Vec::new();
    if cut_blocks > 1 {
        let m = scenarios.len();
        let k = cut_blocks.min(m);
        for block in 0..k {
            let lo = block * m / k;
            let hi = (block + 1) * m / k;
            let wsum: f64 = weights[lo..hi].iter().sum();
            let mut cut = Cut {
                gradient: vec![0.0; n1],
                intercept: 0.0,
                origin: CutOrigin::Block(block),
                generated_at: x.to_vec(),
            };
            for i in lo..hi {
                let w = weights[i] / wsum;
                cut.intercept += w * dot(&results[i].dual, &scenarios[i].h);
                let ttl = instance.t_transpose_lambda(&scenarios[i], &results[i].dual);
                for (g, t) in cut.gradient.iter_mut().zip(&ttl) {
                    *g -= w * t;
                }
            }
            cuts.push(cut);
        }
    }
    cuts.push(aggregate);

    if let Some(pool) = pool.as_deref_mut() {
        for r in &results {
            pool.add(instance, &r.dual)?;
        }
    }

    Ok(Evaluation { objective: dot(&instance.c, x) + q_bar, sigma_sq, cuts })
}

/// Lower-bound master over the current model:
/// `min c^T x + sum_k w_k theta_k` with the block and aggregate cuts.
fn lower_bound_master(
    instance: &TwoStageInstance,
    cuts: &[Cut],
    weights: &[f64],
    cut_blocks: usize,
    scenario_count: usize,
) -> Result<(f64, Vec<f64>), BundleError> {
    let n1 = instance.n1;
    let k = cut_blocks.min(scenario_count).max(1);
    let mut lp = instance.first_stage_lp(&instance.c);
    let mut block_weight = vec![0.0; k];
    for block in 0..k {
        let lo = block * scenario_count / k;
        let hi = (block + 1) * scenario_count / k;
        block_weight[block] = weights[lo..hi].iter().sum();
    }
    for bw in &block_weight {
        lp.objective.push(*bw);
        lp.lower.push(f64::NEG_INFINITY);
        lp.upper.push(f64::INFINITY);
        lp.ncols += 1;
    }
    for cut in cuts {
        let mut coeffs: Vec<(usize, f64)> = cut
            .gradient
            .iter()
            .enumerate()
            .filter(|(_, g)| **g != 0.0)
            .map(|(j, g)| (j, -*g))
            .collect();
        match cut.origin {
            CutOrigin::Block(b) if b < k => {
                coeffs.push((n1 + b, 1.0));
            }
            _ => {
                // Aggregate or warm-start: bounds the weighted sum.
                for (b, bw) in block_weight.iter().enumerate() {
                    coeffs.push((n1 + b, *bw));
                }
            }
        }
        lp.add_row(Sense::Ge, cut.intercept, &coeffs);
    }
    let sol = lp.solve(None)?;
    if sol.status != LpStatus::Optimal {
        return Err(BundleError::Numerical(format!(
            "lower-bound master returned {:?}",
            sol.status
        )));
    }
    Ok((sol.objective, sol.primal[..n1].to_vec()))
}

/// Solve one sample-path problem to the stop rule's tolerance.
///
/// `start` must be first-stage feasible; warm cuts and the warm lower
/// bound seed the model; harvested subproblem duals flow into `pool`.
pub fn solve_sample_path(
    problem: &SamplePathProblem,
    start: &[f64],
    warm: Option<WarmstartInit>,
    rule: StopRule,
    params: &BundleParams,
    mut pool: Option<&mut DualPool>,
) -> Result<InnerResult, BundleError> {
    let weights = vec![problem.weight(); problem.m()];
    solve_weighted(&problem.instance, &problem.scenarios, &weights, start, warm, rule, params, &mut pool)
}

/// Weighted variant (used with full-support probabilities for ground
/// truth solves). Weights must sum to 1.
#[allow(clippy::too_many_arguments)]
pub fn solve_weighted(
    instance: &TwoStageInstance,
    scenarios: &[Scenario],
    weights: &[f64],
    start: &[f64],
    warm: Option<WarmstartInit>,
    rule: StopRule,
    params: &BundleParams,
    pool: &mut Option<&mut DualPool>,
) -> Result<InnerResult, BundleError> {
    assert_eq!(scenarios.len(), weights.len());
    assert!(!scenarios.is_empty());
    assert!(
        instance.is_first_stage_feasible(start, 1e-6),
        "bundle start point must be first-stage feasible"
    );
    let m = scenarios.len();
    let region = instance.region();

    let mut cuts: Vec<Cut> = Vec::new();
    let mut z_lower = f64::NEG_INFINITY;
    if let Some(w) = warm {
        cuts.extend(w.cuts);
        if let Some(z0) = w.z0 {
            z_lower = z0;
        }
    }

    let mut lp_solves = 0usize;
    let mut master_solves = 0usize;
    let mut trace: Vec<InnerTraceRow> = Vec::new();

    // Initial evaluation at the start point (inner iteration 1).
    let eval = evaluate_point(instance, scenarios, weights, start, params.cut_blocks, pool)?;
    lp_solves += m;
    let mut t = 1usize;
    let mut incumbent = start.to_vec();
    let mut z_upper = eval.objective;
    let mut sigma_hat = eval.sigma_sq.sqrt();
    cuts.extend(eval.cuts);

    let mut hit_cap = false;
    let loop_cap = 3 * params.max_inner + 100;
    let mut loops = 0usize;
    loop {
        loops += 1;
        if loops > loop_cap {
            hit_cap = true;
            break;
        }

        let (lb, x_lb) =
            lower_bound_master(instance, &cuts, weights, params.cut_blocks, m)?;
        master_solves += 1;
        if lb > z_lower {
            z_lower = lb;
        }

        let gap = (z_upper - z_lower).max(0.0);
        let tolerance = rule.tolerance(sigma_hat, m, z_upper);
        trace.push(InnerTraceRow {
            t,
            z_upper,
            z_lower,
            gap,
            tolerance,
            sigma_hat,
            lp_solves,
        });
        if gap <= tolerance {
            break;
        }
        if t >= params.max_inner {
            hit_cap = true;
            break;
        }

        let level = z_upper - (1.0 - params.alpha_lev) * (z_upper - z_lower);
        let projection_cuts: Vec<ProjectionCut> = cuts
            .iter()
            .filter(|c| !matches!(c.origin, CutOrigin::Block(_)))
            .map(|c| ProjectionCut {
                normal: instance.c.iter().zip(&c.gradient).map(|(ci, gi)| ci + gi).collect(),
                offset: c.intercept,
            })
            .collect();
        master_solves += 1;
        let x_next = match crate::lp::solve_level_projection(
            &incumbent,
            &projection_cuts,
            level,
            &region,
        ) {
            Ok(x) => x,
            Err(ProjectionError::LevelSetEmpty) => {
                // The model already certifies level as a lower bound.
                z_lower = level;
                continue;
            }
            // Fall back to a plain cutting-plane step on the rare
            // occasions the projection degenerates.
            Err(ProjectionError::Numerical(_)) => x_lb,
        };

        let eval =
            evaluate_point(instance, scenarios, weights, &x_next, params.cut_blocks, pool)?;
        lp_solves += m;
        t += 1;
        if eval.objective < z_upper {
            z_upper = eval.objective;
            incumbent = x_next;
            sigma_hat = eval.sigma_sq.sqrt();
        }
        cuts.extend(eval.cuts);
        if cuts.len() > params.max_cuts {
            prune_cuts(&mut cuts, &incumbent, z_upper, instance, params.max_cuts);
        }
    }

    let gap = (z_upper - z_lower).max(0.0);
    let tolerance = rule.tolerance(sigma_hat, m, z_upper);
    Ok(InnerResult {
        x_hat: incumbent,
        objective: z_upper,
        z_lower,
        gap,
        tolerance,
        sigma_hat,
        inner_iterations: t,
        lp_solves,
        master_solves,
        cuts,
        hit_max_inner: hit_cap,
        trace,
    })
}

/// Drop the cuts loosest at the incumbent until `max_cuts` remain. The
/// cuts from the freshest iterate are always kept.
fn prune_cuts(
    cuts: &mut Vec<Cut>,
    incumbent: &[f64],
    z_upper: f64,
    instance: &TwoStageInstance,
    max_cuts: usize,
) {
    let q_at_incumbent = z_upper - dot(&instance.c, incumbent);
    let last_generation = cuts.last().map(|c| c.generated_at.clone()).unwrap_or_default();
    let mut slack: Vec<(usize, f64)> = cuts
        .iter()
        .enumerate()
        .map(|(i, c)| (i, q_at_incumbent - c.value_at(incumbent)))
        .collect();
    slack.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    let mut drop = vec![false; cuts.len()];
    let mut excess = cuts.len().saturating_sub(max_cuts);
    for (i, _) in slack {
        if excess == 0 {
            break;
        }
        if cuts[i].generated_at == last_generation {
            continue;
        }
        drop[i] = true;
        excess -= 1;
    }
    let mut keep = Vec::with_capacity(max_cuts);
    for (i, c) in cuts.drain(..).enumerate() {
        if !drop[i] {
            keep.push(c);
        }
    }
    *cuts = keep;
}

/// Check that a cut under-estimates the sampled objective at `n_points`
/// random feasible points (test and debug helper).
pub fn verify_cut_validity(
    problem: &SamplePathProblem,
    cut: &Cut,
    n_points: usize,
    seed: u64,
) -> Result<(), String> {
    use crate::rng::{KeyedRng, Purpose, StreamKey};
    let instance = &*problem.instance;
    let mut rng = KeyedRng::new(StreamKey::new(seed, Purpose::Harness, 0, 0));
    for k in 0..n_points {
        // Random point in the box, projected onto X.
        let raw: Vec<f64> = (0..instance.n1)
            .map(|j| rng.uniform_in(instance.x_lower[j], instance.x_upper[j]))
            .collect();
        let x = crate::lp::solve_level_projection(&raw, &[], f64::INFINITY, &instance.region())
            .map_err(|e| format!("projection failed: {e}"))?;
        let (q_bar, _) = model::sample_average(instance, &x, &problem.scenarios)
            .map_err(|e| format!("evaluation failed: {e}"))?;
        let model_value = cut.value_at(&x);
        if model_value > q_bar + 1e-8 * (1.0 + q_bar.abs()) {
            return Err(format!(
                "cut invalid at test point {k}: model {model_value} > Q_m {q_bar}"
            ));
        }
    }
    Ok(())
}
