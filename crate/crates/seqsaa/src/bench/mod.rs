//! Experiment laboratory: synthetic instance generation, ground-truth
//! optimal values with caching, true-gap evaluation, replication
//! studies, and the work-complexity rate regression.

pub mod lemma;

use crate::bundle::{self, BundleParams, StopRule};
use crate::model::{
    self, build_weighted_extensive_form, ModelError, Scenario, TwoStageInstance,
};
use crate::num::dot;
use crate::rng::{KeyedRng, Purpose, StreamKey};
use crate::sampling::{CoordDist, ScenarioModel};
use crate::sequential::{
    run_nonterminating, run_with_stopping, InstanceRef, RunConfig, RunReport, SequentialError,
};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sequential(#[from] SequentialError),
    #[error(transparent)]
    Bundle(#[from] crate::bundle::BundleError),
    #[error("instance file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("instance JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("ground truth unavailable: {0}")]
    GroundTruth(String),
    #[error("insufficient data for rate regression: {points} usable points, need {need}")]
    InsufficientData { points: usize, need: usize },
}

/// Variance scale of the generated demand model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceScale {
    Normal,
    /// Spread multiplied by 3.
    High,
}

/// Specification for a synthetic two-stage instance.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n1: usize,
    pub r1: usize,
    pub n2: usize,
    pub r2: usize,
    /// Target support size; realized as a product grid `K^d >= support`.
    pub support: usize,
    #[serde(default = "default_variance")]
    pub variance: VarianceScale,
    pub seed: u64,
    /// Also randomize a few technology-matrix entries.
    #[serde(default)]
    pub stochastic_t: bool,
}

fn default_variance() -> VarianceScale {
    VarianceScale::Normal
}

/// Generate a random instance with relatively complete recourse: the
/// recourse matrix carries one slack column per row with bounded cost,
/// so every subproblem is feasible, and `d >= 0` keeps values finite.
pub fn generate_deak_like(spec: &GeneratorSpec) -> Result<TwoStageInstance, ModelError> {
    assert!(spec.n1 >= 1 && spec.r1 >= 1 && spec.r2 >= 1 && spec.support >= 1);
    assert!(
        spec.n2 > spec.r2,
        "need n2 > r2 so the slack recourse columns fit inside the declared width"
    );
    let mut rng = KeyedRng::new(StreamKey::new(spec.seed, Purpose::Generate, 0, 0));

    // First stage: x0 interior, b = A x0 makes X nonempty.
    let x0: Vec<f64> = (0..spec.n1).map(|_| rng.uniform_in(1.0, 3.0)).collect();
    let row_nnz = (spec.n1 / 4).clamp(2, spec.n1);
    let mut a = Vec::new();
    for i in 0..spec.r1 {
        let mut cols: Vec<usize> = (0..spec.n1).collect();
        rng.shuffle(&mut cols);
        for &j in cols.iter().take(row_nnz) {
            a.push((i, j, rng.uniform_in(0.5, 2.0)));
        }
    }
    let mut b = vec![0.0; spec.r1];
    for &(i, j, v) in &a {
        b[i] += v * x0[j];
    }
    let c: Vec<f64> = (0..spec.n1).map(|_| rng.uniform_in(1.0, 5.0)).collect();
    let x_lower = vec![0.0; spec.n1];
    let x_upper = vec![10.0; spec.n1];

    // Second stage: random columns then the identity slack block.
    let n_random = spec.n2 - spec.r2;
    let mut w = Vec::new();
    let mut d = Vec::new();
    for j in 0..n_random {
        let nnz = (spec.r2 / 5).clamp(2, spec.r2);
        let mut rows: Vec<usize> = (0..spec.r2).collect();
        rng.shuffle(&mut rows);
        for &i in rows.iter().take(nnz) {
            w.push((i, j, rng.uniform_in(0.5, 2.0)));
        }
        d.push(rng.uniform_in(1.0, 4.0));
    }
    for i in 0..spec.r2 {
        w.push((i, n_random + i, 1.0));
        d.push(rng.uniform_in(8.0, 15.0));
    }

    // Technology matrix.
    let mut t_base = Vec::new();
    for i in 0..spec.r2 {
        let nnz = (spec.n1 / 8).clamp(2, spec.n1);
        let mut cols: Vec<usize> = (0..spec.n1).collect();
        rng.shuffle(&mut cols);
        for &j in cols.iter().take(nnz) {
            t_base.push((i, j, rng.uniform_in(0.2, 1.0)));
        }
    }

    // Stochastic right-hand side around T x0 so subproblems straddle
    // activity at interior points.
    let dims = if spec.support >= 27 { 3 } else { 1 };
    let k = (spec.support as f64).powf(1.0 / dims as f64).ceil() as usize;
    let spread = match spec.variance {
        VarianceScale::Normal => 1.0,
        VarianceScale::High => 3.0,
    };
    let mut tx0 = vec![0.0; spec.r2];
    for &(i, j, v) in &t_base {
        tx0[i] += v * x0[j];
    }
    let h_base: Vec<f64> = tx0.iter().map(|v| v + rng.uniform_in(-1.0, 1.0)).collect();
    let coords: Vec<CoordDist> = (0..dims)
        .map(|_| {
            let mut values: Vec<f64> =
                (0..k).map(|_| spread * rng.uniform_in(-2.0, 2.0)).collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            CoordDist::Discrete { values, probs: vec![1.0 / k as f64; k] }
        })
        .collect();
    let mut h_coeffs = Vec::new();
    for i in 0..spec.r2 {
        let coord = i % dims;
        h_coeffs.push((i, coord, rng.uniform_in(0.3, 1.0)));
    }
    let mut t_coeffs = Vec::new();
    if spec.stochastic_t {
        for i in 0..spec.r2.min(4) {
            let j = rng.below(spec.n1 as u64) as usize;
            t_coeffs.push((i, j, 0, 0.1 * rng.uniform_in(0.5, 1.5)));
        }
    }
    let model = ScenarioModel { coords, h_base, h_coeffs, t_base, t_coeffs };

    TwoStageInstance::new(
        format!("deak{}x{}-s{}", spec.n1, spec.r2, spec.seed),
        spec.n1,
        spec.r1,
        a,
        b,
        c,
        x_lower,
        x_upper,
        spec.n2,
        spec.r2,
        w,
        d,
        model,
    )
}

/// Materialize an instance reference.
pub fn resolve_instance(r: &InstanceRef) -> Result<TwoStageInstance, BenchError> {
    match r {
        InstanceRef::Name(name) => Ok(model::named::by_name(name)?),
        InstanceRef::Path(path) => {
            let text = std::fs::read_to_string(path)?;
            let dto: model::InstanceJson = serde_json::from_str(&text)?;
            Ok(dto.into_instance()?)
        }
        InstanceRef::Deak(spec) => Ok(generate_deak_like(spec)?),
    }
}

/// Certified optimal value of the true (full-support) problem.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundTruth {
    pub instance_hash: String,
    pub z_star: f64,
    /// "extensive_form" or "bundle_bracket".
    pub method: String,
    /// Certificate pair: primal/dual objectives for the extensive form,
    /// lower/upper bundle bounds otherwise. Re-verified on reload.
    pub lower: f64,
    pub upper: f64,
    pub tolerance: f64,
}

/// Support sizes beyond this are refused outright.
pub const SUPPORT_CAP: usize = 200_000;
/// Extensive-form route only below this row count; larger supports use
/// the certified bundle bracket.
pub const EXTENSIVE_FORM_ROW_CAP: usize = 2_500;

const TRUTH_REL_TOL: f64 = 1e-8;

/// Compute the ground-truth optimum over the full finite support.
pub fn compute_ground_truth(instance: &TwoStageInstance) -> Result<GroundTruth, BenchError> {
    let support = instance
        .model
        .enumerate_support(SUPPORT_CAP)
        .ok_or_else(|| BenchError::GroundTruth("support not finite or over cap".into()))?;
    let scenarios: Vec<Scenario> = support.iter().map(|(s, _)| s.clone()).collect();
    let weights: Vec<f64> = support.iter().map(|(_, p)| *p).collect();
    let rows = instance.r1 + scenarios.len() * instance.r2;

    if rows <= EXTENSIVE_FORM_ROW_CAP {
        let lp = build_weighted_extensive_form(
            instance,
            &scenarios,
            &weights,
            model::EXTENSIVE_FORM_NONZERO_CAP,
        )?;
        let sol = lp.solve(None).map_err(ModelError::Lp)?;
        if sol.status != crate::lp::LpStatus::Optimal {
            return Err(BenchError::GroundTruth(format!(
                "extensive form not optimal: {:?}",
                sol.status
            )));
        }
        let agreement = (sol.objective - sol.dual_objective).abs();
        if agreement > TRUTH_REL_TOL * (1.0 + sol.objective.abs()) {
            return Err(BenchError::GroundTruth(format!(
                "primal/dual disagreement {agreement:.3e} in the extensive form"
            )));
        }
        Ok(GroundTruth {
            instance_hash: instance.content_hash(),
            z_star: sol.objective,
            method: "extensive_form".into(),
            lower: sol.dual_objective,
            upper: sol.objective,
            tolerance: TRUTH_REL_TOL,
        })
    } else {
        // Bundle bracket: z_lower <= z* <= z_upper certify the optimum.
        let start = instance.first_stage_lp(&instance.c).solve(None).map_err(ModelError::Lp)?.primal;
        let result = bundle::solve_weighted(
            instance,
            &scenarios,
            &weights,
            &start,
            None,
            StopRule::RelativeGap(TRUTH_REL_TOL),
            &BundleParams { max_inner: 5000, ..Default::default() },
            &mut None,
        )?;
        if result.hit_max_inner {
            return Err(BenchError::GroundTruth(
                "bundle bracket did not close to tolerance".into(),
            ));
        }
        Ok(GroundTruth {
            instance_hash: instance.content_hash(),
            z_star: 0.5 * (result.z_lower + result.objective),
            method: "bundle_bracket".into(),
            lower: result.z_lower,
            upper: result.objective,
            tolerance: TRUTH_REL_TOL,
        })
    }
}

/// File-backed ground-truth cache keyed by instance content hash. The
/// directory comes from `SEQSAA_CACHE_DIR` (default `.seqsaa-cache`).
pub struct GroundTruthCache {
    dir: PathBuf,
}

impl GroundTruthCache {
    pub fn from_env() -> Self {
        let dir = std::env::var_os("SEQSAA_CACHE_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(".seqsaa-cache"));
        GroundTruthCache { dir }
    }

    pub fn at(dir: impl Into<PathBuf>) -> Self {
        GroundTruthCache { dir: dir.into() }
    }

    fn path_for(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("truth-{hash}.json"))
    }

    /// Cached value if present and its certificate still agrees.
    pub fn load(&self, instance: &TwoStageInstance) -> Option<GroundTruth> {
        let path = self.path_for(&instance.content_hash());
        let text = std::fs::read_to_string(path).ok()?;
        let truth: GroundTruth = serde_json::from_str(&text).ok()?;
        let agree = (truth.upper - truth.lower).abs()
            <= 2.0 * truth.tolerance * (1.0 + truth.z_star.abs());
        (truth.instance_hash == instance.content_hash() && agree).then_some(truth)
    }

    pub fn store(&self, truth: &GroundTruth) -> Result<(), BenchError> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.path_for(&truth.instance_hash);
        std::fs::write(path, serde_json::to_string_pretty(truth)?)?;
        Ok(())
    }

    /// Load or compute-and-store.
    pub fn get(&self, instance: &TwoStageInstance) -> Result<GroundTruth, BenchError> {
        if let Some(t) = self.load(instance) {
            return Ok(t);
        }
        let truth = compute_ground_truth(instance)?;
        self.store(&truth)?;
        Ok(truth)
    }
}

/// Expected recourse cost over the full support: `q(x)`.
pub fn full_support_value(instance: &TwoStageInstance, x: &[f64]) -> Result<f64, BenchError> {
    let support = instance
        .model
        .enumerate_support(SUPPORT_CAP)
        .ok_or_else(|| BenchError::GroundTruth("support not finite or over cap".into()))?;
    let scenarios: Vec<Scenario> = support.iter().map(|(s, _)| s.clone()).collect();
    let values = model::evaluate_all(instance, x, &scenarios)?;
    Ok(values.iter().zip(support.iter()).map(|(v, (_, p))| v * p).sum())
}

/// True optimality gap `mu(x) = c^T x + q(x) - z*`.
pub fn true_gap(
    instance: &TwoStageInstance,
    x: &[f64],
    truth: &GroundTruth,
) -> Result<f64, BenchError> {
    let q = full_support_value(instance, x)?;
    Ok(dot(&instance.c, x) + q - truth.z_star)
}

/// One replication row of a study.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub seed: u64,
    pub l_final: usize,
    pub n_final: usize,
    pub total_inner: usize,
    pub work_lp_solves: usize,
    pub validate_lp_solves: usize,
    pub ci_upper: f64,
    pub eps: f64,
    pub objective_estimate: f64,
    pub true_gap: Option<f64>,
    pub covered: Option<bool>,
    pub timed_out: bool,
    pub elapsed_s: f64,
}

/// Aggregates over replications in the style of the experiment tables.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReplicationTable {
    pub rows: Vec<ReplicationRow>,
    pub replications: usize,
    pub failures: usize,
    pub mean_elapsed_s: f64,
    pub mean_total_inner: f64,
    pub mean_l: f64,
    pub mean_n_final: f64,
    /// Mean of `ci_upper / |objective estimate|`.
    pub mean_ci_relative: f64,
    /// Fraction of replications whose CI covered the true gap
    /// (`NaN` when no ground truth was available).
    pub coverage: f64,
}

/// Run `r` independently seeded replications of the stopping algorithm.
/// Per-replication seeds derive from the config seed; aggregation is
/// sorted by seed so tables are deterministic under any thread count.
pub fn run_replications(
    instance: Arc<TwoStageInstance>,
    base: &RunConfig,
    r: usize,
    truth: Option<&GroundTruth>,
) -> Result<ReplicationTable, BenchError> {
    use rayon::prelude::*;
    assert!(r >= 1);
    let seeds: Vec<u64> = (0..r)
        .map(|i| KeyedRng::new(StreamKey::new(base.seed, Purpose::Harness, 0, i as u64)).next_u64())
        .collect();

    let runs: Vec<(u64, Result<RunReport, SequentialError>)> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = RunConfig { seed, ..base.clone() };
            (seed, run_with_stopping(instance.clone(), cfg))
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = 0usize;
    for (seed, outcome) in runs {
        match outcome {
            Err(_) => failures += 1,
            Ok(report) => {
                let (gap, covered) = match truth {
                    None => (None, None),
                    Some(t) => {
                        let mu = true_gap(&instance, &report.x_hat, t)?;
                        // mu >= 0 holds by construction up to solver
                        // tolerance; clamp the tolerance-level negatives.
                        let mu = if mu > -1e-6 * (1.0 + t.z_star.abs()) { mu.max(0.0) } else { mu };
                        let covered = mu >= 0.0 && mu <= report.ci_upper;
                        (Some(mu), Some(covered))
                    }
                };
                rows.push(ReplicationRow {
                    seed,
                    l_final: report.l_final,
                    n_final: report.n_final,
                    total_inner: report.total_inner,
                    work_lp_solves: report.work_lp_solves,
                    validate_lp_solves: report.validate_lp_solves,
                    ci_upper: report.ci_upper,
                    eps: report.eps,
                    objective_estimate: report.objective_estimate,
                    true_gap: gap,
                    covered,
                    timed_out: report.timed_out,
                    elapsed_s: report.elapsed_s,
                });
            }
        }
    }
    rows.sort_by_key(|row| row.seed);

    let k = rows.len().max(1) as f64;
    let mean = |f: &dyn Fn(&ReplicationRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / k;
    let covered_rows: Vec<&ReplicationRow> =
        rows.iter().filter(|r| r.covered.is_some()).collect();
    let coverage = if covered_rows.is_empty() {
        f64::NAN
    } else {
        covered_rows.iter().filter(|r| r.covered == Some(true)).count() as f64
            / covered_rows.len() as f64
    };
    Ok(ReplicationTable {
        replications: r,
        failures,
        mean_elapsed_s: mean(&|r| r.elapsed_s),
        mean_total_inner: mean(&|r| r.total_inner as f64),
        mean_l: mean(&|r| r.l_final as f64),
        mean_n_final: mean(&|r| r.n_final as f64),
        mean_ci_relative: mean(&|r| r.ci_upper / (1.0 + r.objective_estimate.abs())),
        coverage,
        rows,
    })
}

/// Fitted work-complexity rate for one schedule.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateResult {
    /// Slope of log(mean true gap) on log(mean cumulative work).
    pub slope: f64,
    pub stderr: f64,
    /// `(log work, log gap)` points used in the fit.
    pub points: Vec<(f64, f64)>,
    pub replications: usize,
}

/// Run replications of the non-terminating loop and regress the log
/// mean true gap on the log mean cumulative second-stage LP count.
/// The first `burn_in` outer iterations (the startup transient shared
/// by every schedule) are excluded from the fit, as are iterations
/// whose mean gap sits within 10x solver tolerance of zero.
pub fn rate_experiment(
    instance: Arc<TwoStageInstance>,
    base: &RunConfig,
    replications: usize,
    max_outer: usize,
    burn_in: usize,
    truth: &GroundTruth,
) -> Result<RateResult, BenchError> {
    use rayon::prelude::*;
    assert!(replications >= 1 && max_outer >= 2);
    let seeds: Vec<u64> = (0..replications)
        .map(|i| KeyedRng::new(StreamKey::new(base.seed, Purpose::Harness, 1, i as u64)).next_u64())
        .collect();

    let trajectories: Vec<Result<Vec<(usize, f64)>, BenchError>> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = RunConfig {
                seed,
                max_outer: Some(max_outer),
                max_work: None,
                time_limit_s: f64::INFINITY,
                ..base.clone()
            };
            let traj = run_nonterminating(instance.clone(), cfg)?;
            let mut points = Vec::with_capacity(traj.records.len());
            for rec in &traj.records {
                let gap = true_gap(&instance, &rec.x_hat, truth)?;
                points.push((rec.cumulative_lp_solves, gap.max(0.0)));
            }
            Ok(points)
        })
        .collect();

    let mut per_rep = Vec::new();
    for t in trajectories {
        per_rep.push(t?);
    }
    let iterations = per_rep.iter().map(|t| t.len()).min().unwrap_or(0);
    let floor = 10.0 * TRUTH_REL_TOL * (1.0 + truth.z_star.abs());
    let mut points = Vec::new();
    for ell in burn_in..iterations {
        let mean_work =
            per_rep.iter().map(|t| t[ell].0 as f64).sum::<f64>() / per_rep.len() as f64;
        let mean_gap = per_rep.iter().map(|t| t[ell].1).sum::<f64>() / per_rep.len() as f64;
        if mean_gap > floor {
            points.push((mean_work.ln(), mean_gap.ln()));
        }
    }
    if points.len() < 4 {
        return Err(BenchError::InsufficientData { points: points.len(), need: 4 });
    }
    let (slope, stderr) = ols_slope(&points);
    Ok(RateResult { slope, stderr, points, replications })
}

/// OLS slope with its standard error.
fn ols_slope(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points
        .iter()
        .map(|p| {
            let e = p.1 - (intercept + slope * p.0);
            e * e
        })
        .sum();
    let dof = (n - 2.0).max(1.0);
    let stderr = (sse / dof / sxx).sqrt();
    (slope, stderr)
}
