//! Outer drivers: the non-terminating budgeted loop and the finite
//! stopping variant with a one-sided confidence interval on the
//! optimality gap, plus candidate validation.

mod schedule;

pub use schedule::{Schedule, ScheduleSpec};

use crate::bundle::{self, BundleError, BundleParams, StopRule};
use crate::model::{ModelError, SamplePathProblem, TwoStageInstance};
use crate::num::{dot, inverse_normal_cdf};
use crate::sampling::{self, SamplerChoice, SamplingError, ValidationStream};
use crate::warmstart::{warmstart_master, DualPool, WarmstartError};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

/// Where the instance comes from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceRef {
    /// Built-in instance by name ("lands", "gbd", "pgp2", "cep").
    Name(String),
    /// Instance JSON on disk.
    Path(String),
    /// Synthetic instance from the generator.
    Deak(crate::bench::GeneratorSpec),
}

fn default_sampler() -> SamplerChoice {
    SamplerChoice::Iid
}
fn default_nu() -> f64 {
    1.0
}
fn default_sigma_min() -> f64 {
    1e-5
}
fn default_alpha() -> f64 {
    0.1
}
fn default_m1() -> usize {
    100
}
fn default_n1() -> usize {
    50
}
fn default_seed() -> u64 {
    12345
}
fn default_time_limit() -> f64 {
    7200.0
}
fn default_max_inner() -> usize {
    1000
}
fn default_alpha_lev() -> f64 {
    0.5
}
fn default_cut_blocks() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_ci_sd_floor() -> f64 {
    1e-5
}
fn default_threads() -> usize {
    1
}

/// Fully resolved run configuration; every field serializes so the
/// config echo reproduces the run.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub instance: InstanceRef,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerChoice,
    pub schedule: ScheduleSpec,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_sigma_min")]
    pub sigma_min: f64,
    /// Upper clamp of the adaptive tolerance; defaults to
    /// `1e7 * instance cost scale` when absent.
    #[serde(default)]
    pub sigma_max: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Absolute stopping threshold on the CI upper bound.
    #[serde(default)]
    pub eps: Option<f64>,
    /// Relative threshold: `eps = eps_rel * (first-iteration objective
    /// estimate)`, fixed after outer iteration 1. Used when `eps` is
    /// absent; defaults to 1e-3.
    #[serde(default)]
    pub eps_rel: Option<f64>,
    #[serde(default = "default_m1")]
    pub m1: usize,
    #[serde(default = "default_n1")]
    pub n1: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_time_limit")]
    pub time_limit_s: f64,
    #[serde(default = "default_max_inner")]
    pub max_inner: usize,
    #[serde(default = "default_alpha_lev")]
    pub alpha_lev: f64,
    #[serde(default = "default_cut_blocks")]
    pub cut_blocks: usize,
    /// Dual-pool warm starts on/off.
    #[serde(default = "default_true")]
    pub warmstart: bool,
    /// Reuse solve scenarios across outer iterations as prefixes of one
    /// stream (common random numbers); iid sampler only.
    #[serde(default)]
    pub reuse_prefix: bool,
    /// Standard-deviation floor inside the CI width term.
    #[serde(default = "default_ci_sd_floor")]
    pub ci_sd_floor: f64,
    #[serde(default)]
    pub max_outer: Option<usize>,
    /// Budget on cumulative second-stage LP solves (solve path).
    #[serde(default)]
    pub max_work: Option<usize>,
    #[serde(default = "default_threads")]
    pub threads: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.schedule.validate()?;
        if !(self.nu > 0.0) {
            return Err("nu must be positive".into());
        }
        if !(self.sigma_min > 0.0) {
            return Err("sigma_min must be positive".into());
        }
        if let Some(sm) = self.sigma_max {
            if !(sm > self.sigma_min) {
                return Err("sigma_max must exceed sigma_min".into());
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err("alpha must lie in (0,1)".into());
        }
        if let Some(e) = self.eps {
            if !(e > 0.0) {
                return Err("eps must be positive".into());
            }
        }
        if let Some(e) = self.eps_rel {
            if !(e > 0.0) {
                return Err("eps_rel must be positive".into());
            }
        }
        if self.m1 < 2 || self.n1 < 1 {
            return Err("need m1 >= 2 and n1 >= 1".into());
        }
        if self.m1 != 2 * self.n1 {
            return Err("m1 must equal 2 * n1 (solve sample twice the validation sample)".into());
        }
        if !(self.alpha_lev >= 0.0 && self.alpha_lev < 1.0) {
            return Err("alpha_lev must lie in [0,1)".into());
        }
        if self.cut_blocks < 1 {
            return Err("cut_blocks must be >= 1".into());
        }
        if self.reuse_prefix && self.sampler != SamplerChoice::Iid {
            return Err("reuse_prefix requires the iid sampler".into());
        }
        if !(self.ci_sd_floor > 0.0) {
            return Err("ci_sd_floor must be positive".into());
        }
        if self.threads < 1 {
            return Err("threads must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SequentialError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Warmstart(#[from] WarmstartError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Lp(#[from] crate::lp::LpError),
}

/// Per-outer-iteration bookkeeping.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OuterRecord {
    pub ell: usize,
    pub m: usize,
    pub n: usize,
    pub x_hat: Vec<f64>,
    /// `c^T x_hat + Q_m(x_hat)` on the solve sample.
    pub objective_estimate: f64,
    pub gap: f64,
    pub eps_inner: f64,
    pub sigma_hat: f64,
    pub inner_iterations: usize,
    pub hit_max_inner: bool,
    /// Second-stage LPs this outer iteration (solve path).
    pub lp_solves: usize,
    /// Cumulative inner iterations (the paper's `M`).
    pub cumulative_inner: usize,
    /// Cumulative solve-path second-stage LPs (the work unit `W_l`).
    pub cumulative_lp_solves: usize,
    /// Validation estimators; absent in non-terminating runs.
    pub g_tilde: Option<f64>,
    pub s_tilde: Option<f64>,
    pub ci_upper: Option<f64>,
    pub validate_lp_solves: usize,
    pub elapsed_s: f64,
}

/// Validation-sample estimators of the candidate gap.
#[derive(Clone, Debug)]
pub struct ValidationResult {
    pub g_tilde: f64,
    pub s_tilde_sq: f64,
    pub x_val_star: Vec<f64>,
    /// Certified residual gap of the validation solve itself; folded
    /// into `ci_upper` so an inexact `x_val_star` can never shrink the
    /// interval.
    pub solve_gap: f64,
    pub ci_upper: f64,
    pub lp_solves: usize,
}

/// Why a non-terminating run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetReason {
    MaxOuter,
    MaxWork,
    TimeLimit,
}

/// Trajectory of a budgeted (non-terminating) run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub records: Vec<OuterRecord>,
    pub stopped: BudgetReason,
}

/// Final report of a stopping run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub instance: String,
    /// Outer iterations completed (the stopping time `L`).
    pub l_final: usize,
    pub m_final: usize,
    pub n_final: usize,
    pub x_hat: Vec<f64>,
    pub objective_estimate: f64,
    pub g_tilde: f64,
    pub s_tilde: f64,
    pub ci_upper: f64,
    /// The stopping threshold actually used.
    pub eps: f64,
    pub total_inner: usize,
    pub work_lp_solves: usize,
    pub validate_lp_solves: usize,
    pub timed_out: bool,
    pub elapsed_s: f64,
    pub records: Vec<OuterRecord>,
}

/// Shared machinery of both outer drivers.
pub struct Driver {
    pub instance: Arc<TwoStageInstance>,
    config: RunConfig,
    sigma_max: f64,
    z_alpha: f64,
    schedule: Schedule,
    pool: DualPool,
    validation: ValidationStream,
    x_current: Vec<f64>,
    m: usize,
    n: usize,
    ell: usize,
    cumulative_inner: usize,
    cumulative_lp: usize,
    cumulative_validate_lp: usize,
    records: Vec<OuterRecord>,
    started: Instant,
    /// Stopping threshold once resolved; tightens the validation solves
    /// so their certified gap cannot block stopping.
    eps_resolved: Option<f64>,
}

impl Driver {
    pub fn new(instance: Arc<TwoStageInstance>, config: RunConfig) -> Result<Self, SequentialError> {
        config.validate().map_err(SequentialError::Config)?;
        let sigma_max = config.sigma_max.unwrap_or(1e7 * instance.cost_scale());
        if sigma_max <= config.sigma_min {
            return Err(SequentialError::Config("resolved sigma_max <= sigma_min".into()));
        }
        let schedule = Schedule::new(config.schedule).map_err(SequentialError::Config)?;
        // Cold-start iterate: first-stage LP minimizer (recourse ignored).
        let x0 = instance.first_stage_lp(&instance.c).solve(None)?.primal;
        let validation = ValidationStream::new(instance.model.clone(), config.seed);
        Ok(Driver {
            z_alpha: inverse_normal_cdf(1.0 - config.alpha),
            sigma_max,
            schedule,
            pool: DualPool::with_defaults(),
            validation,
            x_current: x0,
            m: config.m1,
            n: config.n1,
            ell: 0,
            cumulative_inner: 0,
            cumulative_lp: 0,
            cumulative_validate_lp: 0,
            records: Vec::new(),
            started: Instant::now(),
            eps_resolved: None,
            instance,
            config,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn records(&self) -> &[OuterRecord] {
        &self.records
    }

    pub fn pool(&self) -> &DualPool {
        &self.pool
    }

    pub fn elapsed_s(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    fn bundle_params(&self) -> BundleParams {
        BundleParams {
            alpha_lev: self.config.alpha_lev,
            cut_blocks: self.config.cut_blocks,
            max_cuts: 300,
            max_inner: self.config.max_inner,
        }
    }

    fn draw_solve_scenarios(&self) -> Result<Vec<crate::model::Scenario>, SequentialError> {
        let outer = if self.config.reuse_prefix { 0 } else { self.ell as u64 + 1 };
        Ok(sampling::draw_solve_sample(
            &self.instance.model,
            self.config.sampler,
            self.config.seed,
            outer,
            self.m,
        )?)
    }

    /// One outer iteration: draw, warm start, solve to the adaptive
    /// tolerance, harvest duals, record. Validation is separate.
    pub fn outer_step(&mut self) -> Result<usize, SequentialError> {
        let scenarios = self.draw_solve_scenarios()?;
        let problem = SamplePathProblem::new(self.instance.clone(), scenarios);

        let warm = if self.config.warmstart {
            let init = warmstart_master(&problem, &mut self.pool, &self.x_current)?;
            Some(init)
        } else {
            None
        };

        let rule = StopRule::Adaptive {
            nu: self.config.nu,
            sigma_min: self.config.sigma_min,
            sigma_max: self.sigma_max,
        };
        let start = self.x_current.clone();
        let result = bundle::solve_sample_path(
            &problem,
            &start,
            warm,
            rule,
            &self.bundle_params(),
            Some(&mut self.pool),
        )?;

        self.ell += 1;
        self.cumulative_inner += result.inner_iterations;
        self.cumulative_lp += result.lp_solves;
        self.x_current = result.x_hat.clone();
        self.records.push(OuterRecord {
            ell: self.ell,
            m: self.m,
            n: self.n,
            x_hat: result.x_hat,
            objective_estimate: result.objective,
            gap: result.gap,
            eps_inner: result.tolerance,
            sigma_hat: result.sigma_hat,
            inner_iterations: result.inner_iterations,
            hit_max_inner: result.hit_max_inner,
            lp_solves: result.lp_solves,
            cumulative_inner: self.cumulative_inner,
            cumulative_lp_solves: self.cumulative_lp,
            g_tilde: None,
            s_tilde: None,
            ci_upper: None,
            validate_lp_solves: 0,
            elapsed_s: self.elapsed_s(),
        });
        Ok(self.ell)
    }

    /// Advance the sample-size schedule using the record of the last
    /// completed outer iteration. Keeps the coupling `m = 2n` exact.
    pub fn advance_schedule(&mut self) {
        let inner = self.records.last().map_or(1, |r| r.inner_iterations);
        let mut m_next = self.schedule.next_sample_size(self.m, inner);
        if m_next % 2 == 1 {
            m_next += 1;
        }
        self.m = m_next;
        self.n = m_next / 2;
    }

    /// Validate the current candidate on the first `n` validation
    /// scenarios: solve the validation sample-path problem to relative
    /// gap 1e-4 (warm-started), then compute the gap estimate, its
    /// divisor-n variance, and the one-sided CI upper bound
    /// `G + z_alpha * max(s, ci_sd_floor) / sqrt(n)`.
    pub fn validate_candidate(&mut self) -> Result<ValidationResult, SequentialError> {
        let x_hat = self.x_current.clone();
        let scenarios = self.validation.prefix(self.n)?;
        let n = scenarios.len();
        let problem = SamplePathProblem::new(self.instance.clone(), scenarios);

        let warm = if self.config.warmstart {
            Some(warmstart_master(&problem, &mut self.pool, &x_hat)?)
        } else {
            None
        };
        // Relative gap 1e-4 by default, tightened to half the stopping
        // threshold when that is stricter.
        let last_objective =
            self.records.last().map_or(0.0, |r| r.objective_estimate.abs());
        let mut tol = 1e-4 * (1.0 + last_objective);
        if let Some(eps) = self.eps_resolved {
            tol = tol.min(0.5 * eps);
        }
        let result = bundle::solve_sample_path(
            &problem,
            &x_hat,
            warm,
            StopRule::AbsoluteGap(tol),
            &self.bundle_params(),
            Some(&mut self.pool),
        )?;
        let unreliable = result.hit_max_inner;
        let x_val_star = result.x_hat;
        let mut lp_solves = result.lp_solves;

        let q_cand = crate::model::evaluate_all(&self.instance, &x_hat, &problem.scenarios)?;
        let q_star = crate::model::evaluate_all(&self.instance, &x_val_star, &problem.scenarios)?;
        lp_solves += 2 * n;

        let (g_tilde, var_diff) =
            gap_estimators(&self.instance.c, &x_hat, &x_val_star, &q_cand, &q_star);
        let s_tilde = var_diff.sqrt();
        // The validation problem was solved only to a tolerance, so its
        // incumbent value sits above the sample-path minimum by up to
        // the certified gap; adding that gap keeps the interval an
        // upper bound on the gap against the exact sample-path optimum.
        let solve_gap = result.gap.max(0.0);
        let ci_upper = if unreliable {
            // Never stop on a validation solve that failed its own cap.
            f64::INFINITY
        } else {
            g_tilde
                + solve_gap
                + self.z_alpha * s_tilde.max(self.config.ci_sd_floor) / (n as f64).sqrt()
        };

        self.cumulative_validate_lp += lp_solves;
        if let Some(rec) = self.records.last_mut() {
            rec.g_tilde = Some(g_tilde);
            rec.s_tilde = Some(s_tilde);
            rec.ci_upper = Some(ci_upper);
            rec.validate_lp_solves = lp_solves;
            rec.elapsed_s = self.started.elapsed().as_secs_f64();
        }
        Ok(ValidationResult { g_tilde, s_tilde_sq: var_diff, x_val_star, solve_gap, ci_upper, lp_solves })
    }
}

/// The validation gap estimate and its divisor-n variance:
/// `G = c^T (x_hat - x_star) + mean_i [Q(x_hat, xi_i) - Q(x_star, xi_i)]`,
/// `s^2 = (1/n) sum_i [diff_i - mean diff]^2`,
/// from pointwise recourse values on one validation sample.
pub fn gap_estimators(
    c: &[f64],
    x_hat: &[f64],
    x_star: &[f64],
    q_hat: &[f64],
    q_star: &[f64],
) -> (f64, f64) {
    assert_eq!(q_hat.len(), q_star.len());
    let diffs: Vec<f64> = q_hat.iter().zip(q_star).map(|(a, b)| a - b).collect();
    let (mean_diff, var_diff) = crate::model::mean_and_variance(&diffs);
    let first_stage = dot(c, x_hat) - dot(c, x_star);
    (first_stage + mean_diff, var_diff)
}

/// Budgeted outer loop with no stopping test: runs until an explicit
/// budget (outer iterations, work, or wall time) is exhausted.
pub fn run_nonterminating(
    instance: Arc<TwoStageInstance>,
    config: RunConfig,
) -> Result<Trajectory, SequentialError> {
    let max_outer = config.max_outer;
    let max_work = config.max_work;
    let time_limit = config.time_limit_s;
    if max_outer.is_none() && max_work.is_none() && !time_limit.is_finite() {
        return Err(SequentialError::Config(
            "non-terminating run needs max_outer, max_work, or a finite time limit".into(),
        ));
    }
    let mut driver = Driver::new(instance, config)?;
    let reason;
    loop {
        driver.outer_step()?;
        if let Some(cap) = max_outer {
            if driver.ell >= cap {
                reason = BudgetReason::MaxOuter;
                break;
            }
        }
        if let Some(cap) = max_work {
            if driver.cumulative_lp >= cap {
                reason = BudgetReason::MaxWork;
                break;
            }
        }
        if driver.elapsed_s() >= time_limit {
            reason = BudgetReason::TimeLimit;
            break;
        }
        driver.advance_schedule();
    }
    Ok(Trajectory { records: driver.records, stopped: reason })
}

/// Finite-stopping driver: repeat outer iterations and candidate
/// validation until the one-sided CI upper bound falls below `eps`.
/// On wall-time expiry the report carries the smallest CI upper bound
/// seen across completed outer iterations, flagged `timed_out`.
pub fn run_with_stopping(
    instance: Arc<TwoStageInstance>,
    config: RunConfig,
) -> Result<RunReport, SequentialError> {
    let mut eps = config.eps;
    let eps_rel = config.eps_rel.unwrap_or(1e-3);
    let time_limit = config.time_limit_s;
    let max_outer = config.max_outer;
    let mut driver = Driver::new(instance, config)?;

    let mut timed_out = false;
    loop {
        driver.outer_step()?;
        if eps.is_none() {
            // Relative threshold is pinned by the first outer iteration.
            let first_objective = driver.records[0].objective_estimate;
            eps = Some(eps_rel * first_objective.abs().max(f64::MIN_POSITIVE));
        }
        driver.eps_resolved = eps;
        let validation = driver.validate_candidate()?;
        let stop_now = validation.ci_upper <= eps.unwrap();
        let out_of_time = driver.elapsed_s() >= time_limit;
        let out_of_outer = max_outer.is_some_and(|cap| driver.ell >= cap);
        if stop_now {
            break;
        }
        if out_of_time || out_of_outer {
            timed_out = out_of_time;
            break;
        }
        driver.advance_schedule();
    }

    // Normal exit reports the final iteration; a timeout reports the
    // iteration with the smallest CI upper bound seen.
    let best = if timed_out {
        driver
            .records
            .iter()
            .min_by(|a, b| {
                let ca = a.ci_upper.unwrap_or(f64::INFINITY);
                let cb = b.ci_upper.unwrap_or(f64::INFINITY);
                ca.partial_cmp(&cb).unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("at least one record")
            .clone()
    } else {
        driver.records.last().expect("at least one record").clone()
    };

    Ok(RunReport {
        instance: driver.instance.name.clone(),
        l_final: driver.ell,
        m_final: best.m,
        n_final: best.n,
        x_hat: best.x_hat.clone(),
        objective_estimate: best.objective_estimate,
        g_tilde: best.g_tilde.unwrap_or(f64::NAN),
        s_tilde: best.s_tilde.unwrap_or(f64::NAN),
        ci_upper: best.ci_upper.unwrap_or(f64::INFINITY),
        eps: eps.unwrap(),
        total_inner: driver.cumulative_inner,
        work_lp_solves: driver.cumulative_lp,
        validate_lp_solves: driver.cumulative_validate_lp,
        timed_out,
        elapsed_s: driver.elapsed_s(),
        records: driver.records,
    })
}
