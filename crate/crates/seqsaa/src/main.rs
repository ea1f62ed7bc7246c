//! Experiment command line: instance generation, single solves with the
//! finite stopping rule, replication studies, rate experiments, and the
//! perturbed-minimizer verification harness.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 timed out,
//! 4 numerical failure.

use clap::{Args, Parser, Subcommand};
use seqsaa::bench::{
    self, resolve_instance, GeneratorSpec, GroundTruth, GroundTruthCache, ReplicationTable,
};
use seqsaa::model::InstanceJson;
use seqsaa::sequential::{run_with_stopping, RunConfig, RunReport, ScheduleSpec, SequentialError};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "seqsaa", version, about = "Adaptive sequential SAA for two-stage stochastic LPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance file from a generator spec.
    Generate {
        /// Generator spec JSON file.
        #[arg(long)]
        spec: PathBuf,
        /// Output instance JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the stopping algorithm once; report JSON on stdout plus
    /// trajectory.csv and the resolved config beside it.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Also compute the true gap per outer iteration (needs a finite
        /// support within the oracle caps).
        #[arg(long)]
        true_gap: bool,
    },
    /// Replication study; emits summary.csv and replications.csv.
    Study {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Work-complexity rate regression across schedules; emits rates.csv.
    Rates {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Verify the perturbed-minimizer bounds on the built-in families.
    LemmaCheck {
        #[arg(long, default_value_t = 20)]
        k_max: usize,
    },
}

/// Flag overrides applied on top of the config file.
#[derive(Args, Clone)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    eps_rel: Option<f64>,
    /// Schedule spec, e.g. `linear:100`, `geometric:1.5`,
    /// `dynamic:1.05:3:1.5`, `polynomial:100:1`.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    time_limit_s: Option<f64>,
    /// Disable the dual-pool warm start.
    #[arg(long)]
    no_warmstart: bool,
}

fn parse_schedule(text: &str) -> Result<ScheduleSpec, String> {
    let parts: Vec<&str> = text.split(':').collect();
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("bad number '{s}': {e}"));
    match parts.as_slice() {
        ["linear", d] => Ok(ScheduleSpec::Linear { delta: num(d)? as usize }),
        ["geometric", c1] => Ok(ScheduleSpec::Geometric { c1: num(c1)? }),
        ["dynamic", c0, ch, c1] => {
            Ok(ScheduleSpec::Dynamic { c0: num(c0)?, ch: num(ch)?, c1_init: num(c1)? })
        }
        ["polynomial", c0, p] => Ok(ScheduleSpec::Polynomial { c0: num(c0)?, p: num(p)? }),
        _ => Err(format!("unrecognized schedule '{text}'")),
    }
}

impl Overrides {
    fn apply(&self, mut cfg: RunConfig) -> Result<RunConfig, String> {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(threads) = self.threads {
            cfg.threads = threads;
        }
        if let Some(eps) = self.eps {
            cfg.eps = Some(eps);
        }
        if let Some(eps_rel) = self.eps_rel {
            cfg.eps_rel = Some(eps_rel);
        }
        if let Some(ref s) = self.schedule {
            cfg.schedule = parse_schedule(s)?;
        }
        if let Some(ref s) = self.sampler {
            cfg.sampler = match s.as_str() {
                "iid" => seqsaa::sampling::SamplerChoice::Iid,
                "antithetic" => seqsaa::sampling::SamplerChoice::Antithetic,
                "lhs" => seqsaa::sampling::SamplerChoice::Lhs,
                other => return Err(format!("unknown sampler '{other}'")),
            };
        }
        if let Some(m) = self.max_outer {
            cfg.max_outer = Some(m);
        }
        if let Some(t) = self.time_limit_s {
            cfg.time_limit_s = t;
        }
        if self.no_warmstart {
            cfg.warmstart = false;
        }
        Ok(cfg)
    }
}

/// Study / rates configuration.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyConfig {
    base: RunConfig,
    replications: usize,
    /// Schedule sweep; defaults to the base schedule alone.
    #[serde(default)]
    schedules: Vec<ScheduleSpec>,
    /// Compare against the ground truth (coverage column).
    #[serde(default)]
    true_gap: bool,
    /// Outer-iteration budget for rate runs.
    #[serde(default = "default_rate_outer")]
    max_outer: usize,
    /// Leading outer iterations excluded from rate fits.
    #[serde(default)]
    burn_in: usize,
}

fn default_rate_outer() -> usize {
    12
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(classify(&e))
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Sequential(#[from] SequentialError),
    #[error(transparent)]
    Bench(#[from] bench::BenchError),
}

fn classify(e: &CliError) -> u8 {
    fn numerical(s: &SequentialError) -> bool {
        matches!(
            s,
            SequentialError::Lp(seqsaa::lp::LpError::NumericalFailure { .. })
                | SequentialError::Bundle(seqsaa::bundle::BundleError::Lp(
                    seqsaa::lp::LpError::NumericalFailure { .. }
                ))
                | SequentialError::Bundle(seqsaa::bundle::BundleError::Numerical(_))
        )
    }
    match e {
        CliError::Usage(_) | CliError::Io(_) | CliError::Json(_) => 2,
        CliError::Sequential(s) => {
            if numerical(s) {
                4
            } else if matches!(s, SequentialError::Config(_)) {
                2
            } else {
                1
            }
        }
        CliError::Bench(b) => match b {
            bench::BenchError::Io(_) | bench::BenchError::Json(_) => 2,
            bench::BenchError::Sequential(s) if numerical(s) => 4,
            bench::BenchError::Sequential(SequentialError::Config(_)) => 2,
            _ => 1,
        },
    }
}

fn setup_threads(threads: usize) {
    // One global pool; a single failure here means it was already built.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Generate { spec, out } => cmd_generate(&spec, &out),
        Command::Solve { config, out_dir, overrides, true_gap } => {
            cmd_solve(&config, &out_dir, &overrides, true_gap)
        }
        Command::Study { config, out_dir, threads } => cmd_study(&config, &out_dir, threads),
        Command::Rates { config, out_dir, threads } => cmd_rates(&config, &out_dir, threads),
        Command::LemmaCheck { k_max } => cmd_lemma_check(k_max),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(CliError::Json)
}

fn cmd_generate(spec_path: &Path, out: &Path) -> Result<ExitCode, CliError> {
    let spec: GeneratorSpec = read_json(spec_path)?;
    let instance = bench::generate_deak_like(&spec)
        .map_err(|e| CliError::Usage(format!("invalid generator spec: {e}")))?;
    let dto = InstanceJson::from_instance(&instance);
    std::fs::write(out, serde_json::to_string_pretty(&dto)?)?;
    eprintln!("wrote {} ({}x{} first stage, {}x{} second stage)",
        out.display(), instance.n1, instance.r1, instance.n2, instance.r2);
    Ok(ExitCode::SUCCESS)
}

fn echo_config(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.resolved.json"), serde_json::to_string_pretty(cfg)?)?;
    Ok(())
}

fn write_trajectory(
    dir: &Path,
    report: &RunReport,
    seed: u64,
    gaps: Option<&[f64]>,
) -> Result<(), CliError> {
    let mut out = String::from("run_id,l,m_l,n_l,inner_iters,lp_count,G,eps_l,ci_upper,true_gap\n");
    for (i, rec) in report.records.iter().enumerate() {
        let ci = rec.ci_upper.map(|v| v.to_string()).unwrap_or_default();
        let tg = gaps.and_then(|g| g.get(i)).map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "run-{seed},{},{},{},{},{},{},{},{},{}\n",
            rec.ell, rec.m, rec.n, rec.inner_iterations, rec.lp_solves, rec.gap, rec.eps_inner,
            ci, tg
        ));
    }
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("trajectory.csv"), out)?;
    Ok(())
}

fn cmd_solve(
    config_path: &Path,
    out_dir: &Path,
    overrides: &Overrides,
    with_true_gap: bool,
) -> Result<ExitCode, CliError> {
    let cfg: RunConfig = read_json(config_path)?;
    let cfg = overrides.apply(cfg).map_err(CliError::Usage)?;
    cfg.validate().map_err(|m| CliError::Usage(format!("invalid config: {m}")))?;
    setup_threads(cfg.threads);
    let instance = Arc::new(resolve_instance(&cfg.instance)?);
    echo_config(out_dir, &cfg)?;

    let seed = cfg.seed;
    let report = run_with_stopping(instance.clone(), cfg)?;

    let gaps: Option<Vec<f64>> = if with_true_gap {
        let cache = GroundTruthCache::from_env();
        let truth = cache.get(&instance)?;
        let mut gaps = Vec::with_capacity(report.records.len());
        for rec in &report.records {
            gaps.push(bench::true_gap(&instance, &rec.x_hat, &truth)?);
        }
        Some(gaps)
    } else {
        None
    };
    write_trajectory(out_dir, &report, seed, gaps.as_deref())?;

    println!("{}", serde_json::to_string_pretty(&report)?);
    if report.timed_out {
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn schedule_label(s: &ScheduleSpec) -> String {
    match s {
        ScheduleSpec::Linear { delta } => format!("linear({delta})"),
        ScheduleSpec::Geometric { c1 } => format!("geometric({c1})"),
        ScheduleSpec::Dynamic { c0, ch, c1_init } => format!("dynamic({c0},{ch},{c1_init})"),
        ScheduleSpec::Polynomial { c0, p } => format!("polynomial({c0},{p})"),
    }
}

fn write_summary(dir: &Path, tables: &[(ScheduleSpec, ReplicationTable)]) -> Result<(), CliError> {
    // No wall-clock columns: CSV outputs are byte-reproducible across
    // thread counts; timings live in the JSON report.
    let mut out = String::from(
        "schedule,replications,failures,mean_inner_M,mean_L,mean_n_L,mean_ci_rel,coverage\n",
    );
    for (spec, t) in tables {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            schedule_label(spec),
            t.replications,
            t.failures,
            t.mean_total_inner,
            t.mean_l,
            t.mean_n_final,
            t.mean_ci_relative,
            if t.coverage.is_nan() { String::new() } else { t.coverage.to_string() },
        ));
    }
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("summary.csv"), out)?;
    Ok(())
}

fn write_replications(
    dir: &Path,
    tables: &[(ScheduleSpec, ReplicationTable)],
) -> Result<(), CliError> {
    let mut out = String::from(
        "schedule,seed,L,n_L,total_inner,work_lp,validate_lp,ci_upper,eps,true_gap,covered,timed_out\n",
    );
    for (spec, t) in tables {
        for row in &t.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                schedule_label(spec),
                row.seed,
                row.l_final,
                row.n_final,
                row.total_inner,
                row.work_lp_solves,
                row.validate_lp_solves,
                row.ci_upper,
                row.eps,
                row.true_gap.map(|v| v.to_string()).unwrap_or_default(),
                row.covered.map(|v| v.to_string()).unwrap_or_default(),
                row.timed_out,
            ));
        }
    }
    std::fs::write(dir.join("replications.csv"), out)?;
    Ok(())
}

fn load_truth_if(
    needed: bool,
    instance: &seqsaa::TwoStageInstance,
) -> Result<Option<GroundTruth>, CliError> {
    if !needed {
        return Ok(None);
    }
    let cache = GroundTruthCache::from_env();
    Ok(Some(cache.get(instance)?))
}

fn cmd_study(config_path: &Path, out_dir: &Path, threads: Option<usize>) -> Result<ExitCode, CliError> {
    let mut study: StudyConfig = read_json(config_path)?;
    if let Some(t) = threads {
        study.base.threads = t;
    }
    study
        .base
        .validate()
        .map_err(|m| CliError::Usage(format!("invalid config: {m}")))?;
    setup_threads(study.base.threads);
    let instance = Arc::new(resolve_instance(&study.base.instance)?);
    echo_config(out_dir, &study.base)?;
    let truth = load_truth_if(study.true_gap, &instance)?;

    let schedules = if study.schedules.is_empty() {
        vec![study.base.schedule]
    } else {
        study.schedules.clone()
    };
    let mut tables = Vec::new();
    for spec in schedules {
        let cfg = RunConfig { schedule: spec, ..study.base.clone() };
        let table =
            bench::run_replications(instance.clone(), &cfg, study.replications, truth.as_ref())?;
        tables.push((spec, table));
    }
    write_summary(out_dir, &tables)?;
    write_replications(out_dir, &tables)?;
    eprintln!("wrote {}/summary.csv and replications.csv", out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_rates(config_path: &Path, out_dir: &Path, threads: Option<usize>) -> Result<ExitCode, CliError> {
    let mut study: StudyConfig = read_json(config_path)?;
    if let Some(t) = threads {
        study.base.threads = t;
    }
    study
        .base
        .validate()
        .map_err(|m| CliError::Usage(format!("invalid config: {m}")))?;
    setup_threads(study.base.threads);
    let instance = Arc::new(resolve_instance(&study.base.instance)?);
    echo_config(out_dir, &study.base)?;
    let cache = GroundTruthCache::from_env();
    let truth = cache.get(&instance)?;

    let schedules = if study.schedules.is_empty() {
        vec![study.base.schedule]
    } else {
        study.schedules.clone()
    };
    let mut out = String::from("schedule,slope,stderr,points,replications\n");
    for spec in schedules {
        let cfg = RunConfig { schedule: spec, ..study.base.clone() };
        match bench::rate_experiment(
            instance.clone(),
            &cfg,
            study.replications,
            study.max_outer,
            study.burn_in,
            &truth,
        ) {
            Ok(rate) => {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    schedule_label(&spec),
                    rate.slope,
                    rate.stderr,
                    rate.points.len(),
                    rate.replications,
                ));
            }
            Err(bench::BenchError::InsufficientData { points, need }) => {
                eprintln!(
                    "{}: insufficient data ({points} usable points, need {need})",
                    schedule_label(&spec)
                );
                out.push_str(&format!("{},,,{points},{}\n", schedule_label(&spec), study.replications));
            }
            Err(e) => return Err(e.into()),
        }
    }
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("rates.csv"), out)?;
    eprintln!("wrote {}/rates.csv", out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_lemma_check(k_max: usize) -> Result<ExitCode, CliError> {
    let records = bench::lemma::standard_lemma_suite(k_max);
    let mut ok = true;
    for record in &records {
        let status = if record.all_pass { "pass" } else { "FAIL" };
        println!("{:?}: {status} ({} checks)", record.family, record.checks.len());
        ok &= record.all_pass;
    }
    println!("{}", serde_json::to_string_pretty(&records)?);
    if ok {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::FAILURE)
    }
}
