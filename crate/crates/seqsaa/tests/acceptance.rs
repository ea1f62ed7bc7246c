//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measured figures (run with `--nocapture` to see them).
//!
//! Heavier statistical criteria (coverage, rates, warm-start benefit)
//! share a persistent ground-truth cache under `target/acceptance-cache`.

use seqsaa::bench::{
    self, generate_deak_like, rate_experiment, run_replications, GeneratorSpec, GroundTruthCache,
    VarianceScale,
};
use seqsaa::bundle::{self, adaptive_tolerance, BundleParams, StopRule};
use seqsaa::model::{self, build_extensive_form, SamplePathProblem};
use seqsaa::num::clamp;
use seqsaa::rng::{KeyedRng, Purpose, StreamKey};
use seqsaa::sampling::{self, CoordDist, SamplerChoice, ScenarioModel};
use seqsaa::sequential::{
    gap_estimators, run_nonterminating, InstanceRef, RunConfig, ScheduleSpec,
};
use std::sync::Arc;
use std::time::Instant;

fn cache() -> GroundTruthCache {
    GroundTruthCache::at(concat!(env!("CARGO_MANIFEST_DIR"), "/../../target/acceptance-cache"))
}

fn base_config(instance: InstanceRef, m1: usize) -> RunConfig {
    RunConfig {
        instance,
        sampler: SamplerChoice::Iid,
        schedule: ScheduleSpec::Geometric { c1: 1.5 },
        nu: 1.0,
        sigma_min: 1e-5,
        sigma_max: None,
        alpha: 0.1,
        eps: None,
        eps_rel: Some(1e-3),
        m1,
        n1: m1 / 2,
        seed: 20240901,
        time_limit_s: 7200.0,
        max_inner: 1000,
        alpha_lev: 0.5,
        cut_blocks: 1,
        warmstart: true,
        reuse_prefix: false,
        ci_sd_floor: 1e-5,
        max_outer: None,
        max_work: None,
        threads: 1,
    }
}

fn desk_spec(idx: u64) -> GeneratorSpec {
    // Twenty varied desk-scale shapes, all with m-scenario extensive
    // forms comfortably solvable by the LP kernel.
    let n1 = [6, 10, 14, 20, 28, 40][(idx % 6) as usize];
    let r1 = (n1 / 4).max(2);
    let r2 = [4, 5, 6, 8, 10][(idx % 5) as usize];
    let n2 = r2 + [4, 6, 8][(idx % 3) as usize];
    GeneratorSpec {
        n1,
        r1,
        n2,
        r2,
        support: 125,
        variance: if idx % 4 == 0 { VarianceScale::High } else { VarianceScale::Normal },
        seed: 9000 + idx,
        stochastic_t: idx % 5 == 3,
    }
}

#[test]
fn criterion_01_oracle_equivalence() {
    let started = Instant::now();
    let mut worst_rel = 0.0f64;
    for idx in 0..20u64 {
        let inst = Arc::new(generate_deak_like(&desk_spec(idx)).unwrap());
        let m = 5 + ((idx as usize) * 7) % 46; // 5..=50
        let key = StreamKey::new(500 + idx, Purpose::Solve, 1, 0);
        let scenarios = sampling::draw_iid(&inst.model, key, m);
        let problem = SamplePathProblem::new(inst.clone(), scenarios.clone());

        let ef = build_extensive_form(&inst, &scenarios, model::EXTENSIVE_FORM_NONZERO_CAP)
            .unwrap()
            .solve(None)
            .unwrap();
        assert_eq!(ef.status, seqsaa::lp::LpStatus::Optimal);

        let start = inst.first_stage_lp(&inst.c).solve(None).unwrap().primal;
        let result = bundle::solve_sample_path(
            &problem,
            &start,
            None,
            StopRule::RelativeGap(1e-8),
            &BundleParams::default(),
            None,
        )
        .unwrap();
        assert!(!result.hit_max_inner, "instance {idx} hit the inner cap");
        let rel = (result.objective - ef.objective).abs() / (1.0 + ef.objective.abs());
        assert!(rel <= 1e-6, "instance {idx}: bundle {} vs EF {}", result.objective, ef.objective);
        worst_rel = worst_rel.max(rel);
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "criterion 1 took {elapsed:.1}s, budget 60s");
    println!(
        "ACCEPTANCE 1 oracle equivalence: PASS (20 instances, worst rel dev {worst_rel:.2e}, {elapsed:.1}s)"
    );
}

#[test]
fn criterion_02_inner_loop_contract() {
    let mut traces = 0usize;
    for idx in 0..6u64 {
        let inst = Arc::new(generate_deak_like(&desk_spec(idx)).unwrap());
        let m = 20 + (idx as usize) * 5;
        let key = StreamKey::new(700 + idx, Purpose::Solve, 1, 0);
        let scenarios = sampling::draw_iid(&inst.model, key, m);
        let problem = SamplePathProblem::new(inst.clone(), scenarios.clone());

        let z_star_m = build_extensive_form(&inst, &scenarios, model::EXTENSIVE_FORM_NONZERO_CAP)
            .unwrap()
            .solve(None)
            .unwrap()
            .objective;

        let (nu, sigma_min, sigma_max) = (1.0, 1e-5, 1e7 * inst.cost_scale());
        let start = inst.first_stage_lp(&inst.c).solve(None).unwrap().primal;
        let result = bundle::solve_sample_path(
            &problem,
            &start,
            None,
            StopRule::Adaptive { nu, sigma_min, sigma_max },
            &BundleParams::default(),
            None,
        )
        .unwrap();
        assert!(!result.hit_max_inner);

        let tol = 1e-6 * (1.0 + z_star_m.abs());
        for row in &result.trace {
            assert!(row.z_lower <= z_star_m + tol, "z_lower {} above z*_m {z_star_m}", row.z_lower);
            assert!(row.z_upper >= z_star_m - tol, "z_upper {} below z*_m {z_star_m}", row.z_upper);
            // The tolerance column must be the exact inner-termination
            // formula evaluated at the row's own sigma_hat.
            let recomputed =
                nu * (m as f64).sqrt().recip() * clamp(row.sigma_hat, sigma_min, sigma_max);
            assert_eq!(row.tolerance.to_bits(), recomputed.to_bits());
            traces += 1;
        }
        let last = result.trace.last().unwrap();
        assert!(last.gap <= last.tolerance, "exit gap above tolerance");
        assert_eq!(
            result.tolerance.to_bits(),
            adaptive_tolerance(result.sigma_hat, m, nu, sigma_min, sigma_max).to_bits()
        );
    }
    println!("ACCEPTANCE 2 inner-loop contract: PASS ({traces} trace rows checked)");
}

#[test]
fn criterion_03_coverage() {
    let started = Instant::now();
    let inst = Arc::new(model::named::by_name("lands").unwrap());
    let truth = cache().get(&inst).unwrap();
    let cfg = base_config(InstanceRef::Name("lands".into()), 100);
    let table = run_replications(inst, &cfg, 100, Some(&truth)).unwrap();
    assert_eq!(table.failures, 0, "replication failures");
    let covered = table.rows.iter().filter(|r| r.covered == Some(true)).count();
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 1800.0, "criterion 3 took {elapsed:.0}s, budget 1800s");
    assert!(
        covered >= 80,
        "coverage {covered}/100 below 80 (alpha = 0.1); mean CI rel {}",
        table.mean_ci_relative
    );
    println!(
        "ACCEPTANCE 3 coverage: PASS ({covered}/100 covered, mean L {:.1}, mean n_L {:.0}, {elapsed:.0}s)",
        table.mean_l, table.mean_n_final
    );
}

fn rate_instance() -> GeneratorSpec {
    // Support well above the largest sample size used in the rate runs,
    // so the finite support never gets resolved and the canonical
    // Monte Carlo decay stays visible throughout.
    GeneratorSpec {
        n1: 20,
        r1: 8,
        n2: 16,
        r2: 10,
        support: 4913,
        variance: VarianceScale::Normal,
        seed: 4242,
        stochastic_t: false,
    }
}

/// Shared startup iterations excluded from both rate fits.
const RATE_BURN_IN: usize = 2;

#[test]
fn criterion_04_geometric_rate() {
    let started = Instant::now();
    let inst = Arc::new(generate_deak_like(&rate_instance()).unwrap());
    let truth = cache().get(&inst).unwrap();
    let cfg = RunConfig {
        schedule: ScheduleSpec::Geometric { c1: 1.5 },
        ..base_config(InstanceRef::Deak(rate_instance()), 24)
    };
    let rate = rate_experiment(inst, &cfg, 20, 12, RATE_BURN_IN, &truth).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        rate.slope <= -0.40,
        "geometric slope {:.3} (stderr {:.3}) above -0.40",
        rate.slope,
        rate.stderr
    );
    println!(
        "ACCEPTANCE 4 geometric rate: PASS (slope {:.3} +- {:.3} over {} points, theory -0.5, {elapsed:.0}s)",
        rate.slope,
        rate.stderr,
        rate.points.len()
    );
}

#[test]
fn criterion_05_schedule_separation() {
    let started = Instant::now();
    let inst = Arc::new(generate_deak_like(&rate_instance()).unwrap());
    let truth = cache().get(&inst).unwrap();
    let base = base_config(InstanceRef::Deak(rate_instance()), 24);

    // Slopes at matched work: geometric 12 outers vs polynomial p = 1
    // run long enough to spend comparable cumulative work
    // (sum 24*l for l <= 22 matches sum of the geometric sizes).
    let geo_cfg = RunConfig { schedule: ScheduleSpec::Geometric { c1: 1.5 }, ..base.clone() };
    let poly_cfg = RunConfig {
        schedule: ScheduleSpec::Polynomial { c0: 24.0, p: 1.0 },
        ..base.clone()
    };
    let rate_geo = rate_experiment(inst.clone(), &geo_cfg, 20, 12, RATE_BURN_IN, &truth).unwrap();
    let rate_poly = rate_experiment(inst.clone(), &poly_cfg, 20, 22, RATE_BURN_IN, &truth).unwrap();
    assert!(
        rate_poly.slope >= rate_geo.slope + 0.10,
        "separation too small: poly {:.3} vs geo {:.3}",
        rate_poly.slope,
        rate_geo.slope
    );

    // Paired seeds: true gap at the largest common work budget.
    let mut poly_worse = 0usize;
    let reps = 20usize;
    for i in 0..reps {
        let seed =
            KeyedRng::new(StreamKey::new(base.seed, Purpose::Harness, 2, i as u64)).next_u64();
        let run = |cfg: &RunConfig, outers: usize| {
            let cfg = RunConfig {
                seed,
                max_outer: Some(outers),
                time_limit_s: f64::INFINITY,
                ..cfg.clone()
            };
            run_nonterminating(inst.clone(), cfg).unwrap()
        };
        let geo = run(&geo_cfg, 12);
        let poly = run(&poly_cfg, 22);
        let budget = geo
            .records
            .last()
            .unwrap()
            .cumulative_lp_solves
            .min(poly.records.last().unwrap().cumulative_lp_solves);
        let gap_at = |records: &[seqsaa::sequential::OuterRecord]| {
            let rec = records
                .iter()
                .rev()
                .find(|r| r.cumulative_lp_solves <= budget)
                .unwrap_or(&records[0]);
            bench::true_gap(&inst, &rec.x_hat, &truth).unwrap().max(0.0)
        };
        if gap_at(&poly.records) > gap_at(&geo.records) {
            poly_worse += 1;
        }
    }
    let frac = poly_worse as f64 / reps as f64;
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        frac >= 0.6,
        "polynomial schedule beat geometric too often: worse in only {poly_worse}/{reps}"
    );
    println!(
        "ACCEPTANCE 5 schedule separation: PASS (slopes geo {:.3} vs poly {:.3}, poly worse in {poly_worse}/{reps} paired seeds, {elapsed:.0}s)",
        rate_geo.slope, rate_poly.slope
    );
}

#[test]
fn criterion_06_warmstart_benefit() {
    let started = Instant::now();
    // 60x20 surrogate: first stage (60, 30), second stage (30, 20).
    let spec = GeneratorSpec {
        n1: 60,
        r1: 30,
        n2: 30,
        r2: 20,
        support: 1000,
        variance: VarianceScale::Normal,
        seed: 6020,
        stochastic_t: false,
    };
    let inst = Arc::new(generate_deak_like(&spec).unwrap());
    let base = RunConfig {
        eps_rel: Some(5e-4),
        ..base_config(InstanceRef::Deak(spec), 100)
    };
    let reps = 20usize;
    let mut warm_not_worse = 0usize;
    let mut total_warm = 0usize;
    let mut total_cold = 0usize;
    let mut total_outer = 0usize;
    for i in 0..reps {
        let seed =
            KeyedRng::new(StreamKey::new(base.seed, Purpose::Harness, 3, i as u64)).next_u64();
        let warm_cfg = RunConfig { seed, warmstart: true, ..base.clone() };
        let cold_cfg = RunConfig { seed, warmstart: false, ..base.clone() };
        let warm = seqsaa::sequential::run_with_stopping(inst.clone(), warm_cfg).unwrap();
        let cold = seqsaa::sequential::run_with_stopping(inst.clone(), cold_cfg).unwrap();
        total_warm += warm.work_lp_solves;
        total_cold += cold.work_lp_solves;
        total_outer += cold.l_final;
        if warm.work_lp_solves <= cold.work_lp_solves {
            warm_not_worse += 1;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    // The comparison is vacuous unless runs actually take multiple
    // outer iterations where the pool can pay off.
    assert!(total_outer >= 2 * reps, "runs too short for a warm-start comparison: {total_outer}");
    assert!(
        warm_not_worse * 10 >= reps * 7,
        "warm start reduced work in only {warm_not_worse}/{reps} seeds"
    );
    println!(
        "ACCEPTANCE 6 warm-start benefit: PASS (work never worse in {warm_not_worse}/{reps} seeds; total LP solves {total_warm} warm vs {total_cold} cold, {elapsed:.0}s)"
    );
}

#[test]
fn criterion_07_lemma_harness() {
    let records = bench::lemma::standard_lemma_suite(20);
    assert_eq!(records.len(), 3);
    for record in &records {
        assert!(record.all_pass, "{:?} failed: {:?}", record.family, record.checks);
        assert_eq!(record.checks.len(), 20);
        for check in &record.checks {
            assert!(check.objective_gap <= check.bound_objective + 1e-12);
            assert!(check.distance <= check.bound_distance + 1e-12);
        }
    }
    println!("ACCEPTANCE 7 lemma harness: PASS (3 families x 20 indices, both bounds)");
}

#[test]
fn criterion_08_estimator_fidelity() {
    let mut rng = KeyedRng::new(StreamKey::new(808, Purpose::Harness, 0, 0));
    // Eq.-style sample variance: divisor m, bit-for-bit against an
    // independent two-pass loop.
    for trial in 0..100 {
        let m = 2 + (trial % 17);
        let values: Vec<f64> = (0..m).map(|_| rng.uniform_in(-50.0, 50.0)).collect();
        let (mean, var) = model::mean_and_variance(&values);
        let mut acc = 0.0;
        for v in &values {
            acc += *v;
        }
        let brute_mean = acc / m as f64;
        let mut sq = 0.0;
        for v in &values {
            sq += (v - brute_mean) * (v - brute_mean);
        }
        let brute_var = sq / m as f64; // divisor m, not m-1
        assert_eq!(mean.to_bits(), brute_mean.to_bits());
        assert_eq!(var.to_bits(), brute_var.to_bits());
    }

    // Validation gap estimator on random small inputs.
    for trial in 0..100 {
        let n1 = 2 + (trial % 5);
        let n = 3 + (trial % 9);
        let c: Vec<f64> = (0..n1).map(|_| rng.uniform_in(-3.0, 3.0)).collect();
        let x_hat: Vec<f64> = (0..n1).map(|_| rng.uniform_in(0.0, 2.0)).collect();
        let x_star: Vec<f64> = (0..n1).map(|_| rng.uniform_in(0.0, 2.0)).collect();
        let q_hat: Vec<f64> = (0..n).map(|_| rng.uniform_in(0.0, 30.0)).collect();
        let q_star: Vec<f64> = (0..n).map(|_| rng.uniform_in(0.0, 30.0)).collect();
        let (g, s_sq) = gap_estimators(&c, &x_hat, &x_star, &q_hat, &q_star);

        // Brute-force recomputation straight from the definition.
        let mut first = 0.0;
        for j in 0..n1 {
            first += c[j] * x_hat[j];
        }
        let mut second = 0.0;
        for j in 0..n1 {
            second += c[j] * x_star[j];
        }
        let diffs: Vec<f64> = (0..n).map(|i| q_hat[i] - q_star[i]).collect();
        let mut dsum = 0.0;
        for d in &diffs {
            dsum += *d;
        }
        let dmean = dsum / n as f64;
        let g_brute = (first - second) + dmean;
        let mut vsum = 0.0;
        for d in &diffs {
            vsum += (d - dmean) * (d - dmean);
        }
        let s_brute = vsum / n as f64;
        assert_eq!(g.to_bits(), g_brute.to_bits());
        assert_eq!(s_sq.to_bits(), s_brute.to_bits());
    }
    println!("ACCEPTANCE 8 estimator fidelity: PASS (2 x 100 bit-exact recomputations)");
}

#[test]
fn criterion_09_determinism_across_threads() {
    let bin = env!("CARGO_BIN_EXE_seqsaa");
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("solve.json");
    std::fs::write(
        &cfg_path,
        serde_json::json!({
            "instance": {"name": "lands"},
            "schedule": {"geometric": {"c1": 1.5}},
            "m1": 40, "n1": 20, "seed": 99, "eps_rel": 5e-3,
            "max_inner": 300, "time_limit_s": 600.0
        })
        .to_string(),
    )
    .unwrap();
    let study_path = dir.path().join("study.json");
    std::fs::write(
        &study_path,
        serde_json::json!({
            "base": {
                "instance": {"name": "lands"},
                "schedule": {"geometric": {"c1": 1.5}},
                "m1": 30, "n1": 15, "seed": 7, "eps_rel": 5e-3,
                "max_inner": 300, "time_limit_s": 600.0
            },
            "replications": 3
        })
        .to_string(),
    )
    .unwrap();

    let run = |sub: &str, cfg: &std::path::Path, threads: &str, out: &str| {
        let out_dir = dir.path().join(out);
        let output = std::process::Command::new(bin)
            .args([
                sub,
                "--config",
                cfg.to_str().unwrap(),
                "--out-dir",
                out_dir.to_str().unwrap(),
                "--threads",
                threads,
            ])
            .output()
            .unwrap();
        assert!(output.status.success(), "{sub} failed: {}", String::from_utf8_lossy(&output.stderr));
        (out_dir, output.stdout)
    };

    let (solve1, stdout1) = run("solve", &cfg_path, "1", "solve-t1");
    let (solve8, stdout8) = run("solve", &cfg_path, "8", "solve-t8");
    let t1 = std::fs::read(solve1.join("trajectory.csv")).unwrap();
    let t8 = std::fs::read(solve8.join("trajectory.csv")).unwrap();
    assert_eq!(t1, t8, "trajectory.csv differs between thread counts");

    // Stdout reports agree on everything except wall time.
    let mut r1: serde_json::Value = serde_json::from_slice(&stdout1).unwrap();
    let mut r8: serde_json::Value = serde_json::from_slice(&stdout8).unwrap();
    for r in [&mut r1, &mut r8] {
        r.as_object_mut().unwrap().remove("elapsed_s");
        for rec in r["records"].as_array_mut().unwrap() {
            rec.as_object_mut().unwrap().remove("elapsed_s");
        }
    }
    assert_eq!(r1, r8, "solve reports differ between thread counts");

    let (study1, _) = run("study", &study_path, "1", "study-t1");
    let (study8, _) = run("study", &study_path, "8", "study-t8");
    for file in ["summary.csv", "replications.csv"] {
        let a = std::fs::read(study1.join(file)).unwrap();
        let b = std::fs::read(study8.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between thread counts");
    }
    println!("ACCEPTANCE 9 determinism: PASS (solve + study byte-identical at 1 and 8 threads)");
}

#[test]
fn criterion_10_sampler_properties() {
    // Latin hypercube occupancy: n = 1000, d = 10, every stratum hit
    // exactly once in every dimension.
    let d = 10;
    let n = 1000;
    let model = ScenarioModel {
        coords: vec![CoordDist::Uniform { lo: 0.0, hi: 1.0 }; d],
        h_base: vec![0.0; d],
        h_coeffs: (0..d).map(|i| (i, i, 1.0)).collect(),
        t_base: vec![],
        t_coeffs: vec![],
    };
    let key = StreamKey::new(1010, Purpose::Solve, 1, 0);
    let lhs = sampling::draw_lhs(&model, key, n);
    for dim in 0..d {
        let mut counts = vec![0usize; n];
        for sc in &lhs {
            let stratum = ((sc.h[dim] * n as f64).floor() as usize).min(n - 1);
            counts[stratum] += 1;
        }
        assert!(counts.iter().all(|&c| c == 1), "dimension {dim} occupancy broken");
    }

    // Antithetic reflection identity, exact on the uniform drivers.
    let anti = sampling::draw_antithetic(&model, key, 200).unwrap();
    for pair in anti.chunks(2) {
        for dim in 0..d {
            assert_eq!(pair[1].h[dim], 1.0 - pair[0].h[dim]);
        }
    }

    // iid frequency test at 3 sigma on a 3-point table, n = 1e5.
    let table = ScenarioModel {
        coords: vec![CoordDist::Discrete {
            values: vec![0.0, 1.0, 2.0],
            probs: vec![0.25, 0.45, 0.3],
        }],
        h_base: vec![0.0],
        h_coeffs: vec![(0, 0, 1.0)],
        t_base: vec![],
        t_coeffs: vec![],
    };
    let n_freq = 100_000;
    let sample = sampling::draw_iid(&table, StreamKey::new(2020, Purpose::Solve, 1, 0), n_freq);
    for (value, p) in [(0.0, 0.25), (1.0, 0.45), (2.0, 0.3)] {
        let freq =
            sample.iter().filter(|s| s.h[0] == value).count() as f64 / n_freq as f64;
        let band = 3.0 * (p * (1.0 - p) / n_freq as f64).sqrt();
        assert!((freq - p).abs() <= band, "value {value}: freq {freq} vs {p} +- {band}");
    }
    println!("ACCEPTANCE 10 sampler properties: PASS (LHS occupancy, antithetic identity, iid 3-sigma)");
}
