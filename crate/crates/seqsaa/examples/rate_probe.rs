use seqsaa::bench::{self, GeneratorSpec, GroundTruthCache, VarianceScale};
use seqsaa::sequential::{InstanceRef, RunConfig, ScheduleSpec};
use seqsaa::sampling::SamplerChoice;
use std::sync::Arc;

fn main() {
    let spec = GeneratorSpec {
        n1: 20, r1: 8, n2: 16, r2: 10, support: 9261,
        variance: VarianceScale::High, seed: 4242, stochastic_t: false,
    };
    let inst = Arc::new(bench::generate_deak_like(&spec).unwrap());
    let truth = GroundTruthCache::at("target/acceptance-cache").get(&inst).unwrap();
    println!("z* = {} ({})", truth.z_star, truth.method);
    let base = RunConfig {
        instance: InstanceRef::Deak(spec),
        sampler: SamplerChoice::Iid,
        schedule: ScheduleSpec::Geometric { c1: 1.5 },
        nu: 0.3, sigma_min: 1e-5, sigma_max: None, alpha: 0.1,
        eps: None, eps_rel: Some(1e-3), m1: 50, n1: 25, seed: 20240901,
        time_limit_s: f64::INFINITY, max_inner: 1000, alpha_lev: 0.5,
        cut_blocks: 1, warmstart: true, reuse_prefix: false, ci_sd_floor: 1e-5,
        max_outer: None, max_work: None, threads: 1,
    };
    for (label, spec_s, outers) in [
        ("geometric", ScheduleSpec::Geometric { c1: 1.5 }, 12usize),
        ("polynomial", ScheduleSpec::Polynomial { c0: 50.0, p: 1.0 }, 22),
    ] {
        let cfg = RunConfig { schedule: spec_s, ..base.clone() };
        match bench::rate_experiment(inst.clone(), &cfg, 20, outers, 2, &truth) {
            Ok(r) => {
                println!("{label}: slope {:.4} +- {:.4} ({} pts)", r.slope, r.stderr, r.points.len());
                for (w, g) in &r.points {
                    println!("   logW {:.3} logGap {:.4}  (W {:.0} gap {:.5})", w, g, w.exp(), g.exp());
                }
            }
            Err(e) => println!("{label}: {e}"),
        }
    }
}
