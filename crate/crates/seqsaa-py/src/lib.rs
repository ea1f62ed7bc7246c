//! Python bindings: instances, scenario sampling, second-stage
//! evaluation, and the sequential solver with its stopping rule.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use seqsaa::bench;
use seqsaa::model::{self, InstanceJson, TwoStageInstance};
use seqsaa::rng::{Purpose, StreamKey};
use seqsaa::sampling;
use seqsaa::sequential::{self, RunConfig};
use std::sync::Arc;

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// A two-stage stochastic LP instance with fixed recourse.
#[pyclass(frozen)]
struct Instance {
    inner: Arc<TwoStageInstance>,
}

#[pymethods]
impl Instance {
    /// Built-in instance: "lands", "gbd", "pgp2" or "cep".
    #[staticmethod]
    fn named(name: &str) -> PyResult<Self> {
        let inst = model::named::by_name(name).map_err(value_err)?;
        Ok(Instance { inner: Arc::new(inst) })
    }

    /// Parse the instance JSON schema.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let dto: InstanceJson = serde_json::from_str(text).map_err(value_err)?;
        Ok(Instance { inner: Arc::new(dto.into_instance().map_err(value_err)?) })
    }

    /// Generate a synthetic instance.
    #[staticmethod]
    #[pyo3(signature = (n1, r1, n2, r2, support, seed, high_variance=false))]
    fn generate(
        n1: usize,
        r1: usize,
        n2: usize,
        r2: usize,
        support: usize,
        seed: u64,
        high_variance: bool,
    ) -> PyResult<Self> {
        let spec = bench::GeneratorSpec {
            n1,
            r1,
            n2,
            r2,
            support,
            variance: if high_variance {
                bench::VarianceScale::High
            } else {
                bench::VarianceScale::Normal
            },
            seed,
            stochastic_t: false,
        };
        let inst = bench::generate_deak_like(&spec).map_err(value_err)?;
        Ok(Instance { inner: Arc::new(inst) })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    /// `(n1, r1, n2, r2)`.
    fn dims(&self) -> (usize, usize, usize, usize) {
        (self.inner.n1, self.inner.r1, self.inner.n2, self.inner.r2)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&InstanceJson::from_instance(&self.inner)).map_err(runtime_err)
    }

    /// Size of the finite scenario support, when finite.
    fn support_size(&self) -> Option<usize> {
        self.inner.model.support_size()
    }

    /// Second-stage value and dual at `x` for draw `draw` of the iid
    /// solve stream `(seed, outer)`.
    fn evaluate_second_stage(
        &self,
        x: Vec<f64>,
        seed: u64,
        outer: u64,
        draw: usize,
    ) -> PyResult<(f64, Vec<f64>)> {
        let key = StreamKey::new(seed, Purpose::Solve, outer, 0);
        let scenarios = sampling::draw_iid(&self.inner.model, key, draw + 1);
        let sc = scenarios.into_iter().last().expect("draw+1 scenarios");
        let r = model::evaluate_second_stage(&self.inner, &x, &sc).map_err(runtime_err)?;
        Ok((r.value, r.dual))
    }

    /// Sample mean and divisor-m variance of the recourse cost at `x`
    /// over `n` scenarios from the chosen sampler.
    #[pyo3(signature = (x, seed, outer, n, sampler="iid"))]
    fn sample_average(
        &self,
        x: Vec<f64>,
        seed: u64,
        outer: u64,
        n: usize,
        sampler: &str,
    ) -> PyResult<(f64, f64)> {
        let choice = sampler_choice(sampler)?;
        let scenarios =
            sampling::draw_solve_sample(&self.inner.model, choice, seed, outer, n)
                .map_err(value_err)?;
        model::sample_average(&self.inner, &x, &scenarios).map_err(runtime_err)
    }

    /// Optimal value of the deterministic equivalent over `n` iid
    /// scenarios from stream `(seed, outer)`.
    fn extensive_form_value(&self, seed: u64, outer: u64, n: usize) -> PyResult<f64> {
        let key = StreamKey::new(seed, Purpose::Solve, outer, 0);
        let scenarios = sampling::draw_iid(&self.inner.model, key, n);
        let lp = model::build_extensive_form(&self.inner, &scenarios, model::EXTENSIVE_FORM_NONZERO_CAP)
            .map_err(value_err)?;
        let sol = lp.solve(None).map_err(runtime_err)?;
        Ok(sol.objective)
    }

    /// Certified optimum of the full-support problem.
    fn ground_truth(&self) -> PyResult<f64> {
        Ok(bench::compute_ground_truth(&self.inner).map_err(runtime_err)?.z_star)
    }
}

/// Final report of a stopping run.
#[pyclass(frozen)]
struct RunSummary {
    report: sequential::RunReport,
}

#[pymethods]
impl RunSummary {
    #[getter]
    fn l_final(&self) -> usize {
        self.report.l_final
    }
    #[getter]
    fn n_final(&self) -> usize {
        self.report.n_final
    }
    #[getter]
    fn x_hat(&self) -> Vec<f64> {
        self.report.x_hat.clone()
    }
    #[getter]
    fn objective_estimate(&self) -> f64 {
        self.report.objective_estimate
    }
    #[getter]
    fn ci_upper(&self) -> f64 {
        self.report.ci_upper
    }
    #[getter]
    fn eps(&self) -> f64 {
        self.report.eps
    }
    #[getter]
    fn total_inner(&self) -> usize {
        self.report.total_inner
    }
    #[getter]
    fn work_lp_solves(&self) -> usize {
        self.report.work_lp_solves
    }
    #[getter]
    fn timed_out(&self) -> bool {
        self.report.timed_out
    }
    /// Full report, including the per-iteration trajectory, as JSON.
    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.report).map_err(runtime_err)
    }
}

fn sampler_choice(name: &str) -> PyResult<sampling::SamplerChoice> {
    match name {
        "iid" => Ok(sampling::SamplerChoice::Iid),
        "antithetic" => Ok(sampling::SamplerChoice::Antithetic),
        "lhs" => Ok(sampling::SamplerChoice::Lhs),
        other => Err(value_err(format!("unknown sampler '{other}'"))),
    }
}

/// Run the sequential algorithm with the finite stopping rule.
///
/// `config_json` holds the run configuration; its `instance` key is
/// optional and ignored in favor of the passed instance.
#[pyfunction]
#[pyo3(signature = (instance, config_json="{}"))]
fn solve(instance: &Instance, config_json: &str) -> PyResult<RunSummary> {
    let mut value: serde_json::Value = serde_json::from_str(config_json).map_err(value_err)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| value_err("config must be a JSON object"))?;
    obj.insert(
        "instance".into(),
        serde_json::json!({ "name": instance.inner.name.clone() }),
    );
    if !obj.contains_key("schedule") {
        obj.insert("schedule".into(), serde_json::json!({ "geometric": { "c1": 1.5 } }));
    }
    let config: RunConfig = serde_json::from_value(value).map_err(value_err)?;
    config.validate().map_err(value_err)?;
    let report =
        sequential::run_with_stopping(instance.inner.clone(), config).map_err(runtime_err)?;
    Ok(RunSummary { report })
}

/// The adaptive inner tolerance
/// `nu * m^(-1/2) * clamp(sigma_hat, sigma_min, sigma_max)`.
#[pyfunction]
fn adaptive_tolerance(sigma_hat: f64, m: usize, nu: f64, sigma_min: f64, sigma_max: f64) -> f64 {
    seqsaa::bundle::adaptive_tolerance(sigma_hat, m, nu, sigma_min, sigma_max)
}

/// Standard normal quantile.
#[pyfunction]
fn inverse_normal_cdf(p: f64) -> PyResult<f64> {
    if !(0.0 < p && p < 1.0) {
        return Err(value_err("p must lie in (0, 1)"));
    }
    Ok(seqsaa::num::inverse_normal_cdf(p))
}

/// Run the perturbed-minimizer verification suite; returns True when
/// every bound holds.
#[pyfunction]
#[pyo3(signature = (k_max=20))]
fn lemma_check(k_max: usize) -> bool {
    bench::lemma::standard_lemma_suite(k_max).iter().all(|r| r.all_pass)
}

#[pymodule]
fn seqsaa_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Instance>()?;
    m.add_class::<RunSummary>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(adaptive_tolerance, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_normal_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(lemma_check, m)?)?;
    Ok(())
}
