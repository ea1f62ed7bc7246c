//! Deterministic verification harness for the perturbed-minimizer
//! bounds that drive the consistency analysis: for convex `f_k -> f`
//! with `sup |f_k - f_{k+1}| <= delta_{k+1}` and `eps_k`-optimal
//! minimizers `x_k`,
//!
//! (b)  `f(x_k) - v* <= 2 sum_{j>=k} delta_j + 2 sum_{j>=k} eps_j`, and
//!
//! (c)  under the growth condition `f(x) - v* >= tau dist(x, S*)^gamma`,
//!      `dist(x_k, S*) <= (2/tau (sum_{j>=k} delta_j + sum_{j>=k}
//!      eps_j))^(1/gamma)`.
//!
//! The harness constructs one-dimensional families on [-1, 1] where
//! everything is available in closed form, picks adversarially placed
//! `eps_k`-optimal points, and checks both bounds against analytic tail
//! sums with no slack beyond 1e-12.

use serde::Serialize;

/// Test families on `[-1, 1]`, all with `v* = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFamily {
    /// `f(x) = |x|`; growth tau = 1, gamma = 1; unique minimizer 0.
    Abs,
    /// `f(x) = x^2`; growth tau = 1, gamma = 2; unique minimizer 0.
    Square,
    /// `f(x) = max(0, |x| - 1/2)`; growth tau = 1, gamma = 1;
    /// minimizer set [-1/2, 1/2] (non-unique).
    PiecewiseFlat,
}

impl TestFamily {
    fn f(self, x: f64) -> f64 {
        match self {
            TestFamily::Abs => x.abs(),
            TestFamily::Square => x * x,
            TestFamily::PiecewiseFlat => (x.abs() - 0.5).max(0.0),
        }
    }

    fn growth(self) -> (f64, f64) {
        match self {
            TestFamily::Abs => (1.0, 1.0),
            TestFamily::Square => (1.0, 2.0),
            TestFamily::PiecewiseFlat => (1.0, 1.0),
        }
    }

    fn dist_to_solution_set(self, x: f64) -> f64 {
        match self {
            TestFamily::Abs | TestFamily::Square => x.abs(),
            TestFamily::PiecewiseFlat => (x.abs() - 0.5).max(0.0),
        }
    }

    /// Exact minimum of the perturbed `f_k(x) = f(x) + a x` on [-1, 1]
    /// for `0 <= a < 1`.
    fn perturbed_min(self, a: f64) -> f64 {
        match self {
            TestFamily::Abs => 0.0,
            TestFamily::Square => -a * a / 4.0,
            TestFamily::PiecewiseFlat => -a / 2.0,
        }
    }

    /// An exactly `eps`-suboptimal point of `f_k`, placed on the side
    /// that maximizes the distance from the unperturbed solution set.
    fn adversarial_point(self, a: f64, eps: f64) -> f64 {
        if eps == 0.0 {
            return match self {
                TestFamily::Abs => 0.0,
                TestFamily::Square => -a / 2.0,
                TestFamily::PiecewiseFlat => -0.5,
            };
        }
        match self {
            // Left branch has slope -(1 - a): x = -eps / (1 - a).
            TestFamily::Abs => (-eps / (1.0 - a)).max(-1.0),
            // (x + a/2)^2 = eps below the vertex.
            TestFamily::Square => (-a / 2.0 - eps.sqrt()).max(-1.0),
            // Left branch from the corner at -1/2.
            TestFamily::PiecewiseFlat => (-0.5 - eps / (1.0 - a)).max(-1.0),
        }
    }
}

/// Verification of one index `k`.
#[derive(Clone, Debug, Serialize)]
pub struct LemmaCheck {
    pub k: usize,
    pub objective_gap: f64,
    pub bound_objective: f64,
    pub distance: f64,
    pub bound_distance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaRecord {
    pub family: TestFamily,
    pub checks: Vec<LemmaCheck>,
    pub all_pass: bool,
}

const SLACK: f64 = 1e-12;

/// Run the harness for `k = 1..=k_max`.
///
/// `delta(j)` and `eps(j)` give the sequences; `delta_tail(k)` and
/// `eps_tail(k)` must return the exact analytic tails `sum_{j>=k}`.
/// The perturbation is `f_k = f + a_k x` with `a_k = delta(k+1)`, which
/// keeps `sup_[-1,1] |f_k - f_{k+1}| = |a_k - a_{k+1}| <= delta(k+1)`
/// whenever the delta sequence is nonincreasing (asserted).
pub fn lemma_prox_harness(
    family: TestFamily,
    delta: &dyn Fn(usize) -> f64,
    delta_tail: &dyn Fn(usize) -> f64,
    eps: &dyn Fn(usize) -> f64,
    eps_tail: &dyn Fn(usize) -> f64,
    k_max: usize,
) -> LemmaRecord {
    let (tau, gamma) = family.growth();
    let mut checks = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let a_k = delta(k + 1);
        assert!(
            (0.0..1.0).contains(&a_k),
            "perturbation slope must stay in [0,1) for these families"
        );
        // Construction premise: consecutive perturbations differ by at
        // most delta_{k+1} in sup norm.
        let drift = (a_k - delta(k + 2)).abs();
        assert!(
            drift <= delta(k + 1) + SLACK,
            "delta sequence must be nonincreasing for this construction"
        );

        let eps_k = eps(k);
        let x_k = family.adversarial_point(a_k, eps_k);
        // Sanity: x_k really is eps_k-optimal for f_k.
        let f_k = |x: f64| family.f(x) + a_k * x;
        let v_k = family.perturbed_min(a_k);
        assert!(
            f_k(x_k) - v_k <= eps_k + SLACK,
            "constructed point is not eps-optimal: {} > {}",
            f_k(x_k) - v_k,
            eps_k
        );

        let tail = delta_tail(k) + eps_tail(k);
        let objective_gap = family.f(x_k); // v* = 0
        let bound_objective = 2.0 * delta_tail(k) + 2.0 * eps_tail(k);
        let distance = family.dist_to_solution_set(x_k);
        let bound_distance = (2.0 / tau * tail).powf(1.0 / gamma);
        let pass = objective_gap <= bound_objective + SLACK
            && distance <= bound_distance + SLACK;
        checks.push(LemmaCheck {
            k,
            objective_gap,
            bound_objective,
            distance,
            bound_distance,
            pass,
        });
    }
    let all_pass = checks.iter().all(|c| c.pass);
    LemmaRecord { family, checks, all_pass }
}

/// The three standard families under geometric `delta_j = eps_j = 2^-j`.
pub fn standard_lemma_suite(k_max: usize) -> Vec<LemmaRecord> {
    let geo = |j: usize| 0.5_f64.powi(j as i32);
    // sum_{j >= k} 2^-j = 2^{1-k}.
    let geo_tail = |k: usize| 0.5_f64.powi(k as i32 - 1);
    [TestFamily::Abs, TestFamily::Square, TestFamily::PiecewiseFlat]
        .into_iter()
        .map(|family| lemma_prox_harness(family, &geo, &geo_tail, &geo, &geo_tail, k_max))
        .collect()
}
