//! Reproducible Monte Carlo scenario generation.
//!
//! Everything is keyed: scenario `i` of outer iteration `l` is a pure
//! function of `(master_seed, purpose, l, i)`, so histories are identical
//! under any thread count and validation draws are independent of solve
//! draws. Latin hypercube draws additionally key one stratum permutation
//! per dimension.

use crate::model::{SamplerKind, Scenario, ScenarioId};
use crate::num::{clamp, inverse_normal_cdf};
use crate::rng::{KeyedRng, Purpose, StreamKey};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SamplingError {
    #[error("antithetic sampling needs an even sample size, got {0}")]
    OddSampleSize(usize),
    #[error("validation stream request decreased from {previous} to {requested}")]
    NonMonotoneRequest { previous: usize, requested: usize },
    #[error("empty sample request")]
    EmptyRequest,
}

/// Marginal distribution of one uniform driver coordinate.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordDist {
    /// Finite table; inverse-CDF lookup in listed order.
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    Uniform { lo: f64, hi: f64 },
    /// Normal with inverse-CDF truncation to `[lo, hi]`.
    TruncNormal { mean: f64, sd: f64, lo: f64, hi: f64 },
}

impl CoordDist {
    fn realize(&self, u: f64) -> f64 {
        match self {
            CoordDist::Discrete { values, probs } => {
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("nonempty table")
            }
            CoordDist::Uniform { lo, hi } => lo + u * (hi - lo),
            CoordDist::TruncNormal { mean, sd, lo, hi } => {
                let plo = normal_cdf((lo - mean) / sd);
                let phi = normal_cdf((hi - mean) / sd);
                let p = clamp(plo + u * (phi - plo), 1e-16, 1.0 - 1e-16);
                clamp(mean + sd * inverse_normal_cdf(p), *lo, *hi)
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            CoordDist::Discrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err("discrete table shape mismatch".into());
                }
                if probs.iter().any(|&p| p < 0.0) {
                    return Err("negative probability".into());
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(format!("discrete probabilities sum to {total}, not 1"));
                }
                Ok(())
            }
            CoordDist::Uniform { lo, hi } => {
                if lo.is_finite() && hi.is_finite() && lo <= hi {
                    Ok(())
                } else {
                    Err("bad uniform range".into())
                }
            }
            CoordDist::TruncNormal { sd, lo, hi, .. } => {
                if *sd > 0.0 && lo < hi && lo.is_finite() && hi.is_finite() {
                    Ok(())
                } else {
                    Err("bad truncated normal parameters".into())
                }
            }
        }
    }
}

/// Standard normal CDF by bisection on the quantile function; only used
/// at truncation endpoints so speed is irrelevant.
fn normal_cdf(z: f64) -> f64 {
    if z < -9.0 {
        return 1e-16;
    }
    if z > 9.0 {
        return 1.0 - 1e-16;
    }
    let (mut lo, mut hi) = (1e-16, 1.0 - 1e-16);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if inverse_normal_cdf(mid) < z {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Deterministic map from a uniform driver `u in [0,1)^d` to a
/// realization `(h, T)`: per-coordinate inverse CDF followed by affine
/// assembly of the right-hand side and the technology matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioModel {
    pub coords: Vec<CoordDist>,
    pub h_base: Vec<f64>,
    /// `(row, coord, coef)`: adds `coef * xi[coord]` to `h[row]`.
    #[serde(default)]
    pub h_coeffs: Vec<(usize, usize, f64)>,
    /// Deterministic technology entries `(row, col, value)`.
    #[serde(default)]
    pub t_base: Vec<(usize, usize, f64)>,
    /// `(row, col, coord, coef)`: adds `coef * xi[coord]` to `T[row,col]`.
    #[serde(default)]
    pub t_coeffs: Vec<(usize, usize, usize, f64)>,
}

impl ScenarioModel {
    /// A model with no randomness: fixed `h` and `T`.
    pub fn deterministic(h: Vec<f64>, t: Vec<(usize, usize, f64)>) -> Self {
        ScenarioModel {
            coords: Vec::new(),
            h_base: h,
            h_coeffs: Vec::new(),
            t_base: t,
            t_coeffs: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn t_base(&self) -> &[(usize, usize, f64)] {
        &self.t_base
    }

    pub fn validate(&self, r2: usize, n1: usize) -> Result<(), String> {
        if self.h_base.len() != r2 {
            return Err(format!("h_base has length {}, want r2 = {r2}", self.h_base.len()));
        }
        for c in &self.coords {
            c.validate()?;
        }
        let d = self.coords.len();
        for &(row, coord, _) in &self.h_coeffs {
            if row >= r2 || coord >= d {
                return Err(format!("h_coeffs entry ({row},{coord}) out of range"));
            }
        }
        for &(row, col, _) in &self.t_base {
            if row >= r2 || col >= n1 {
                return Err(format!("t_base entry ({row},{col}) out of range"));
            }
        }
        for &(row, col, coord, _) in &self.t_coeffs {
            if row >= r2 || col >= n1 || coord >= d {
                return Err(format!("t_coeffs entry ({row},{col},{coord}) out of range"));
            }
        }
        Ok(())
    }

    /// Map one uniform driver vector to a scenario.
    pub fn realize(&self, u: &[f64], id: ScenarioId) -> Scenario {
        debug_assert_eq!(u.len(), self.dim());
        let xi: Vec<f64> = self.coords.iter().zip(u).map(|(c, &ui)| c.realize(ui)).collect();
        self.realize_from_xi(&xi, id)
    }

    /// Assemble a scenario from already-realized coordinate values.
    pub fn realize_from_xi(&self, xi: &[f64], id: ScenarioId) -> Scenario {
        let mut h = self.h_base.clone();
        for &(row, coord, coef) in &self.h_coeffs {
            h[row] += coef * xi[coord];
        }
        let t_delta: Vec<(usize, usize, f64)> = self
            .t_coeffs
            .iter()
            .filter_map(|&(row, col, coord, coef)| {
                let v = coef * xi[coord];
                (v != 0.0).then_some((row, col, v))
            })
            .collect();
        Scenario { h, t_delta, id }
    }

    /// Size of the finite support, if every coordinate is discrete.
    pub fn support_size(&self) -> Option<usize> {
        let mut total: usize = 1;
        for c in &self.coords {
            match c {
                CoordDist::Discrete { values, .. } => {
                    total = total.checked_mul(values.len())?;
                }
                _ => return None,
            }
        }
        Some(total)
    }

    /// Enumerate the full finite support with probabilities, or `None`
    /// when the support is not finite or exceeds `cap`.
    pub fn enumerate_support(&self, cap: usize) -> Option<Vec<(Scenario, f64)>> {
        let size = self.support_size()?;
        if size > cap {
            return None;
        }
        let tables: Vec<(&[f64], &[f64])> = self
            .coords
            .iter()
            .map(|c| match c {
                CoordDist::Discrete { values, probs } => (values.as_slice(), probs.as_slice()),
                _ => unreachable!("support_size ensured discreteness"),
            })
            .collect();
        let mut out = Vec::with_capacity(size);
        let mut idx = vec![0usize; tables.len()];
        for k in 0..size {
            let mut xi = Vec::with_capacity(tables.len());
            let mut prob = 1.0;
            for (dimi, &(vals, probs)) in tables.iter().enumerate() {
                xi.push(vals[idx[dimi]]);
                prob *= probs[idx[dimi]];
            }
            let id = ScenarioId { sampler: SamplerKind::Support, outer: 0, draw: k as u64 };
            out.push((self.realize_from_xi(&xi, id), prob));
            // Odometer increment.
            for (dimi, &(vals, _)) in tables.iter().enumerate() {
                idx[dimi] += 1;
                if idx[dimi] < vals.len() {
                    break;
                }
                idx[dimi] = 0;
            }
        }
        Some(out)
    }
}

/// Raw uniform driver for scenario `draw` of stream `key`.
fn driver(model: &ScenarioModel, key: StreamKey, draw: u64) -> Vec<f64> {
    let mut rng = KeyedRng::new(key.with_draw(draw));
    (0..model.dim()).map(|_| rng.uniform()).collect()
}

/// `n` independent identically distributed scenarios.
pub fn draw_iid(model: &ScenarioModel, key: StreamKey, n: usize) -> Vec<Scenario> {
    (0..n)
        .map(|i| {
            let u = driver(model, key, i as u64);
            model.realize(
                &u,
                ScenarioId { sampler: SamplerKind::Iid, outer: key.outer, draw: i as u64 },
            )
        })
        .collect()
}

/// Antithetic pairs: position `2k` uses a fresh uniform vector `u_k`,
/// position `2k+1` uses the reflection `1 - u_k` componentwise.
pub fn draw_antithetic(
    model: &ScenarioModel,
    key: StreamKey,
    n: usize,
) -> Result<Vec<Scenario>, SamplingError> {
    if n % 2 != 0 {
        return Err(SamplingError::OddSampleSize(n));
    }
    let mut out = Vec::with_capacity(n);
    for k in 0..n / 2 {
        let u = driver(model, key, k as u64);
        let reflected: Vec<f64> = u.iter().map(|ui| 1.0 - ui).collect();
        out.push(model.realize(
            &u,
            ScenarioId { sampler: SamplerKind::Antithetic, outer: key.outer, draw: 2 * k as u64 },
        ));
        out.push(model.realize(
            &reflected,
            ScenarioId {
                sampler: SamplerKind::Antithetic,
                outer: key.outer,
                draw: 2 * k as u64 + 1,
            },
        ));
    }
    Ok(out)
}

/// Latin hypercube draw: in every dimension the `n` uniforms occupy each
/// stratum `[k/n, (k+1)/n)` exactly once, with independent permutations
/// across dimensions.
pub fn draw_lhs(model: &ScenarioModel, key: StreamKey, n: usize) -> Vec<Scenario> {
    assert!(n >= 1);
    let d = model.dim();
    let mut perms: Vec<Vec<usize>> = Vec::with_capacity(d);
    for dim in 0..d {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = KeyedRng::new(StreamKey::new(
            key.master_seed,
            Purpose::Permute,
            key.outer,
            dim as u64,
        ));
        rng.shuffle(&mut perm);
        perms.push(perm);
    }
    (0..n)
        .map(|i| {
            let jitter = driver(model, key, i as u64);
            let u: Vec<f64> = (0..d)
                .map(|dim| (perms[dim][i] as f64 + jitter[dim]) / n as f64)
                .collect();
            model.realize(&u, ScenarioId { sampler: SamplerKind::Lhs, outer: key.outer, draw: i as u64 })
        })
        .collect()
}

/// Which sampling scheme generates solve scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerChoice {
    Iid,
    Antithetic,
    Lhs,
}

/// Draw the solve sample for outer iteration `outer`.
pub fn draw_solve_sample(
    model: &ScenarioModel,
    choice: SamplerChoice,
    master_seed: u64,
    outer: u64,
    n: usize,
) -> Result<Vec<Scenario>, SamplingError> {
    if n == 0 {
        return Err(SamplingError::EmptyRequest);
    }
    let key = StreamKey::new(master_seed, Purpose::Solve, outer, 0);
    match choice {
        SamplerChoice::Iid => Ok(draw_iid(model, key, n)),
        SamplerChoice::Antithetic => draw_antithetic(model, key, n),
        SamplerChoice::Lhs => Ok(draw_lhs(model, key, n)),
    }
}

/// One fixed infinite iid stream for validation; calls return prefixes,
/// so the first `n` scenarios agree across all calls with argument >= n.
/// Validation is always iid regardless of the solve sampler.
pub struct ValidationStream {
    model: ScenarioModel,
    master_seed: u64,
    last_n: usize,
}

impl ValidationStream {
    pub fn new(model: ScenarioModel, master_seed: u64) -> Self {
        ValidationStream { model, master_seed, last_n: 0 }
    }

    /// First `n` elements of the stream; `n` must be positive and
    /// nondecreasing across calls.
    pub fn prefix(&mut self, n: usize) -> Result<Vec<Scenario>, SamplingError> {
        if n == 0 {
            return Err(SamplingError::EmptyRequest);
        }
        if n < self.last_n {
            return Err(SamplingError::NonMonotoneRequest { previous: self.last_n, requested: n });
        }
        self.last_n = n;
        let key = StreamKey::new(self.master_seed, Purpose::Validate, 0, 0);
        Ok(draw_iid(&self.model, key, n))
    }
}
