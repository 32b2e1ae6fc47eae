//! Gaussian mixture ground truths.
//!
//! A [`MixtureModel`] is a finite mixture `Σ w_k N(μ_k, Σ_k)` on `R^d`. It
//! evaluates the density and any partial derivative of order up to four in
//! closed form, draws samples, and computes highest-density-region levels.
//!
//! Built-in models are addressed by id through [`MixtureModel::by_id`]:
//! `"M13"`, `"normal-d1"`, `"normal-d2"`, and the bivariate mixtures `"A"` to
//! `"L"` of Wand & Jones (1993). The latter are external-provenance data:
//! their parameters were transcribed into an embedded table and have not been
//! cross-checked against the original publication.

use std::path::Path;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{check_dim, Error, Result};
use crate::rng::{self, Rng};
use crate::sample::Sample;

const REGISTRY: &str = include_str!("registry.toml");

/// Highest order of partial derivative supported by [`MixtureModel::partial`].
pub const MAX_DERIVATIVE_ORDER: usize = 4;

/// Monte Carlo draws used by [`hdr_level`].
pub const HDR_DRAWS: usize = 1 << 22;
/// Fixed seed of the [`hdr_level`] draws.
pub const HDR_SEED: u64 = 0x6864_725f_6c65_7665;

#[derive(Debug, Clone)]
struct Component {
    weight: f64,
    mean: Vec<f64>,
    covariance: Vec<f64>,
    // lower Cholesky factor, row-major
    chol: Vec<f64>,
    precision: Vec<f64>,
    log_scale: f64,
}

/// Finite Gaussian mixture on `R^d`. Immutable once built.
#[derive(Debug, Clone)]
pub struct MixtureModel {
    dim: usize,
    components: Vec<Component>,
}

#[derive(Debug, Deserialize)]
struct ComponentConfig {
    weight: f64,
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct MixtureConfig {
    component: Vec<ComponentConfig>,
}

#[derive(Debug, Deserialize)]
struct RegistryEntry {
    #[allow(dead_code)]
    name: String,
    component: Vec<ComponentConfig>,
}

#[derive(Debug, Deserialize)]
struct Registry {
    models: std::collections::BTreeMap<String, RegistryEntry>,
}

impl MixtureModel {
    /// Builds a mixture from `(weight, mean, covariance)` triples.
    ///
    /// Weights must be positive and sum to one within `1e-12`; covariances
    /// must be symmetric positive definite.
    pub fn new(components: Vec<(f64, Vec<f64>, Vec<Vec<f64>>)>) -> Result<Self> {
        let dim = components
            .first()
            .map(|c| c.1.len())
            .ok_or_else(|| Error::arg("mixture needs at least one component"))?;
        if dim == 0 {
            return Err(Error::arg("mixture dimension must be positive"));
        }
        let total: f64 = components.iter().map(|c| c.0).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::arg(format!("mixture weights sum to {total}, not 1")));
        }
        let mut built = Vec::with_capacity(components.len());
        for (k, (weight, mean, cov)) in components.into_iter().enumerate() {
            if !(weight > 0.0 && weight.is_finite()) {
                return Err(Error::arg(format!("component {k}: weight {weight} is not positive")));
            }
            check_dim(dim, mean.len())?;
            check_dim(dim, cov.len())?;
            for row in &cov {
                check_dim(dim, row.len())?;
            }
            built.push(Component::new(weight, mean, &cov).map_err(|e| match e {
                Error::InvalidArgument(msg) => Error::arg(format!("component {k}: {msg}")),
                other => other,
            })?);
        }
        Ok(Self { dim, components: built })
    }

    /// Standard normal in `d` dimensions.
    pub fn standard_normal(dim: usize) -> Result<Self> {
        let cov = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::new(vec![(1.0, vec![0.0; dim], cov)])
    }

    /// The sharp-mode bivariate mixture
    /// `2/3 N(0, diag(1/4, 1)) + 1/3 N(0, diag(1/4, 1) / 50)`.
    pub fn m13() -> Self {
        Self::new(vec![
            (2.0 / 3.0, vec![0.0, 0.0], vec![vec![0.25, 0.0], vec![0.0, 1.0]]),
            (
                1.0 / 3.0,
                vec![0.0, 0.0],
                vec![vec![0.25 / 50.0, 0.0], vec![0.0, 1.0 / 50.0]],
            ),
        ])
        .expect("M13 parameters are valid")
    }

    /// Looks a model up by id: `M13`, `normal-d1`, `normal-d2`, `A`..`L`.
    pub fn by_id(id: &str) -> Result<Self> {
        match id {
            "M13" | "m13" => return Ok(Self::m13()),
            "normal-d1" => return Self::standard_normal(1),
            "normal-d2" => return Self::standard_normal(2),
            _ => {}
        }
        let registry: Registry =
            toml::from_str(REGISTRY).map_err(|e| Error::Config(format!("embedded registry: {e}")))?;
        let entry = registry
            .models
            .get(id)
            .ok_or_else(|| Error::UnknownModel(id.to_string()))?;
        Self::from_components(&entry.component)
    }

    /// Ids accepted by [`MixtureModel::by_id`].
    pub fn registry_ids() -> Vec<String> {
        let mut ids = vec!["M13".to_string(), "normal-d1".to_string(), "normal-d2".to_string()];
        if let Ok(registry) = toml::from_str::<Registry>(REGISTRY) {
            ids.extend(registry.models.into_keys());
        }
        ids
    }

    /// Parses a mixture from TOML text with one `[[component]]` table per
    /// component, each holding `weight`, `mean` and `covariance` (nested
    /// arrays).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: MixtureConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_components(&cfg.component)
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Registry id, or a path to a TOML mixture file.
    pub fn resolve(id_or_path: &str) -> Result<Self> {
        match Self::by_id(id_or_path) {
            Err(Error::UnknownModel(_)) if Path::new(id_or_path).is_file() => {
                Self::from_toml_file(id_or_path)
            }
            other => other,
        }
    }

    fn from_components(cfg: &[ComponentConfig]) -> Result<Self> {
        Self::new(
            cfg.iter()
                .map(|c| (c.weight, c.mean.clone(), c.covariance.clone()))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// `(weight, mean, covariance row-major)` of component `k`.
    pub fn component(&self, k: usize) -> (f64, &[f64], &[f64]) {
        let c = &self.components[k];
        (c.weight, &c.mean, &c.covariance)
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok(self.density_unchecked(x))
    }

    pub(crate) fn density_unchecked(&self, x: &[f64]) -> f64 {
        let mut y = [0.0; 8];
        let mut total = 0.0;
        for c in &self.components {
            let q = if self.dim <= 8 {
                c.quad_form(x, &mut y[..self.dim])
            } else {
                c.quad_form(x, &mut vec![0.0; self.dim])
            };
            total += (c.log_scale - 0.5 * q).exp();
        }
        total
    }

    /// Partial derivative `∂^q f / ∂x_{i_1} ... ∂x_{i_q}` with zero-based
    /// coordinate indices. An empty index returns the density.
    pub fn partial(&self, x: &[f64], index: &[usize]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        if index.len() > MAX_DERIVATIVE_ORDER {
            return Err(Error::arg(format!(
                "derivative order {} exceeds {MAX_DERIVATIVE_ORDER}",
                index.len()
            )));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= self.dim) {
            return Err(Error::arg(format!("coordinate index {bad} out of range for d = {}", self.dim)));
        }
        let mut y = vec![0.0; self.dim];
        let mut total = 0.0;
        for c in &self.components {
            let q = c.quad_form(x, &mut y);
            let phi = (c.log_scale - 0.5 * q).exp();
            total += phi * matching_sum(index, &y, &c.precision, self.dim);
        }
        Ok(total)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        (0..self.dim).map(|j| self.partial(x, &[j])).collect()
    }

    /// Hessian, row-major.
    pub fn hessian(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        let mut h = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let v = self.partial(x, &[i, j])?;
                h[i * d + j] = v;
                h[j * d + i] = v;
            }
        }
        Ok(h)
    }

    /// `n` draws, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        self.sample_with(n, &mut rng::seeded(seed))
    }

    /// `n` draws from a caller-owned generator: a categorical component
    /// choice, then `μ + L z` with `L` the Cholesky factor.
    pub fn sample_with(&self, n: usize, rng: &mut Rng) -> Result<Sample> {
        if n == 0 {
            return Err(Error::arg("sample size must be at least 1"));
        }
        let d = self.dim;
        let weights = WeightedIndex::new(self.components.iter().map(|c| c.weight))
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let single = self.components.len() == 1;
        let mut data = Vec::with_capacity(n * d);
        let mut z = vec![0.0; d];
        for _ in 0..n {
            let k = if single { 0 } else { weights.sample(rng) };
            let c = &self.components[k];
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            for i in 0..d {
                let mut v = c.mean[i];
                for j in 0..=i {
                    v += c.chol[i * d + j] * z[j];
                }
                data.push(v);
            }
        }
        Sample::new(d, data)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for c in &self.components {
            for (mi, ci) in m.iter_mut().zip(&c.mean) {
                *mi += c.weight * ci;
            }
        }
        m
    }

    /// Marginal standard deviation of each coordinate.
    pub fn marginal_sd(&self) -> Vec<f64> {
        let mean = self.mean();
        (0..self.dim)
            .map(|j| {
                let second: f64 = self
                    .components
                    .iter()
                    .map(|c| c.weight * (c.covariance[j * self.dim + j] + c.mean[j] * c.mean[j]))
                    .sum();
                (second - mean[j] * mean[j]).max(0.0).sqrt()
            })
            .collect()
    }

    /// Box `mean ± k·sd` per coordinate.
    pub fn support_box(&self, k: f64) -> Vec<(f64, f64)> {
        self.mean()
            .into_iter()
            .zip(self.marginal_sd())
            .map(|(m, s)| (m - k * s, m + k * s))
            .collect()
    }
}

impl Component {
    fn new(weight: f64, mean: Vec<f64>, cov: &[Vec<f64>]) -> Result<Self> {
        let d = mean.len();
        let scale = cov.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..d {
            for j in 0..i {
                if (cov[i][j] - cov[j][i]).abs() > 1e-12 * scale.max(1.0) {
                    return Err(Error::arg("covariance is not symmetric"));
                }
            }
        }
        if mean.iter().chain(cov.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::arg("non-finite mean or covariance"));
        }
        let m = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
        let chol = m
            .clone()
            .cholesky()
            .ok_or_else(|| Error::arg("covariance is not positive definite"))?;
        let l = chol.l();
        let log_det: f64 = 2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();
        let inv = chol.inverse();
        let precision = (0..d * d).map(|k| inv[(k / d, k % d)]).collect();
        let chol_flat = (0..d * d).map(|k| l[(k / d, k % d)]).collect();
        let log_scale =
            weight.ln() - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det;
        Ok(Self {
            weight,
            mean,
            covariance: (0..d * d).map(|k| cov[k / d][k % d]).collect(),
            chol: chol_flat,
            precision,
            log_scale,
        })
    }

    // Writes y = P (x - μ) and returns (x - μ)ᵀ P (x - μ).
    fn quad_form(&self, x: &[f64], y: &mut [f64]) -> f64 {
        let d = self.mean.len();
        let mut q = 0.0;
        for i in 0..d {
            let mut yi = 0.0;
            for j in 0..d {
                yi += self.precision[i * d + j] * (x[j] - self.mean[j]);
            }
            y[i] = yi;
            q += yi * (x[i] - self.mean[i]);
        }
        q
    }
}

// Σ over partial matchings of the index list: matched pairs contribute
// -P_ab, unmatched entries -y_i. Multiplied by φ this is ∂_I φ.
fn matching_sum(index: &[usize], y: &[f64], p: &[f64], d: usize) -> f64 {
    let Some((&first, rest)) = index.split_first() else {
        return 1.0;
    };
    let mut s = -y[first] * matching_sum(rest, y, p, d);
    for k in 0..rest.len() {
        let mut buf = [0usize; MAX_DERIVATIVE_ORDER];
        let mut m = 0;
        for (t, &v) in rest.iter().enumerate() {
            if t != k {
                buf[m] = v;
                m += 1;
            }
        }
        s -= p[first * d + rest[k]] * matching_sum(&buf[..m], y, p, d);
    }
    s
}

/// A density level `c`, optionally tagged with the HDR coverage parameter it
/// came from (`c = c(τ)` bounds a region of probability `1 - τ`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    pub c: f64,
    pub tau: Option<f64>,
}

impl Level {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::arg(format!("level must be positive, got {c}")));
        }
        Ok(Self { c, tau: None })
    }
}

/// Level `c(τ)`: the largest `y` with `P(f(X) >= y) >= 1 - τ`, found by
/// bisection on a Monte Carlo estimate of the coverage with [`HDR_DRAWS`]
/// draws under [`HDR_SEED`].
pub fn hdr_level(model: &MixtureModel, tau: f64) -> Result<Level> {
    hdr_level_with(model, tau, HDR_DRAWS, HDR_SEED)
}

pub fn hdr_level_with(model: &MixtureModel, tau: f64, draws: usize, seed: u64) -> Result<Level> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::arg(format!("tau must lie in (0, 1), got {tau}")));
    }
    let values = sorted_density_draws(model, draws, seed)?;
    let coverage = |y: f64| {
        let below = values.partition_point(|&v| v < y);
        (values.len() - below) as f64 / values.len() as f64
    };
    let target = 1.0 - tau;
    let (mut lo, mut hi) = (0.0, values[values.len() - 1] * (1.0 + 1e-12));
    if !(coverage(lo) >= target && coverage(hi) < target) {
        return Err(Error::Numerical("HDR bisection is not bracketed".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if coverage(mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Level { c: lo, tau: Some(tau) })
}

/// Monte Carlo estimate of `P(f(X) >= y)` for `X ~ f`.
pub fn coverage(model: &MixtureModel, y: f64, draws: usize, seed: u64) -> Result<f64> {
    let values = sorted_density_draws(model, draws, seed)?;
    let below = values.partition_point(|&v| v < y);
    Ok((values.len() - below) as f64 / values.len() as f64)
}

fn sorted_density_draws(model: &MixtureModel, draws: usize, seed: u64) -> Result<Vec<f64>> {
    let pts = model.sample(draws, seed)?;
    let mut values: Vec<f64> = pts
        .as_slice()
        .par_chunks_exact(model.dim())
        .map(|x| model.density_unchecked(x))
        .collect();
    values.sort_unstable_by(f64::total_cmp);
    Ok(values)
}
