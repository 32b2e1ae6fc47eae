//! Least-squares cross-validation over diagonal bandwidths.
//!
//! `LSCV(h) = ∫ f̂² − (2/n) Σ_i f̂_{−i}(X_i)`, evaluated through pairwise sums:
//!
//! `LSCV(h) = (n² Πh)⁻¹ Σ_{i,j} Π_k (K*K)(Δ_k/h_k) − 2 (n(n−1) Πh)⁻¹ Σ_{i≠j} Π_k K(Δ_k/h_k)`.
//!
//! Row sums are computed in parallel and added in index order, so the value
//! does not depend on the number of threads.

use rayon::prelude::*;

use crate::bandwidth::neldermead;
use crate::bandwidth::pilot::normal_scale_bandwidth;
use crate::error::{Error, Result};
use crate::kde::BandwidthVector;
use crate::kernels::{KernelFamily, KernelSpec};
use crate::sample::Sample;

/// Smallest sample accepted by [`select_lscv`].
pub const MIN_LSCV_SAMPLE: usize = 20;
/// Nelder–Mead runs; each run after the first restarts from the best point.
pub const LSCV_RESTARTS: usize = 3;
/// Pairs further apart than this many bandwidths in the first coordinate
/// are skipped; their terms are below `e^{-36}` of the diagonal ones.
pub const LSCV_PAIR_RADIUS: f64 = 12.0;

/// Multiplicative search box around the normal-scale start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBox {
    pub lower: f64,
    pub upper: f64,
}

impl Default for SearchBox {
    fn default() -> Self {
        Self { lower: 0.01, upper: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LscvSelection {
    pub h: BandwidthVector,
    pub score: f64,
    /// The minimiser lies on the edge of the search box.
    pub boundary_warning: bool,
    pub evaluations: usize,
}

/// `LSCV(h)`.
pub fn lscv_score(sample: &Sample, h: &BandwidthVector, spec: &KernelSpec) -> Result<f64> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::arg("LSCV needs at least two points"));
    }
    crate::error::check_dim(sample.dim(), h.dim())?;
    let d = sample.dim();
    let inv_h: Vec<f64> = h.as_slice().iter().map(|v| 1.0 / v).collect();
    // sorted by the first coordinate so each row stops at the pair radius
    let sorted = sample.sorted_by_first();
    let pts = sorted.as_slice();
    let gaussian = spec.family == KernelFamily::Gaussian;
    // each row i sums the pairs j > i
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = &pts[i * d..(i + 1) * d];
            let (mut conv, mut kern) = (0.0, 0.0);
            for j in i + 1..n {
                let xj = &pts[j * d..(j + 1) * d];
                if (xj[0] - xi[0]) * inv_h[0] > LSCV_PAIR_RADIUS {
                    break;
                }
                if gaussian {
                    let mut s = 0.0;
                    for k in 0..d {
                        let t = (xi[k] - xj[k]) * inv_h[k];
                        s += t * t;
                    }
                    let e = (-0.25 * s).exp();
                    conv += e;
                    kern += e * e;
                } else {
                    let (mut pc, mut pk) = (1.0, 1.0);
                    for k in 0..d {
                        let t = (xi[k] - xj[k]) * inv_h[k];
                        pc *= spec.self_convolution(t);
                        pk *= spec.eval_unchecked(t, 0);
                    }
                    conv += pc;
                    kern += pk;
                }
            }
            (conv, kern)
        })
        .collect();
    let (mut conv, mut kern) = (0.0, 0.0);
    for (c, k) in rows {
        conv += c;
        kern += k;
    }
    let (conv0, kern_scale, conv_scale) = if gaussian {
        let c = (2.0 * std::f64::consts::PI.sqrt()).powi(-(d as i32));
        (c, (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0), c)
    } else {
        (spec.self_convolution(0.0).powi(d as i32), 1.0, 1.0)
    };
    let nf = n as f64;
    let prod_h = h.product();
    let integral = (nf * conv0 + 2.0 * conv_scale * conv) / (nf * nf * prod_h);
    let loo = 2.0 * (2.0 * kern_scale * kern) / (nf * (nf - 1.0) * prod_h);
    Ok(integral - loo)
}

/// Minimises LSCV by Nelder–Mead in `log h`, started from the normal-scale
/// bandwidth and confined to `[lower, upper] ×` that start.
pub fn select_lscv(sample: &Sample, spec: &KernelSpec, search: SearchBox) -> Result<LscvSelection> {
    if sample.len() < MIN_LSCV_SAMPLE {
        return Err(Error::arg(format!(
            "LSCV needs at least {MIN_LSCV_SAMPLE} points, got {}",
            sample.len()
        )));
    }
    if !(search.lower > 0.0 && search.lower < 1.0 && search.upper > 1.0) {
        return Err(Error::arg("search box must bracket the normal-scale start"));
    }
    let start = normal_scale_bandwidth(sample, spec, 0)?;
    let base: Vec<f64> = start.as_slice().iter().map(|v| v.ln()).collect();
    let (lo, hi) = (search.lower.ln(), search.upper.ln());
    let objective = |z: &[f64]| -> f64 {
        if z.iter().zip(&base).any(|(zi, bi)| zi - bi < lo || zi - bi > hi) {
            return f64::INFINITY;
        }
        let h = BandwidthVector::new(z.iter().map(|v| v.exp()).collect()).expect("finite log bandwidth");
        lscv_score(sample, &h, spec).unwrap_or(f64::INFINITY)
    };
    let mut best = neldermead::Minimum {
        x: base.clone(),
        value: objective(&base),
        evaluations: 1,
    };
    let mut evaluations = 1;
    let mut step = 0.5;
    for _ in 0..LSCV_RESTARTS {
        let run = neldermead::minimize(objective, &best.x, step, 1e-10, 1e-6, 400);
        evaluations += run.evaluations;
        if run.value <= best.value {
            best = run;
        }
        step *= 0.5;
    }
    let boundary_warning = best
        .x
        .iter()
        .zip(&base)
        .any(|(z, b)| (z - b - lo).abs() < 1e-3 || (z - b - hi).abs() < 1e-3);
    Ok(LscvSelection {
        h: BandwidthVector::new(best.x.iter().map(|v| v.exp()).collect())?,
        score: best.value,
        boundary_warning,
        evaluations,
    })
}
