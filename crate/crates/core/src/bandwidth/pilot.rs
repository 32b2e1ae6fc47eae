//! Normal-scale pilot bandwidths.
//!
//! For the `r`-th derivative the pilot in coordinate `j` is
//! `C_r σ̂_j n^{−1/(d+2ν+2r)}`, where `C_r` minimises the asymptotic
//! integrated squared error of all `r`-th order partials when the data are a
//! standard normal sample:
//!
//! `C_r^{d+2r+2ν} = (d+2r) R_r(K) / (2ν (κ_ν/ν!)² B_r)`
//!
//! with `R_r(K) = Σ_{r-tuples} Π_k R(K^{(m_k)})` and
//! `B_r = (4π)^{−d/2} E[|ω|^{2r} (Σ_k ω_k^ν)²]`, `ω ~ N(0, I/2)`.
//! The normal-scale rule is the zero-stage member of the direct plug-in
//! family; any rule with the same rates can replace it.

use crate::bandwidth::q::factorial;
use crate::error::{Error, Result};
use crate::kde::BandwidthVector;
use crate::kernels::KernelSpec;
use crate::sample::Sample;

/// Smallest sample accepted by [`pilot_bandwidths`].
pub const MIN_PILOT_SAMPLE: usize = 10;

/// Pilots for the boundary (`h0`), the gradient (`h1`) and the `ν`-th order
/// curvature terms (`h2`; with a second-order kernel these are second
/// derivatives).
#[derive(Debug, Clone, PartialEq)]
pub struct Pilots {
    pub h0: BandwidthVector,
    pub h1: BandwidthVector,
    pub h2: BandwidthVector,
}

/// Normal-reference constant `C_r` for a `d`-dimensional product kernel.
pub fn normal_scale_constant(spec: &KernelSpec, d: usize, r: usize) -> Result<f64> {
    let nu = spec.order as usize;
    let roughness: Vec<f64> = (0..=r).map(|m| spec.roughness(m)).collect::<Result<_>>()?;
    // R_r(K): ordered r-tuples grouped by their count vector
    let mut r_r = 0.0;
    for counts in compositions(r, d) {
        let mult = multinomial(r, &counts);
        r_r += mult * counts.iter().map(|&m| roughness[m]).product::<f64>();
    }
    // E[|ω|^{2r} (Σ ω_k^ν)²] = Σ_{counts} mult · E[Π ω_j^{2a_j} · (Σ ω_k^ν)²]
    let mut moment = 0.0;
    for counts in compositions(r, d) {
        let mult = multinomial(r, &counts);
        let mut inner = 0.0;
        for k in 0..d {
            for l in 0..d {
                let mut exps: Vec<usize> = counts.iter().map(|a| 2 * a).collect();
                exps[k] += nu;
                exps[l] += nu;
                inner += half_variance_moment(&exps);
            }
        }
        moment += mult * inner;
    }
    let b = (4.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0) * moment;
    let kappa = spec.kappa_nu / factorial(spec.order);
    let num = (d + 2 * r) as f64 * r_r;
    let den = 2.0 * nu as f64 * kappa * kappa * b;
    Ok((num / den).powf(1.0 / (d + 2 * r + 2 * nu) as f64))
}

// E[Π ω_j^{e_j}] for ω ~ N(0, I/2); zero unless every exponent is even.
fn half_variance_moment(exps: &[usize]) -> f64 {
    exps.iter()
        .map(|&e| {
            if e % 2 == 1 {
                return 0.0;
            }
            let m = e / 2;
            let double_fact: f64 = (1..=m).map(|k| (2 * k - 1) as f64).product();
            double_fact / 2f64.powi(m as i32)
        })
        .product()
}

fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    (0..=total)
        .flat_map(|first| {
            compositions(total - first, parts - 1).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

fn multinomial(total: usize, counts: &[usize]) -> f64 {
    factorial(total as u32) / counts.iter().map(|&c| factorial(c as u32)).product::<f64>()
}

/// Normal-scale pilot for derivatives of order `r`.
pub fn normal_scale_bandwidth(sample: &Sample, spec: &KernelSpec, r: usize) -> Result<BandwidthVector> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::arg("normal-scale bandwidth needs at least two points"));
    }
    let d = sample.dim();
    let sd = sample.std_dev();
    if let Some(j) = sd.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::arg(format!("coordinate {j} has zero sample variance")));
    }
    let c = normal_scale_constant(spec, d, r)?;
    let rate = (n as f64).powf(-1.0 / (d + 2 * spec.order as usize + 2 * r) as f64);
    BandwidthVector::new(sd.iter().map(|s| c * s * rate).collect())
}

/// The three pilots, at rates `n^{−1/(d+2ν+2r)}` for `r = 0, 1, ν`.
pub fn pilot_bandwidths(sample: &Sample, spec: &KernelSpec) -> Result<Pilots> {
    if sample.len() < MIN_PILOT_SAMPLE {
        return Err(Error::arg(format!(
            "pilot bandwidths need at least {MIN_PILOT_SAMPLE} points, got {}",
            sample.len()
        )));
    }
    Ok(Pilots {
        h0: normal_scale_bandwidth(sample, spec, 0)?,
        h1: normal_scale_bandwidth(sample, spec, 1)?,
        h2: normal_scale_bandwidth(sample, spec, spec.order as usize)?,
    })
}
