//! The risk-optimal plug-in bandwidth.
//!
//! The asymptotic excess risk of `{f̂_h >= c}` is
//! `m̃(h) = Q(h^ν; κ_ν² A(f), c b(f) ‖K‖₂²/n, ν)` with `‖K‖₂²` the squared
//! norm of the `d`-dimensional product kernel. The selector estimates `A`
//! and `b`, minimises `Q` and returns `h = (u*)^{1/ν}`.

use crate::bandwidth::functionals::{self, FunctionalOptions, SurfaceFunctionals};
use crate::bandwidth::pilot::{pilot_bandwidths, Pilots};
use crate::bandwidth::q::{q_minimize, QProblem};
use crate::error::{Error, Result};
use rayon::prelude::*;

use crate::kde::{self, BandwidthVector};
use crate::kernels::KernelSpec;
use crate::mixtures::Level;
use crate::sample::Sample;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSelection {
    pub h: BandwidthVector,
    pub u: Vec<f64>,
    pub problem: QProblem,
    pub functionals: SurfaceFunctionals,
    pub pilots: Option<Pilots>,
}

/// `(κ_ν² A, c b ‖K‖₂² / n, ν)`.
pub fn q_problem_for(functionals: &SurfaceFunctionals, c: f64, spec: &KernelSpec, n: usize) -> Result<QProblem> {
    if n == 0 {
        return Err(Error::arg("sample size must be positive"));
    }
    let k2 = spec.kappa_nu * spec.kappa_nu;
    let l2 = spec.l2_norm_sq_1d.powi(functionals.dim as i32);
    QProblem::new(
        functionals.a.iter().map(|v| k2 * v).collect(),
        c * functionals.b * l2 / n as f64,
        spec.order,
    )
}

/// `m̃(h)` for given surface functionals.
pub fn m_tilde(h: &BandwidthVector, functionals: &SurfaceFunctionals, c: f64, spec: &KernelSpec, n: usize) -> Result<f64> {
    let p = q_problem_for(functionals, c, spec, n)?;
    let u: Vec<f64> = h.as_slice().iter().map(|v| v.powi(spec.order as i32)).collect();
    p.value(&u)
}

/// Minimiser of `m̃` for given surface functionals.
pub fn optimal_from_functionals(
    functionals: &SurfaceFunctionals,
    c: f64,
    spec: &KernelSpec,
    n: usize,
) -> Result<OptimalSelection> {
    let problem = q_problem_for(functionals, c, spec, n)?;
    let u = q_minimize(&problem)?;
    let h = BandwidthVector::new(u.iter().map(|v| v.powf(1.0 / f64::from(spec.order))).collect())?;
    Ok(OptimalSelection {
        h,
        u,
        problem,
        functionals: functionals.clone(),
        pilots: None,
    })
}

/// Plug-in selector: pilots, then `Â`, `b̂`, then the minimiser of `Q`.
pub fn select_optimal(sample: &Sample, level: Level, spec: &KernelSpec) -> Result<OptimalSelection> {
    select_optimal_with(sample, level, spec, &FunctionalOptions::default())
}

pub fn select_optimal_with(
    sample: &Sample,
    level: Level,
    spec: &KernelSpec,
    opts: &FunctionalOptions,
) -> Result<OptimalSelection> {
    let pilots = pilot_bandwidths(sample, spec)?;
    let f = functionals::estimate_surface_functionals_with(sample, level.c, spec, &pilots, opts)?;
    let mut sel = optimal_from_functionals(&f, level.c, spec, sample.len())?;
    sel.pilots = Some(pilots);
    Ok(sel)
}

/// Level `ĉ(τ)` from data alone: the `τ`-quantile of `f̂(X_i)` under the
/// boundary pilot `h0`, the empirical counterpart of the coverage rule.
pub fn sample_hdr_level(sample: &Sample, tau: f64, spec: &KernelSpec) -> Result<Level> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::arg(format!("tau must lie in (0, 1), got {tau}")));
    }
    let h0 = pilot_bandwidths(sample, spec)?.h0;
    let mut values: Vec<f64> = sample
        .points()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|x| kde::kde_at(sample, &h0, spec, x))
        .collect::<Result<_>>()?;
    values.sort_by(f64::total_cmp);
    let k = ((tau * values.len() as f64).floor() as usize).min(values.len() - 1);
    let mut level = Level::new(values[k])?;
    level.tau = Some(tau);
    Ok(level)
}
