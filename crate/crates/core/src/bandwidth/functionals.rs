//! Surface functionals on the boundary `M = {f = c}`:
//!
//! `A(f) = [∫_M f_(k*ν) f_(l*ν) / ‖∇f‖ dH]_{kl}` and `b(f) = ∫_M ‖∇f‖⁻¹ dH`,
//!
//! where `f_(k*ν)` is the `ν`-th partial derivative in coordinate `k`. They
//! are computed either from a known mixture (exact source) or from kernel
//! estimates with separate pilot bandwidths for the boundary, the gradient
//! and the curvature terms (plug-in source).

use rayon::prelude::*;

use crate::bandwidth::pilot::Pilots;
use crate::error::{Error, Result};
use crate::kde::{self, GridField, GridSpec, SortedKde1};
use crate::kernels::KernelSpec;
use crate::levelset::{self, LevelSetBoundary, DEFAULT_SCAN_RESOLUTION};
use crate::mixtures::MixtureModel;
use crate::sample::Sample;

/// Default resolution per axis of exact-density grids in two dimensions.
pub const EXACT_GRID_RES: usize = 1024;
/// Exact boundaries are searched within `mean ± EXACT_BOX_SDS · sd`.
pub const EXACT_BOX_SDS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionalSource {
    Exact,
    Plugin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceFunctionals {
    pub dim: usize,
    /// Row-major `d×d`.
    pub a: Vec<f64>,
    pub b: f64,
    pub source: FunctionalSource,
    /// Number of quadrature nodes on the boundary.
    pub nodes: usize,
}

/// Discretisation settings for functional estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalOptions {
    pub scan_resolution: usize,
    pub grid_res: usize,
    pub grid_margin: f64,
}

impl Default for FunctionalOptions {
    fn default() -> Self {
        Self {
            scan_resolution: DEFAULT_SCAN_RESOLUTION,
            grid_res: kde::DEFAULT_RES_2D,
            grid_margin: kde::DEFAULT_MARGIN,
        }
    }
}

/// Boundary `{f = c}` of a mixture: scan-and-bisect in one dimension,
/// marching squares on an exact-density grid of `grid_res` nodes per axis in
/// two.
pub fn exact_boundary(model: &MixtureModel, c: f64, grid_res: usize) -> Result<LevelSetBoundary> {
    let bx = model.support_box(EXACT_BOX_SDS);
    match model.dim() {
        1 => levelset::extract_d1(|x| model.density_unchecked(&[x]), c, bx[0], DEFAULT_SCAN_RESOLUTION),
        2 => {
            let spec = GridSpec::new(bx, vec![grid_res; 2])?;
            let field = GridField::from_fn(spec, |x| model.density_unchecked(x));
            levelset::extract_d2(&field, c)
        }
        d => Err(Error::arg(format!("boundary extraction supports d in {{1, 2}}, got {d}"))),
    }
}

fn accumulate(
    boundary: &LevelSetBoundary,
    dim: usize,
    source: FunctionalSource,
    // (gradient, ν-th partials) at a boundary point
    local: impl Fn(&[f64]) -> Result<(Vec<f64>, Vec<f64>)> + Sync,
) -> Result<SurfaceFunctionals> {
    if boundary.is_empty() {
        return Err(Error::EmptyLevelSet { level: boundary.level() });
    }
    let nodes = boundary.quadrature_nodes();
    let terms: Vec<(f64, Vec<f64>)> = nodes
        .par_iter()
        .map(|(x, w)| {
            let (grad, curv) = local(x)?;
            let inv = w / grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            let mut a = vec![0.0; dim * dim];
            for k in 0..dim {
                for l in 0..dim {
                    a[k * dim + l] = curv[k] * curv[l] * inv;
                }
            }
            Ok((inv, a))
        })
        .collect::<Result<_>>()?;
    let mut a = vec![0.0; dim * dim];
    let mut b = 0.0;
    for (bi, ai) in &terms {
        b += bi;
        for (x, y) in a.iter_mut().zip(ai) {
            *x += y;
        }
    }
    if !(b.is_finite() && a.iter().all(|v| v.is_finite())) {
        return Err(Error::Numerical("vanishing gradient on the boundary".into()));
    }
    Ok(SurfaceFunctionals {
        dim,
        a,
        b,
        source,
        nodes: nodes.len(),
    })
}

/// `A(f)` and `b(f)` from the true mixture.
pub fn exact_surface_functionals(model: &MixtureModel, c: f64, nu: u32, grid_res: usize) -> Result<SurfaceFunctionals> {
    let boundary = exact_boundary(model, c, grid_res)?;
    exact_functionals_on(model, &boundary, nu)
}

/// `A(f)` and `b(f)` from the true mixture on a given boundary.
pub fn exact_functionals_on(model: &MixtureModel, boundary: &LevelSetBoundary, nu: u32) -> Result<SurfaceFunctionals> {
    let d = model.dim();
    accumulate(boundary, d, FunctionalSource::Exact, |x| {
        let grad = model.gradient(x)?;
        let curv = (0..d).map(|k| model.partial(x, &vec![k; nu as usize])).collect::<Result<_>>()?;
        Ok((grad, curv))
    })
}

/// Plug-in `Â` and `b̂`: the boundary of `f̂` at pilot `h0`, gradients at
/// `h1`, curvature terms at `h2`.
pub fn estimate_surface_functionals(sample: &Sample, c: f64, spec: &KernelSpec, pilots: &Pilots) -> Result<SurfaceFunctionals> {
    estimate_surface_functionals_with(sample, c, spec, pilots, &FunctionalOptions::default())
}

pub fn estimate_surface_functionals_with(
    sample: &Sample,
    c: f64,
    spec: &KernelSpec,
    pilots: &Pilots,
    opts: &FunctionalOptions,
) -> Result<SurfaceFunctionals> {
    let boundary = estimated_boundary(sample, c, spec, &pilots.h0, opts)?;
    let d = sample.dim();
    let nu = spec.order as usize;
    accumulate(&boundary, d, FunctionalSource::Plugin, |x| {
        let grad = kde::kde_gradient_at(sample, &pilots.h1, spec, x)?;
        let curv = (0..d)
            .map(|k| kde::kde_partial_at(sample, &pilots.h2, spec, x, &vec![k; nu]))
            .collect::<Result<_>>()?;
        Ok((grad, curv))
    })
}

/// Boundary of `{f̂ >= c}` for the estimate at bandwidth `h`.
pub fn estimated_boundary(
    sample: &Sample,
    c: f64,
    spec: &KernelSpec,
    h: &kde::BandwidthVector,
    opts: &FunctionalOptions,
) -> Result<LevelSetBoundary> {
    match sample.dim() {
        1 => {
            let fast = SortedKde1::new(sample, h[0], spec)?;
            levelset::extract_d1(|x| fast.density(x), c, fast.support(), opts.scan_resolution)
        }
        2 => {
            let grid = GridSpec::around_sample(sample, h, opts.grid_margin, opts.grid_res)?;
            let field = kde::kde_grid(sample, h, spec, &grid)?;
            levelset::extract_d2(&field, c)
        }
        d => Err(Error::arg(format!("surface functionals support d in {{1, 2}}, got {d}"))),
    }
}
