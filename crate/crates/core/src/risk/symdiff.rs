//! The error `e(h) = λ_g(L Δ L̂)` between `L = {f >= c}` and `L̂ = {f̂ >= c}`.
//!
//! On a grid every node stands for the cell around it and the error is the
//! midpoint rule over nodes where `f` and `f̂` fall on different sides of `c`.
//! In one dimension the error is computed exactly up to root finding: the
//! line is cut at the crossings of both functions and `g` is integrated by
//! adaptive quadrature over the pieces that belong to exactly one set.

use rayon::prelude::*;

use crate::bandwidth::functionals::EXACT_BOX_SDS;
use crate::error::{check_dim, Error, Result};
use crate::kde::{BandwidthVector, GridField, GridSpec, SortedKde1, DEFAULT_MARGIN};
use crate::levelset::{self, DEFAULT_SCAN_RESOLUTION};
use crate::mixtures::MixtureModel;
use crate::quad;
use crate::risk::weight::WeightFunction;
use crate::sample::Sample;

/// Default resolution per axis of error grids.
pub const DEFAULT_ERROR_RES: usize = 1024;
/// Scan step of a [`LineEstimate`] built from a kernel estimate, as a
/// fraction of the bandwidth.
pub const LINE_SCAN_STEP: f64 = 0.25;

/// A one-dimensional estimate: a function, an interval outside of which it is
/// below any positive level, and the scan resolution used to find its
/// crossings on that interval.
pub struct LineEstimate<'a> {
    f: Box<dyn Fn(f64) -> f64 + Sync + 'a>,
    pub support: (f64, f64),
    pub scan_resolution: usize,
}

impl<'a> LineEstimate<'a> {
    pub fn new(f: impl Fn(f64) -> f64 + Sync + 'a, support: (f64, f64), scan_resolution: usize) -> Self {
        Self {
            f: Box::new(f),
            support,
            scan_resolution,
        }
    }

    /// Scans the kernel estimate with step `LINE_SCAN_STEP · h`.
    pub fn from_sorted(kde: &'a SortedKde1) -> Self {
        let support = kde.support();
        let step = LINE_SCAN_STEP * kde.bandwidth();
        let res = ((support.1 - support.0) / step).ceil() as usize + 1;
        Self::new(move |x| kde.density(x), support, res.max(2))
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }
}

/// An estimate `f̂` in one of the two supported representations.
pub enum Estimate<'a> {
    Grid(&'a GridField),
    Line(LineEstimate<'a>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymDiffError {
    pub value: f64,
    /// Grid nodes (or line pieces) in the symmetric difference.
    pub cells: usize,
    /// The grid sees no difference although `f̂` differs from `f` next to the
    /// true boundary; the value is then unreliable.
    pub resolution_warning: bool,
}

/// `λ_g(L Δ L̂)` with the exact `f` from `model`.
pub fn sym_diff_error(model: &MixtureModel, c: f64, estimate: &Estimate, g: &WeightFunction) -> Result<SymDiffError> {
    check_level(c)?;
    match estimate {
        Estimate::Grid(field) => {
            check_dim(model.dim(), field.dim())?;
            let truth = GridField::from_fn(field.spec.clone(), |x| model.density_unchecked(x));
            sym_diff_grid(&truth, field, c, g)
        }
        Estimate::Line(line) => {
            check_dim(1, model.dim())?;
            let bx = model.support_box(EXACT_BOX_SDS)[0];
            sym_diff_scanned(
                (&|x| model.density_unchecked(&[x]), bx, DEFAULT_SCAN_RESOLUTION),
                (&|x| line.eval(x), line.support, line.scan_resolution),
                c,
                |x| g.value(model.density_unchecked(&[x])),
            )
        }
    }
}

/// Midpoint rule over the nodes where `truth` and `estimate` disagree about
/// `>= c`; `g` is evaluated at the true density.
pub fn sym_diff_grid(truth: &GridField, estimate: &GridField, c: f64, g: &WeightFunction) -> Result<SymDiffError> {
    check_level(c)?;
    if truth.spec != estimate.spec {
        return Err(Error::arg("truth and estimate live on different grids"));
    }
    let spec = &truth.spec;
    let cell: f64 = (0..spec.dim()).map(|j| spec.step(j)).product();
    let mut value = 0.0;
    let mut cells = 0;
    for (t, e) in truth.values.iter().zip(&estimate.values) {
        if (*t >= c) != (*e >= c) {
            value += g.value(*t);
            cells += 1;
        }
    }
    let resolution_warning = cells == 0 && differs_near_boundary(truth, estimate, c);
    Ok(SymDiffError {
        value: value * cell,
        cells,
        resolution_warning,
    })
}

// Some node adjacent to a sign change of `truth − c` carries a different
// estimate value.
fn differs_near_boundary(truth: &GridField, estimate: &GridField, c: f64) -> bool {
    let spec = &truth.spec;
    let d = spec.dim();
    let mut strides = vec![1usize; d];
    for j in (0..d.saturating_sub(1)).rev() {
        strides[j] = strides[j + 1] * spec.resolution[j + 1];
    }
    (0..spec.len()).any(|flat| {
        let idx = spec.unravel(flat);
        (0..d).any(|j| {
            if idx[j] + 1 >= spec.resolution[j] {
                return false;
            }
            let next = flat + strides[j];
            (truth.values[flat] >= c) != (truth.values[next] >= c)
                && (truth.values[flat] != estimate.values[flat] || truth.values[next] != estimate.values[next])
        })
    })
}

/// `∫_{A Δ B} w` for `A = {f >= c}`, `B = {f̂ >= c}` within `interval`.
///
/// Crossings of both functions are located by scanning `scan_resolution`
/// points and bisecting; membership of each piece between consecutive
/// crossings is decided at its midpoint.
pub fn sym_diff_line(
    f: impl Fn(f64) -> f64,
    fhat: impl Fn(f64) -> f64,
    c: f64,
    interval: (f64, f64),
    scan_resolution: usize,
    w: impl Fn(f64) -> f64,
) -> Result<SymDiffError> {
    sym_diff_scanned((&f, interval, scan_resolution), (&fhat, interval, scan_resolution), c, w)
}

// Each function is scanned on its own interval, outside of which it is
// taken to be below `c`.
type Scanned<'a> = (&'a dyn Fn(f64) -> f64, (f64, f64), usize);

fn sym_diff_scanned(truth: Scanned, est: Scanned, c: f64, w: impl Fn(f64) -> f64) -> Result<SymDiffError> {
    let (f, fhat) = (truth.0, est.0);
    let lo = truth.1 .0.min(est.1 .0);
    let hi = truth.1 .1.max(est.1 .1);
    let mut cuts: Vec<f64> = vec![lo, hi, truth.1 .0, truth.1 .1, est.1 .0, est.1 .1];
    for (g, interval, res) in [truth, est] {
        cuts.extend(levelset::extract_d1(g, c, interval, res)?.crossings().iter().map(|x| x.x));
    }
    cuts.sort_by(f64::total_cmp);
    let mut value = 0.0;
    let mut cells = 0;
    for pair in cuts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b <= a {
            continue;
        }
        let mid = 0.5 * (a + b);
        if (f(mid) >= c) != (fhat(mid) >= c) {
            value += quad::integrate(&w, a, b, 1e-300, 1e-10)?;
            cells += 1;
        }
    }
    Ok(SymDiffError {
        value,
        cells,
        resolution_warning: false,
    })
}

/// Union of the model's search box and the sample box padded by
/// `DEFAULT_MARGIN · max(h)`, with `res` nodes per axis.
pub fn error_grid(model: &MixtureModel, sample: &Sample, h: &BandwidthVector, res: usize) -> Result<GridSpec> {
    check_dim(model.dim(), sample.dim())?;
    let around = GridSpec::around_sample(sample, h, DEFAULT_MARGIN, 2)?;
    let bounds = model
        .support_box(EXACT_BOX_SDS)
        .into_iter()
        .zip(around.bounds)
        .map(|((a, b), (c, d))| (a.min(c), b.max(d)))
        .collect();
    GridSpec::new(bounds, vec![res; model.dim()])
}

/// Exact density on every node of `spec`.
pub fn truth_grid(model: &MixtureModel, spec: &GridSpec) -> Result<GridField> {
    check_dim(model.dim(), spec.dim())?;
    Ok(GridField::from_fn(spec.clone(), |x| model.density_unchecked(x)))
}

/// `∫_{I} w` over `I = {lo <= f <= hi}` within `interval`, splitting every
/// piece into panels no wider than `panel` and applying a 15-point Kronrod
/// rule to each. Returns `None` when `I` is empty.
pub(crate) fn integrate_over_band(
    f: impl Fn(f64) -> f64,
    (lo, hi): (f64, f64),
    interval: (f64, f64),
    scan_resolution: usize,
    panel: f64,
    w: impl Fn(f64) -> f64 + Sync,
) -> Result<Option<f64>> {
    let lower = levelset::extract_d1(&f, lo, interval, scan_resolution)?;
    let upper = levelset::extract_d1(&f, hi, interval, scan_resolution)?;
    let mut cuts: Vec<f64> = vec![interval.0, interval.1];
    cuts.extend(lower.crossings().iter().map(|x| x.x));
    cuts.extend(upper.crossings().iter().map(|x| x.x));
    cuts.sort_by(f64::total_cmp);
    let pieces: Vec<(f64, f64)> = cuts
        .windows(2)
        .filter(|p| p[1] > p[0])
        .filter(|p| {
            let v = f(0.5 * (p[0] + p[1]));
            v >= lo && v <= hi
        })
        .map(|p| (p[0], p[1]))
        .collect();
    if pieces.is_empty() {
        return Ok(None);
    }
    let parts: Vec<f64> = pieces
        .par_iter()
        .map(|&(a, b)| quad::composite_gk15(&w, a, b, ((b - a) / panel).ceil() as usize))
        .collect();
    Ok(Some(parts.iter().sum()))
}

fn check_level(c: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::arg(format!("level must be positive, got {c}")));
    }
    Ok(())
}
