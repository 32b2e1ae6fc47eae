//! Monte Carlo checks of the asymptotic risk expressions. Every verifier
//! returns estimates and ratios; thresholds belong to the caller.
//!
//! Replication `i` draws its sample from `replication_rng(seed, i)`, and
//! per-replication results are combined in index order, so outputs do not
//! depend on the number of threads.

use rayon::prelude::*;

use crate::bandwidth::functionals::{exact_boundary, EXACT_BOX_SDS, EXACT_GRID_RES};
use crate::error::{check_dim, Error, Result};
use crate::kde::{self, BandwidthVector, GridField, SortedKde1};
use crate::kernels::KernelSpec;
use crate::levelset::{self, LevelSetBoundary, DEFAULT_SCAN_RESOLUTION};
use crate::mixtures::MixtureModel;
use crate::rng::{self, Rng};
use crate::risk::symdiff::{self, error_grid, sym_diff_error, Estimate, LineEstimate, DEFAULT_ERROR_RES};
use crate::risk::theory::{bias_term, theoretical_risk_on, variance_term, RiskForm, RiskMethod, RiskReport};
use crate::risk::weight::WeightFunction;
use crate::sample::Sample;

/// Below this value of `n h₁⋯h_d ‖h‖⁴ / log n` the bandwidth is flagged as
/// outside the regime of the almost-sure expansion.
pub const H1_WARNING_THRESHOLD: f64 = 1.0;
/// Fewest replications accepted for expectation checks.
pub const MIN_EXPECTATION_REPS: usize = 30;

/// `n h₁⋯h_d ‖h‖⁴ / log n`.
pub fn h1_statistic(n: usize, h: &BandwidthVector) -> f64 {
    let norm2: f64 = h.as_slice().iter().map(|v| v * v).sum();
    n as f64 * h.product() * norm2 * norm2 / (n as f64).ln()
}

/// Empirical mean error and variance of `f̂(x)` against `β_h(x)` and `s_n²`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseMoments {
    pub mean_error: f64,
    pub variance: f64,
    pub beta: f64,
    pub s2: f64,
    pub reps: usize,
}

pub fn verify_bias_variance(
    model: &MixtureModel,
    x: &[f64],
    n: usize,
    h: &BandwidthVector,
    spec: &KernelSpec,
    reps: usize,
    seed: u64,
) -> Result<PointwiseMoments> {
    check_dim(model.dim(), x.len())?;
    if reps < 2 {
        return Err(Error::arg("need at least two replications"));
    }
    let f = model.density(x)?;
    let values = replicate(reps, seed, |rng| {
        let s = model.sample_with(n, rng)?;
        kde::kde_at(&s, h, spec, x)
    })?;
    let mean = values.iter().sum::<f64>() / reps as f64;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    Ok(PointwiseMoments {
        mean_error: mean - f,
        variance,
        beta: bias_term(model, x, h, spec)?,
        s2: variance_term(f, h, spec, n)?,
        reps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem1Ratio {
    pub ratio: f64,
    /// `λ_g(L Δ L̂)`.
    pub lhs: f64,
    /// `(1+p)⁻¹ ∫_M g^(p) ‖∇f‖^{−p−1} |f̂ − f|^{p+1} dH`.
    pub rhs: f64,
    /// Both sides vanish (ratio reported as 1) or only the right side does.
    pub degenerate: bool,
    /// `h` fails the scaling check of [`H1_WARNING_THRESHOLD`].
    pub scaling_warning: bool,
}

/// Left and right sides of the first-order expansion for a given estimate.
pub fn theorem1_ratio(
    model: &MixtureModel,
    boundary: &LevelSetBoundary,
    g: &WeightFunction,
    estimate: &Estimate,
    fhat_at: impl Fn(&[f64]) -> f64 + Sync,
) -> Result<Theorem1Ratio> {
    let c = boundary.level();
    if boundary.is_empty() {
        return Err(Error::EmptyLevelSet { level: c });
    }
    let lhs = sym_diff_error(model, c, estimate, g)?.value;
    let p = g.p();
    let rhs = levelset::try_surface_integral(boundary, |x| {
        let grad = model.gradient(x)?.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff = (fhat_at(x) - model.density_unchecked(x)).abs();
        Ok(g.boundary_factor(grad) / grad.powf(p + 1.0) * diff.powf(p + 1.0))
    })?
    .value
        / (1.0 + p);
    let (ratio, degenerate) = match (lhs == 0.0, rhs == 0.0) {
        (true, true) => (1.0, true),
        (false, true) => (f64::INFINITY, true),
        _ => (lhs / rhs, false),
    };
    Ok(Theorem1Ratio {
        ratio,
        lhs,
        rhs,
        degenerate,
        scaling_warning: false,
    })
}

/// One sample of size `n` from `seed`, then [`theorem1_ratio`].
pub fn verify_theorem1_ratio(
    model: &MixtureModel,
    c: f64,
    g: &WeightFunction,
    n: usize,
    h: &BandwidthVector,
    spec: &KernelSpec,
    seed: u64,
) -> Result<Theorem1Ratio> {
    let boundary = exact_boundary(model, c, EXACT_GRID_RES)?;
    theorem1_for_sample(model, &boundary, g, n, h, spec, &mut rng::seeded(seed))
}

/// [`verify_theorem1_ratio`] for replications `0..reps` of `seed`.
pub fn theorem1_ratios(
    model: &MixtureModel,
    c: f64,
    g: &WeightFunction,
    n: usize,
    h: &BandwidthVector,
    spec: &KernelSpec,
    reps: usize,
    seed: u64,
) -> Result<Vec<Theorem1Ratio>> {
    let boundary = exact_boundary(model, c, EXACT_GRID_RES)?;
    replicate(reps, seed, |rng| theorem1_for_sample(model, &boundary, g, n, h, spec, rng))
}

fn theorem1_for_sample(
    model: &MixtureModel,
    boundary: &LevelSetBoundary,
    g: &WeightFunction,
    n: usize,
    h: &BandwidthVector,
    spec: &KernelSpec,
    rng: &mut Rng,
) -> Result<Theorem1Ratio> {
    check_dim(model.dim(), h.dim())?;
    let s = model.sample_with(n, rng)?;
    let mut r = with_estimate(model, &s, h, spec, |est| {
        theorem1_ratio(model, boundary, g, est, |x| kde::kde_at(&s, h, spec, x).unwrap_or(f64::NAN))
    })?;
    r.scaling_warning = h1_statistic(n, h) < H1_WARNING_THRESHOLD;
    Ok(r)
}

// The estimate in the representation used for error computation: a scanned
// sorted evaluator in one dimension, an error grid in two.
fn with_estimate<T>(
    model: &MixtureModel,
    s: &Sample,
    h: &BandwidthVector,
    spec: &KernelSpec,
    body: impl FnOnce(&Estimate) -> Result<T>,
) -> Result<T> {
    match s.dim() {
        1 => {
            let kde = SortedKde1::new(s, h[0], spec)?;
            let est = Estimate::Line(LineEstimate::from_sorted(&kde));
            body(&est)
        }
        2 => {
            let grid = error_grid(model, s, h, DEFAULT_ERROR_RES)?;
            let field = kde::kde_grid_truncated(s, h, spec, &grid)?;
            let est = Estimate::Grid(&field);
            body(&est)
        }
        d => Err(Error::arg(format!("risk verification supports d in {{1, 2}}, got {d}"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corollary1Outcome {
    /// Mean of the replication errors, with its standard error in
    /// `components["standard-error"]`.
    pub monte_carlo: RiskReport,
    pub formula: RiskReport,
    pub ratio: f64,
    /// Per-replication errors in index order.
    pub errors: Vec<f64>,
}

/// Mean `λ_g(L Δ L̂)` over `reps` samples against the exact L¹ expression.
pub fn verify_corollary1(
    model: &MixtureModel,
    c: f64,
    g: &WeightFunction,
    n: usize,
    h: &BandwidthVector,
    spec: &KernelSpec,
    reps: usize,
    seed: u64,
) -> Result<Corollary1Outcome> {
    if g.p() != 0.0 {
        return Err(Error::arg(format!("the L1 expansion needs a weight with p = 0, got {}", g.kind)));
    }
    if reps < MIN_EXPECTATION_REPS {
        return Err(Error::arg(format!("need at least {MIN_EXPECTATION_REPS} replications, got {reps}")));
    }
    check_dim(model.dim(), h.dim())?;
    let boundary = exact_boundary(model, c, EXACT_GRID_RES)?;
    let formula = theoretical_risk_on(model, &boundary, h, spec, n, RiskForm::L1Exact(*g))?;
    let errors = replicate(reps, seed, |rng| {
        let s = model.sample_with(n, rng)?;
        with_estimate(model, &s, h, spec, |est| Ok(sym_diff_error(model, c, est, g)?.value))
    })?;
    let monte_carlo = mean_report(&errors);
    let ratio = monte_carlo.value / formula.value;
    Ok(Corollary1Outcome {
        monte_carlo,
        formula,
        ratio,
        errors,
    })
}

fn mean_report(values: &[f64]) -> RiskReport {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    RiskReport {
        value: mean,
        components: [("standard-error".to_string(), (var / k).sqrt())].into(),
        method: RiskMethod::MonteCarlo,
        n_reps: Some(values.len()),
        nodes: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposition1Point {
    pub delta: f64,
    /// Mean of `λ_g(L Δ L̂)` with `g = |f − c|`.
    pub numerator: f64,
    /// Mean of `∫_{I(δ)} (f̂ − f)²`.
    pub denominator: f64,
    /// `2δ · numerator / denominator`.
    pub ratio: f64,
}

/// One replication of [`verify_proposition1`].
#[derive(Debug, Clone, PartialEq)]
pub struct Proposition1Replicate {
    /// `λ_g(L Δ L̂)`.
    pub numerator: f64,
    /// `∫_{I(δ)} (f̂ − f)²`, one per `δ`.
    pub denominators: Vec<f64>,
}

/// `2δ E λ_g(L Δ L̂) / E ∫_{I(δ)} (f̂ − f)²` for each `δ`, with
/// `I(δ) = f⁻¹([c − δ/2, c + δ/2])` and `g = |f − c|`.
///
/// In one dimension `I(δ)` is a union of intervals found by root finding and
/// integrated with 15-point Kronrod panels no wider than `h/4`; in two the
/// integral is a midpoint rule over error-grid nodes.
pub fn verify_proposition1(
    model: &MixtureModel,
    c: f64,
    n: usize,
    h: &BandwidthVector,
    spec: &KernelSpec,
    deltas: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<Proposition1Point>> {
    let per_rep = proposition1_replicates(model, c, n, h, spec, deltas, reps, seed)?;
    Ok(proposition1_points(deltas, &per_rep))
}

/// Averages replications into one point per `δ`.
pub fn proposition1_points(deltas: &[f64], per_rep: &[Proposition1Replicate]) -> Vec<Proposition1Point> {
    let k = per_rep.len() as f64;
    let num = per_rep.iter().map(|r| r.numerator).sum::<f64>() / k;
    deltas
        .iter()
        .enumerate()
        .map(|(j, &delta)| {
            let den = per_rep.iter().map(|r| r.denominators[j]).sum::<f64>() / k;
            Proposition1Point {
                delta,
                numerator: num,
                denominator: den,
                ratio: 2.0 * delta * num / den,
            }
        })
        .collect()
}

/// Per-replication numerators and denominators of [`verify_proposition1`].
pub fn proposition1_replicates(
    model: &MixtureModel,
    c: f64,
    n: usize,
    h: &BandwidthVector,
    spec: &KernelSpec,
    deltas: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<Proposition1Replicate>> {
    check_dim(model.dim(), h.dim())?;
    if deltas.is_empty() || deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(Error::arg("deltas must be positive"));
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::arg("deltas must be strictly decreasing"));
    }
    if reps < 1 {
        return Err(Error::arg("need at least one replication"));
    }
    let g = WeightFunction::excess(c)?;
    let d = model.dim();
    let band = |delta: f64| (c - delta / 2.0, c + delta / 2.0);
    let line = model.support_box(EXACT_BOX_SDS)[0];
    let panel = 0.25 * h.max();
    if d == 1 {
        for &delta in deltas {
            let f = |x: f64| model.density_unchecked(&[x]);
            if symdiff::integrate_over_band(f, band(delta), line, DEFAULT_SCAN_RESOLUTION, panel, |_| 1.0)?.is_none() {
                return Err(Error::Resolution(format!("I(δ) is empty for δ = {delta}")));
            }
        }
    }
    replicate(reps, seed, |rng| -> Result<Proposition1Replicate> {
        let s = model.sample_with(n, rng)?;
        match d {
            1 => {
                let kde = SortedKde1::new(&s, h[0], spec)?;
                let est = Estimate::Line(LineEstimate::from_sorted(&kde));
                let num = sym_diff_error(model, c, &est, &g)?.value;
                let f = |x: f64| model.density_unchecked(&[x]);
                let dens = deltas
                    .iter()
                    .map(|&delta| {
                        let w = |x: f64| (kde.density(x) - f(x)).powi(2);
                        symdiff::integrate_over_band(f, band(delta), line, DEFAULT_SCAN_RESOLUTION, panel, w)
                            .map(|v| v.unwrap_or(0.0))
                    })
                    .collect::<Result<_>>()?;
                Ok(Proposition1Replicate {
                    numerator: num,
                    denominators: dens,
                })
            }
            2 => {
                let grid = error_grid(model, &s, h, DEFAULT_ERROR_RES)?;
                let field = kde::kde_grid_truncated(&s, h, spec, &grid)?;
                let truth = symdiff::truth_grid(model, &grid)?;
                let num = symdiff::sym_diff_grid(&truth, &field, c, &g)?.value;
                let dens = deltas
                    .iter()
                    .map(|&delta| band_grid_integral(&truth, &field, band(delta)))
                    .collect::<Result<_>>()?;
                Ok(Proposition1Replicate {
                    numerator: num,
                    denominators: dens,
                })
            }
            _ => Err(Error::arg(format!("risk verification supports d in {{1, 2}}, got {d}"))),
        }
    })
}

fn band_grid_integral(truth: &GridField, est: &GridField, (lo, hi): (f64, f64)) -> Result<f64> {
    let cell: f64 = (0..truth.dim()).map(|j| truth.spec.step(j)).product();
    let mut total = 0.0;
    let mut count = 0usize;
    for (t, e) in truth.values.iter().zip(&est.values) {
        if *t >= lo && *t <= hi {
            total += (e - t).powi(2);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Resolution(format!("no grid node has f in [{lo}, {hi}]")));
    }
    Ok(total * cell)
}

/// Runs `body` for replications `0..reps` in parallel, collecting results in
/// index order.
pub(crate) fn replicate<T: Send>(reps: usize, seed: u64, body: impl Fn(&mut Rng) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..reps)
        .into_par_iter()
        .map(|i| body(&mut rng::replication_rng(seed, i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phi(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    #[test]
    fn exact_estimate_is_degenerate() {
        let m = MixtureModel::standard_normal(1).unwrap();
        let c = phi(2.0);
        let boundary = exact_boundary(&m, c, EXACT_GRID_RES).unwrap();
        let g = WeightFunction::excess(c).unwrap();
        let f = |x: f64| m.density_unchecked(&[x]);
        let est = Estimate::Line(LineEstimate::new(f, (-9.0, 9.0), 2000));
        let r = theorem1_ratio(&m, &boundary, &g, &est, |x| m.density_unchecked(x)).unwrap();
        assert_eq!((r.ratio, r.degenerate, r.lhs, r.rhs), (1.0, true, 0.0, 0.0));
    }

    #[test]
    fn shifted_estimate_obeys_the_expansion() {
        // f̂ = f(· − ε): the ratio tends to one as ε → 0
        let m = MixtureModel::standard_normal(1).unwrap();
        let c = phi(2.0);
        let boundary = exact_boundary(&m, c, EXACT_GRID_RES).unwrap();
        for g in [WeightFunction::excess(c).unwrap(), WeightFunction::unit(c).unwrap()] {
            let mut prev = f64::INFINITY;
            for eps in [1e-1, 1e-2, 1e-3] {
                let est = Estimate::Line(LineEstimate::new(move |x| phi(x - eps), (-9.0, 9.0), 2000));
                let r = theorem1_ratio(&m, &boundary, &g, &est, |x| phi(x[0] - eps)).unwrap();
                let gap = (r.ratio - 1.0).abs();
                assert!(gap < prev, "{:?}: {gap}", g.kind);
                prev = gap;
            }
            assert!(prev < 1e-2);
        }
    }

    #[test]
    fn small_sample_ratio_and_warning() {
        let m = MixtureModel::standard_normal(1).unwrap();
        let c = phi(2.0);
        let h = BandwidthVector::new(vec![0.3]).unwrap();
        let g = WeightFunction::excess(c).unwrap();
        let r = verify_theorem1_ratio(&m, c, &g, 5000, &h, &KernelSpec::gaussian(), 3).unwrap();
        assert!(r.ratio.is_finite() && r.ratio > 0.0 && !r.degenerate);
        assert_eq!(r.scaling_warning, h1_statistic(5000, &h) < H1_WARNING_THRESHOLD);
        let again = verify_theorem1_ratio(&m, c, &g, 5000, &h, &KernelSpec::gaussian(), 3).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn bivariate_theorem1_runs_on_grids() {
        let m = MixtureModel::standard_normal(2).unwrap();
        let c = 0.05;
        let h = BandwidthVector::new(vec![0.35, 0.35]).unwrap();
        let g = WeightFunction::excess(c).unwrap();
        let r = verify_theorem1_ratio(&m, c, &g, 2000, &h, &KernelSpec::gaussian(), 5).unwrap();
        assert!(r.ratio > 0.3 && r.ratio < 3.0, "{r:?}");
    }

    #[test]
    fn corollary_guards() {
        let m = MixtureModel::standard_normal(1).unwrap();
        let c = phi(1.0);
        let h = BandwidthVector::new(vec![0.3]).unwrap();
        let g = KernelSpec::gaussian();
        let unit = WeightFunction::unit(c).unwrap();
        assert!(verify_corollary1(&m, c, &unit, 1000, &h, &g, 29, 1).is_err());
        let excess = WeightFunction::excess(c).unwrap();
        assert!(verify_corollary1(&m, c, &excess, 1000, &h, &g, 50, 1).is_err());
    }

    #[test]
    fn corollary_direction_under_undersmoothing() {
        let m = MixtureModel::standard_normal(1).unwrap();
        let c = 0.317777;
        let g = KernelSpec::gaussian();
        let unit = WeightFunction::unit(c).unwrap();
        let n = 20_000;
        let h = BandwidthVector::new(vec![(n as f64).powf(-0.2)]).unwrap();
        let full = verify_corollary1(&m, c, &unit, n, &h, &g, 40, 11).unwrap();
        let half = verify_corollary1(&m, c, &unit, n, &h.scaled(0.5).unwrap(), &g, 40, 11).unwrap();
        assert!(half.formula.value > full.formula.value);
        assert!(half.monte_carlo.value > full.monte_carlo.value);
        assert!((full.ratio - 1.0).abs() < 0.3, "{}", full.ratio);
    }

    #[test]
    fn proposition_guards() {
        let m = MixtureModel::standard_normal(1).unwrap();
        let h = BandwidthVector::new(vec![0.2]).unwrap();
        let g = KernelSpec::gaussian();
        let c = 0.39;
        // c − δ/2 above max f = 0.3989
        let r = verify_proposition1(&m, c + 0.02, 1000, &h, &g, &[0.01], 2, 1);
        assert!(matches!(r, Err(Error::Resolution(_))));
        assert!(verify_proposition1(&m, c, 1000, &h, &g, &[0.01, 0.04], 2, 1).is_err());
    }

    #[test]
    fn proposition_ratio_is_finite() {
        let m = MixtureModel::standard_normal(1).unwrap();
        let c = phi(2.0);
        let h = BandwidthVector::new(vec![0.25]).unwrap();
        let pts = verify_proposition1(&m, c, 5000, &h, &KernelSpec::gaussian(), &[0.04, 0.01], 8, 3).unwrap();
        assert_eq!(pts.len(), 2);
        for p in pts {
            assert!(p.ratio.is_finite() && p.ratio > 0.0 && p.numerator > 0.0);
        }
    }

    #[test]
    fn bias_variance_at_small_scale() {
        let m = MixtureModel::standard_normal(1).unwrap();
        let h = BandwidthVector::new(vec![0.3]).unwrap();
        let r = verify_bias_variance(&m, &[2.0], 4000, &h, &KernelSpec::gaussian(), 400, 5).unwrap();
        assert!((r.variance / r.s2 - 1.0).abs() < 0.25, "{r:?}");
        assert!(r.beta > 0.0 && r.mean_error > 0.0);
    }

    #[test]
    fn replication_is_thread_independent() {
        let m = MixtureModel::standard_normal(1).unwrap();
        let h = BandwidthVector::new(vec![0.3]).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| verify_bias_variance(&m, &[1.0], 500, &h, &KernelSpec::gaussian(), 20, 9).unwrap())
        };
        assert_eq!(run(1), run(3));
    }
}
