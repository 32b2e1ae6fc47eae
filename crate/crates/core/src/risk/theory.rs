//! Asymptotic risk expressions built from the pointwise variance
//! `s_n² = ‖K‖₂² c / (n h₁⋯h_d)` and bias
//! `β_h(x) = (κ_ν/ν!) Σ_k h_k^ν f_(k*ν)(x)` on the true boundary `M`.

use std::collections::BTreeMap;

use crate::bandwidth::functionals::{exact_boundary, EXACT_GRID_RES};
use crate::bandwidth::q::factorial;
use crate::error::{check_dim, Error, Result};
use crate::kde::BandwidthVector;
use crate::kernels::KernelSpec;
use crate::levelset::{self, LevelSetBoundary};
use crate::mixtures::MixtureModel;
use crate::quad;
use crate::risk::weight::WeightFunction;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// `γ(u) = √(2/π)(u ∫₀ᵘ e^{−t²/2} dt + e^{−u²/2}) = E|Z − u|`.
pub fn gamma_fn(u: f64) -> Result<f64> {
    if !(u >= 0.0) || u.is_infinite() {
        return Err(Error::arg(format!("gamma_fn needs a finite u >= 0, got {u}")));
    }
    Ok(u * libm::erf(u / std::f64::consts::SQRT_2) + SQRT_2_OVER_PI * (-0.5 * u * u).exp())
}

/// `E|Z − μ|^q` for standard normal `Z`, by quadrature of
/// `∫₀^∞ t^q (φ(μ + t) + φ(μ − t)) dt`.
pub fn normal_abs_moment(q: f64, mu: f64) -> Result<f64> {
    if !(q >= 0.0 && q.is_finite() && mu.is_finite()) {
        return Err(Error::arg(format!("normal_abs_moment needs q >= 0 and finite μ, got q = {q}, μ = {mu}")));
    }
    if q == 0.0 {
        return Ok(1.0);
    }
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let upper = mu.abs() + 40.0;
    quad::integrate(|t| t.powf(q) * (phi(mu + t) + phi(mu - t)), 0.0, upper, 1e-300, 1e-12)
}

/// `s_n² = ‖K‖₂² c / (n h₁⋯h_d)` for the `d`-fold product kernel.
pub fn variance_term(c: f64, h: &BandwidthVector, spec: &KernelSpec, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::arg("sample size must be positive"));
    }
    Ok(spec.l2_norm_sq_1d.powi(h.dim() as i32) * c / (n as f64 * h.product()))
}

/// `β_h(x) = (κ_ν/ν!) Σ_k h_k^ν f_(k*ν)(x)`.
pub fn bias_term(model: &MixtureModel, x: &[f64], h: &BandwidthVector, spec: &KernelSpec) -> Result<f64> {
    check_dim(model.dim(), h.dim())?;
    let nu = spec.order as usize;
    let mut s = 0.0;
    for k in 0..model.dim() {
        s += h[k].powi(nu as i32) * model.partial(x, &vec![k; nu])?;
    }
    Ok(spec.kappa_nu / factorial(spec.order) * s)
}

/// The asymptotic risk to assemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskForm {
    /// `m̃(h) = s_n² ∫_M ‖∇f‖⁻¹ + ∫_M β_h² ‖∇f‖⁻¹`.
    MTilde,
    /// `∫_M s_n γ(|β_h|/s_n) g / ‖∇f‖`; needs `p = 0`.
    L1Exact(WeightFunction),
    /// `∫_M |β_h| g / ‖∇f‖ + √(2/π) s_n ∫_M g / ‖∇f‖`; needs `p = 0`.
    L1Upper(WeightFunction),
    /// `(1+p)⁻¹ ∫_M g^(p) ‖∇f‖^{−p−1} E|s_n Z − β_h|^{p+1}` for any `p`.
    NormalMoment(WeightFunction),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskMethod {
    /// A numerical integral of a non-closed integrand.
    GridIntegral,
    /// A closed-form integrand summed over boundary quadrature nodes.
    ClosedForm,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub value: f64,
    /// Named parts; for [`RiskMethod::ClosedForm`] they sum to `value`.
    pub components: BTreeMap<String, f64>,
    pub method: RiskMethod,
    pub n_reps: Option<usize>,
    /// Boundary quadrature nodes used.
    pub nodes: Option<usize>,
}

/// [`theoretical_risk_on`] with the boundary of `{f = c}` extracted from the
/// exact density.
pub fn theoretical_risk(
    model: &MixtureModel,
    c: f64,
    h: &BandwidthVector,
    spec: &KernelSpec,
    n: usize,
    form: RiskForm,
) -> Result<RiskReport> {
    let boundary = exact_boundary(model, c, EXACT_GRID_RES)?;
    theoretical_risk_on(model, &boundary, h, spec, n, form)
}

/// Assembles `form` on a given true boundary.
pub fn theoretical_risk_on(
    model: &MixtureModel,
    boundary: &LevelSetBoundary,
    h: &BandwidthVector,
    spec: &KernelSpec,
    n: usize,
    form: RiskForm,
) -> Result<RiskReport> {
    check_dim(model.dim(), h.dim())?;
    if boundary.is_empty() {
        return Err(Error::EmptyLevelSet { level: boundary.level() });
    }
    let c = boundary.level();
    let s2 = variance_term(c, h, spec, n)?;
    let s = s2.sqrt();
    let local = |x: &[f64]| -> Result<(f64, f64)> {
        let grad = model.gradient(x)?;
        Ok((grad.iter().map(|v| v * v).sum::<f64>().sqrt(), bias_term(model, x, h, spec)?))
    };
    let integrate = |w: &(dyn Fn(f64, f64) -> Result<f64> + Sync)| -> Result<f64> {
        Ok(levelset::try_surface_integral(boundary, |x| {
            let (g, b) = local(x)?;
            w(g, b)
        })?
        .value)
    };
    let nodes = Some(boundary.quadrature_nodes().len());
    let closed = |parts: Vec<(&str, f64)>| RiskReport {
        value: parts.iter().map(|p| p.1).sum(),
        components: parts.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        method: RiskMethod::ClosedForm,
        n_reps: None,
        nodes,
    };
    let need_p0 = |g: &WeightFunction| {
        if g.p() != 0.0 {
            return Err(Error::arg(format!("L1 risk forms need a weight with p = 0, got {}", g.kind)));
        }
        Ok(())
    };
    match form {
        RiskForm::MTilde => {
            let variance = s2 * integrate(&|g, _| Ok(1.0 / g))?;
            let bias = integrate(&|g, b| Ok(b * b / g))?;
            Ok(closed(vec![("bias-term", bias), ("variance-term", variance)]))
        }
        RiskForm::L1Exact(w) => {
            need_p0(&w)?;
            let gv = w.boundary_factor(0.0);
            let variance = SQRT_2_OVER_PI * s * integrate(&|g, _| Ok(gv / g))?;
            let bias = integrate(&|g, b| Ok(s * (gamma_fn(b.abs() / s)? - SQRT_2_OVER_PI) * gv / g))?;
            Ok(closed(vec![("bias-term", bias), ("variance-term", variance)]))
        }
        RiskForm::L1Upper(w) => {
            need_p0(&w)?;
            let gv = w.boundary_factor(0.0);
            let variance = SQRT_2_OVER_PI * s * integrate(&|g, _| Ok(gv / g))?;
            let bias = integrate(&|g, b| Ok(b.abs() * gv / g))?;
            Ok(closed(vec![("bias-term", bias), ("variance-term", variance)]))
        }
        RiskForm::NormalMoment(w) => {
            let p = w.p();
            let value = integrate(&|g, b| {
                Ok(w.boundary_factor(g) / g.powf(p + 1.0) * s.powf(p + 1.0) * normal_abs_moment(p + 1.0, b / s)?)
            })? / (1.0 + p);
            Ok(RiskReport {
                value,
                components: BTreeMap::from([("normal-moment".to_string(), value)]),
                method: RiskMethod::GridIntegral,
                n_reps: None,
                nodes,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandwidth::functionals::exact_functionals_on;
    use crate::bandwidth::select::{m_tilde, optimal_from_functionals};
    use crate::levelset::Crossing;
    use proptest::prelude::*;

    fn phi(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    fn big_phi(x: f64) -> f64 {
        0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
    }

    #[test]
    fn gamma_values() {
        assert!((gamma_fn(0.0).unwrap() - 0.797885).abs() < 1e-6);
        assert!((gamma_fn(1.0).unwrap() - 1.166631).abs() < 1e-6);
        assert!((gamma_fn(1.0).unwrap() - (2.0 * phi(1.0) + 2.0 * big_phi(1.0) - 1.0)).abs() < 1e-14);
        assert!((gamma_fn(3.0).unwrap() - 3.000764).abs() < 1e-6);
        assert!(gamma_fn(-1.0).is_err());
        assert!(gamma_fn(f64::NAN).is_err());
    }

    #[test]
    fn gamma_matches_monte_carlo() {
        use rand::Rng as _;
        use rand_distr::StandardNormal;
        let mut rng = crate::rng::seeded(77);
        let draws = 2_000_000;
        let mut acc = [0.0f64; 2];
        for _ in 0..draws {
            let z: f64 = rng.sample(StandardNormal);
            acc[0] += (z - 1.0).abs();
            acc[1] += (z - 3.0).abs();
        }
        // standard errors are below 6e-4
        assert!((acc[0] / draws as f64 - gamma_fn(1.0).unwrap()).abs() < 3e-3);
        assert!((acc[1] / draws as f64 - gamma_fn(3.0).unwrap()).abs() < 3e-3);
    }

    #[test]
    fn normal_moments() {
        for mu in [0.0, 0.3, -1.7, 4.0] {
            assert!((normal_abs_moment(1.0, mu).unwrap() - gamma_fn(f64::abs(mu)).unwrap()).abs() < 1e-11);
            assert!((normal_abs_moment(2.0, mu).unwrap() - (1.0 + mu * mu)).abs() < 1e-11);
            assert!((normal_abs_moment(3.0, 0.0).unwrap() - 2.0 * SQRT_2_OVER_PI).abs() < 1e-11);
        }
    }

    fn normal_two_point() -> (MixtureModel, LevelSetBoundary) {
        let m = MixtureModel::standard_normal(1).unwrap();
        let b = exact_boundary(&m, phi(2.0), EXACT_GRID_RES).unwrap();
        (m, b)
    }

    #[test]
    fn m_tilde_components() {
        let (m, boundary) = normal_two_point();
        let g = KernelSpec::gaussian();
        let n = 100_000;
        let c = phi(2.0);
        let f = exact_functionals_on(&m, &boundary, 2).unwrap();
        let h_opt = optimal_from_functionals(&f, c, &g, n).unwrap().h;
        let r = theoretical_risk_on(&m, &boundary, &h_opt, &g, n, RiskForm::MTilde).unwrap();
        let h = h_opt[0];
        let variance = g.l2_norm_sq_1d * c * f.b / (n as f64 * h);
        let bias = h.powi(4) * g.kappa_nu.powi(2) * f.a[0] / 4.0;
        assert!((r.components["variance-term"] - variance).abs() < 1e-12 * variance);
        assert!((r.components["bias-term"] - bias).abs() < 1e-10 * bias);
        // first-order condition at the optimum
        let at = |t: f64| {
            theoretical_risk_on(&m, &boundary, &BandwidthVector::new(vec![t]).unwrap(), &g, n, RiskForm::MTilde)
                .unwrap()
                .value
        };
        let eps = 1e-5 * h;
        let slope = (at(h + eps) - at(h - eps)) / (2.0 * eps);
        assert!(slope.abs() * h / r.value < 1e-6, "{slope}");
    }

    #[test]
    fn l1_exact_with_zero_bias() {
        // synthetic boundary at the inflection point x = 1 of N(0,1), where β_h = 0
        let m = MixtureModel::standard_normal(1).unwrap();
        let c = phi(1.0);
        let boundary = LevelSetBoundary::OneD {
            level: c,
            crossings: vec![Crossing {
                x: 1.0,
                direction: crate::levelset::Direction::Down,
            }],
        };
        let g = KernelSpec::gaussian();
        let h = BandwidthVector::new(vec![0.2]).unwrap();
        let w = WeightFunction::density(c).unwrap();
        let r = theoretical_risk_on(&m, &boundary, &h, &g, 5000, RiskForm::L1Exact(w)).unwrap();
        let s = variance_term(c, &h, &g, 5000).unwrap().sqrt();
        let expected = s * SQRT_2_OVER_PI * c / phi(1.0);
        assert!((r.value - expected).abs() < 1e-14 * expected);
        assert!(r.components["bias-term"].abs() < 1e-20);
    }

    #[test]
    fn normal_moment_reduces_to_known_forms() {
        let (m, boundary) = normal_two_point();
        let g = KernelSpec::gaussian();
        let h = BandwidthVector::new(vec![0.15]).unwrap();
        let c = phi(2.0);
        let n = 20_000;
        let mt = theoretical_risk_on(&m, &boundary, &h, &g, n, RiskForm::MTilde).unwrap().value;
        let excess = WeightFunction::excess(c).unwrap();
        let nm = theoretical_risk_on(&m, &boundary, &h, &g, n, RiskForm::NormalMoment(excess)).unwrap().value;
        assert!((nm - mt / 2.0).abs() < 1e-10 * mt);
        let unit = WeightFunction::unit(c).unwrap();
        let l1 = theoretical_risk_on(&m, &boundary, &h, &g, n, RiskForm::L1Exact(unit)).unwrap().value;
        let nm0 = theoretical_risk_on(&m, &boundary, &h, &g, n, RiskForm::NormalMoment(unit)).unwrap().value;
        assert!((nm0 - l1).abs() < 1e-10 * l1);
        assert!(theoretical_risk_on(&m, &boundary, &h, &g, n, RiskForm::L1Exact(excess)).is_err());
    }

    #[test]
    fn empty_boundary_propagates() {
        let m = MixtureModel::standard_normal(1).unwrap();
        let h = BandwidthVector::new(vec![0.2]).unwrap();
        let r = theoretical_risk(&m, 0.9, &h, &KernelSpec::gaussian(), 100, RiskForm::MTilde);
        assert!(matches!(r, Err(Error::EmptyLevelSet { .. })));
    }

    #[test]
    fn bivariate_m_tilde_matches_q_value() {
        let m = MixtureModel::by_id("C").unwrap();
        let c = 0.05;
        let boundary = exact_boundary(&m, c, 512).unwrap();
        let f = exact_functionals_on(&m, &boundary, 2).unwrap();
        let g = KernelSpec::gaussian();
        let h = BandwidthVector::new(vec![0.3, 0.2]).unwrap();
        let r = theoretical_risk_on(&m, &boundary, &h, &g, 1000, RiskForm::MTilde).unwrap();
        let q = m_tilde(&h, &f, c, &g, 1000).unwrap();
        assert!((r.value - q).abs() < 1e-10 * q, "{} vs {q}", r.value);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn l1_upper_bounds_l1_exact(h in 0.02f64..1.0, log_n in 2.0f64..7.0) {
            let (m, boundary) = normal_two_point();
            let g = KernelSpec::gaussian();
            let bw = BandwidthVector::new(vec![h]).unwrap();
            let n = 10f64.powf(log_n) as usize;
            let w = WeightFunction::unit(phi(2.0)).unwrap();
            let exact = theoretical_risk_on(&m, &boundary, &bw, &g, n, RiskForm::L1Exact(w)).unwrap().value;
            let upper = theoretical_risk_on(&m, &boundary, &bw, &g, n, RiskForm::L1Upper(w)).unwrap().value;
            prop_assert!(upper >= exact);
        }

        #[test]
        fn m_tilde_matches_q_value(h in 0.02f64..1.0, log_n in 2.0f64..7.0, use_g4 in any::<bool>()) {
            let (m, boundary) = normal_two_point();
            let g = if use_g4 { KernelSpec::gaussian4() } else { KernelSpec::gaussian() };
            let bw = BandwidthVector::new(vec![h]).unwrap();
            let n = 10f64.powf(log_n) as usize;
            let f = exact_functionals_on(&m, &boundary, g.order).unwrap();
            let r = theoretical_risk_on(&m, &boundary, &bw, &g, n, RiskForm::MTilde).unwrap().value;
            let q = m_tilde(&bw, &f, phi(2.0), &g, n).unwrap();
            prop_assert!((r - q).abs() <= 1e-10 * q);
        }

        #[test]
        fn gamma_is_convex_and_approaches_identity(u in 0.0f64..8.0) {
            let step = 1e-2;
            let (a, b, c) = (gamma_fn(u).unwrap(), gamma_fn(u + step).unwrap(), gamma_fn(u + 2.0 * step).unwrap());
            // rounding in the differences is a few ulps of γ(u)
            let ulps = 8.0 * f64::EPSILON * c;
            prop_assert!(a - 2.0 * b + c >= -ulps);
            prop_assert!(b - (u + step) <= a - u + ulps);
            prop_assert!(a - u >= 0.0);
        }
    }
}
