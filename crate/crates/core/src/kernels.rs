//! Univariate symmetric kernels of even order.
//!
//! Two families are provided: the Gaussian kernel `φ` (order 2) and the
//! Gaussian-based fourth-order kernel `K₄(u) = ½(3 − u²)φ(u)`. Both are
//! evaluated in closed form through Hermite polynomials, so derivatives of
//! any order up to [`MAX_KERNEL_DERIVATIVE`] are exact.
//!
//! The moment `κ_ν` may be negative: `K₄` has `κ₄ = −3`. Only `κ_ν` and
//! `κ_ν²` enter the risk formulas, so no sign restriction is imposed.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::quad;

/// Highest kernel derivative available from [`KernelSpec::eval`].
pub const MAX_KERNEL_DERIVATIVE: usize = 4;

/// Truncation radius offered for faster evaluation. The Gaussian kernel is
/// below `1e-14` beyond it; fourth derivatives of `K₄` stay below `1e-9`.
pub const TRUNCATION_RADIUS: f64 = 8.0;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    Gaussian,
    Gaussian4,
}

impl KernelFamily {
    pub fn order(self) -> u32 {
        match self {
            KernelFamily::Gaussian => 2,
            KernelFamily::Gaussian4 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Gaussian4 => "gaussian4",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(KernelFamily::Gaussian),
            "gaussian4" | "gaussian-order-4" => Ok(KernelFamily::Gaussian4),
            other => Err(Error::arg(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Kernel moments and norms.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelConstants {
    /// `∫ u^ν K(u) du`.
    pub kappa_nu: f64,
    /// `∫ K²`.
    pub l2_norm_sq_1d: f64,
    /// `∫ |K|^k` for `k = 3..=7`.
    pub higher_lk_norms: BTreeMap<u32, f64>,
}

/// A kernel family together with its cached constants.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub order: u32,
    pub kappa_nu: f64,
    pub l2_norm_sq_1d: f64,
    pub higher_lk_norms: BTreeMap<u32, f64>,
    /// `None` evaluates exactly; `Some(r)` returns zero for `|u| > r`.
    pub support_radius: Option<f64>,
}

impl KernelSpec {
    /// Builds the spec and computes its constants by adaptive quadrature.
    pub fn new(family: KernelFamily) -> Result<Self> {
        let mut spec = Self {
            family,
            order: family.order(),
            kappa_nu: 0.0,
            l2_norm_sq_1d: 0.0,
            higher_lk_norms: BTreeMap::new(),
            support_radius: None,
        };
        let c = compute_constants(&spec)?;
        spec.kappa_nu = c.kappa_nu;
        spec.l2_norm_sq_1d = c.l2_norm_sq_1d;
        spec.higher_lk_norms = c.higher_lk_norms;
        Ok(spec)
    }

    pub fn gaussian() -> Self {
        Self::new(KernelFamily::Gaussian).expect("gaussian constants")
    }

    pub fn gaussian4() -> Self {
        Self::new(KernelFamily::Gaussian4).expect("gaussian4 constants")
    }

    pub fn truncated(mut self, radius: f64) -> Self {
        self.support_radius = Some(radius);
        self
    }

    pub fn constants(&self) -> KernelConstants {
        KernelConstants {
            kappa_nu: self.kappa_nu,
            l2_norm_sq_1d: self.l2_norm_sq_1d,
            higher_lk_norms: self.higher_lk_norms.clone(),
        }
    }

    /// `K^{(m)}(u)` for `m <= MAX_KERNEL_DERIVATIVE`.
    pub fn eval(&self, u: f64, derivative: usize) -> Result<f64> {
        if derivative > MAX_KERNEL_DERIVATIVE {
            return Err(Error::arg(format!(
                "kernel derivative order {derivative} exceeds {MAX_KERNEL_DERIVATIVE}"
            )));
        }
        Ok(self.eval_unchecked(u, derivative))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, u: f64, derivative: usize) -> f64 {
        if let Some(r) = self.support_radius {
            if u.abs() > r {
                return 0.0;
            }
        }
        let phi = FRAC_1_SQRT_2PI * (-0.5 * u * u).exp();
        phi * self.hermite_factor(u, derivative)
    }

    /// `K^{(m)}(u) / φ(u)`, a polynomial in `u`.
    #[inline]
    pub(crate) fn hermite_factor(&self, u: f64, m: usize) -> f64 {
        match self.family {
            KernelFamily::Gaussian => signed_hermite(u, m),
            KernelFamily::Gaussian4 => signed_hermite(u, m) - 0.5 * signed_hermite(u, m + 2),
        }
    }

    /// `∫ (K^{(m)})²`, the roughness of the `m`-th derivative.
    pub fn roughness(&self, m: usize) -> Result<f64> {
        if m > MAX_KERNEL_DERIVATIVE {
            return Err(Error::arg(format!("roughness order {m} exceeds {MAX_KERNEL_DERIVATIVE}")));
        }
        let exact = self.clone().untruncated();
        quad::integrate_real_line(|u| exact.eval_unchecked(u, m).powi(2), 1e-14, 1e-12)
    }

    /// Self-convolution `(K * K)(t)`.
    pub fn self_convolution(&self, t: f64) -> f64 {
        // ψ is the N(0, 2) density; ψ^{(m)}(t) = 2^{-m/2} (-1)^m He_m(t/√2) ψ(t)
        let psi = 0.5 * FRAC_1_SQRT_2PI * std::f64::consts::SQRT_2 * (-0.25 * t * t).exp();
        match self.family {
            KernelFamily::Gaussian => psi,
            KernelFamily::Gaussian4 => {
                let z2 = 0.5 * t * t;
                psi * (1.0 - 0.5 * (z2 - 1.0) + (z2 * z2 - 6.0 * z2 + 3.0) / 16.0)
            }
        }
    }

    fn untruncated(mut self) -> Self {
        self.support_radius = None;
        self
    }
}

/// `(-1)^m He_m(u)`, so that `φ^{(m)} = (-1)^m He_m φ`.
#[inline]
fn signed_hermite(u: f64, m: usize) -> f64 {
    let (mut prev, mut cur) = (1.0, u);
    if m == 0 {
        return 1.0;
    }
    for k in 1..m {
        let next = u * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    if m % 2 == 1 {
        -cur
    } else {
        cur
    }
}

/// `K^{(m)}(u)`.
pub fn kernel_eval(spec: &KernelSpec, u: f64, derivative: usize) -> Result<f64> {
    spec.eval(u, derivative)
}

/// Recomputes `κ_ν`, `∫K²` and `∫|K|^k` (`k = 3..=7`) by quadrature.
pub fn kernel_constants(spec: &KernelSpec) -> Result<KernelConstants> {
    compute_constants(spec)
}

fn compute_constants(spec: &KernelSpec) -> Result<KernelConstants> {
    let k = spec.clone().untruncated();
    let f = |u: f64| k.eval_unchecked(u, 0);
    let nu = spec.order as i32;
    let kappa_nu = quad::integrate_real_line(|u| u.powi(nu) * f(u), 1e-14, 1e-13)?;
    if kappa_nu.abs() < 1e-8 {
        return Err(Error::Numerical("kernel moment κ_ν vanishes".into()));
    }
    let l2_norm_sq_1d = quad::integrate_real_line(|u| f(u).powi(2), 1e-15, 1e-13)?;
    let mut higher_lk_norms = BTreeMap::new();
    for p in 3..=7 {
        let v = quad::integrate_real_line(|u| f(u).abs().powi(p), 1e-15, 1e-12)?;
        higher_lk_norms.insert(p as u32, v);
    }
    Ok(KernelConstants {
        kappa_nu,
        l2_norm_sq_1d,
        higher_lk_norms,
    })
}
