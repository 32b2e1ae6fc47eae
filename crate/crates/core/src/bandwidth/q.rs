//! The risk objective `Q(u; M, a, ν) = uᵀMu/(ν!)² + a/(u₁⋯u_d)^{1/ν}` and
//! its minimiser over the positive orthant.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Directions in the net used to check positivity of `M` on the orthant.
pub const F2_DIRECTIONS: usize = 64;
/// `ε = F2_RELATIVE_EPS · trace(M)` is the positivity threshold.
pub const F2_RELATIVE_EPS: f64 = 1e-10;

const NEWTON_MAX_ITER: usize = 200;

/// An instance `(M, a, ν)` of the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct QProblem {
    dim: usize,
    m: Vec<f64>,
    a: f64,
    nu: u32,
}

pub(crate) fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

impl QProblem {
    /// `m` is the row-major `d×d` symmetric matrix.
    pub fn new(m: Vec<f64>, a: f64, nu: u32) -> Result<Self> {
        let dim = (m.len() as f64).sqrt().round() as usize;
        if dim == 0 || dim * dim != m.len() {
            return Err(Error::arg(format!("matrix of {} entries is not square", m.len())));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("matrix has non-finite entries"));
        }
        let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..dim {
            for j in 0..i {
                if (m[i * dim + j] - m[j * dim + i]).abs() > 1e-12 * scale {
                    return Err(Error::arg("matrix is not symmetric"));
                }
            }
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::arg(format!("a must be positive, got {a}")));
        }
        if nu < 2 || !nu.is_multiple_of(2) {
            return Err(Error::arg(format!("ν must be an even integer >= 2, got {nu}")));
        }
        Ok(Self { dim, m, a, nu })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[f64] {
        &self.m
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn nu(&self) -> u32 {
        self.nu
    }

    fn m_at(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.dim + j]
    }

    fn check_u(&self, u: &[f64]) -> Result<()> {
        crate::error::check_dim(self.dim, u.len())?;
        if let Some(bad) = u.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::arg(format!("u must be positive, got {bad}")));
        }
        Ok(())
    }

    fn quad(&self, u: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += u[i] * self.m_at(i, j) * u[j];
            }
        }
        s
    }

    fn penalty(&self, u: &[f64]) -> f64 {
        // (Πu)^{-1/ν} through logs to avoid overflow for large d
        let log_prod: f64 = u.iter().map(|v| v.ln()).sum();
        (-log_prod / f64::from(self.nu)).exp()
    }

    pub fn value(&self, u: &[f64]) -> Result<f64> {
        self.check_u(u)?;
        Ok(self.value_unchecked(u))
    }

    fn value_unchecked(&self, u: &[f64]) -> f64 {
        let nf = factorial(self.nu);
        self.quad(u) / (nf * nf) + self.a * self.penalty(u)
    }

    pub fn gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_u(u)?;
        Ok(self.gradient_unchecked(u))
    }

    fn gradient_unchecked(&self, u: &[f64]) -> Vec<f64> {
        let nf2 = factorial(self.nu).powi(2);
        let g = self.a * self.penalty(u) / f64::from(self.nu);
        (0..self.dim)
            .map(|i| {
                let mu: f64 = (0..self.dim).map(|j| self.m_at(i, j) * u[j]).sum();
                2.0 * mu / nf2 - g / u[i]
            })
            .collect()
    }

    /// Hessian, row-major. Positive definite on the orthant whenever `M` is
    /// positive semidefinite.
    pub fn hessian(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_u(u)?;
        Ok(self.hessian_unchecked(u))
    }

    fn hessian_unchecked(&self, u: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let nu = f64::from(self.nu);
        let nf2 = factorial(self.nu).powi(2);
        let g = self.a * self.penalty(u) / nu;
        let mut h = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let diag = if i == j { 1.0 / (u[i] * u[i]) } else { 0.0 };
                h[i * d + j] = 2.0 * self.m_at(i, j) / nf2 + g * (1.0 / (nu * u[i] * u[j]) + diag);
            }
        }
        h
    }

    /// Checks `uᵀMu/‖u‖² >= ε` on a net of directions in the nonnegative
    /// orthant, with `ε = 1e-10·trace(M)`; in two dimensions the exact
    /// condition is checked as well.
    pub fn check_f2(&self) -> Result<()> {
        let trace: f64 = (0..self.dim).map(|i| self.m_at(i, i)).sum();
        let eps = F2_RELATIVE_EPS * trace;
        if !(trace > 0.0) {
            return Err(Error::DegenerateCurvature(format!("trace(M) = {trace} is not positive")));
        }
        for u in orthant_net(self.dim, F2_DIRECTIONS) {
            let norm2: f64 = u.iter().map(|v| v * v).sum();
            let r = self.quad(&u) / norm2;
            if !(r >= eps) {
                return Err(Error::DegenerateCurvature(format!(
                    "uᵀMu/‖u‖² = {r:.3e} below {eps:.3e} at direction {u:?}"
                )));
            }
        }
        if self.dim == 2 {
            let (m11, m22, m12) = (self.m_at(0, 0), self.m_at(1, 1), self.m_at(0, 1));
            if !(m11 > eps && m22 > eps && (m11 * m22).sqrt() + m12 > 0.0) {
                return Err(Error::DegenerateCurvature(format!(
                    "matrix [[{m11}, {m12}], [{m12}, {m22}]] is not positive on the orthant"
                )));
            }
        }
        Ok(())
    }
}

/// Deterministic set of unit-free directions covering the nonnegative
/// orthant: the axes, the diagonal, then a low-discrepancy fill.
fn orthant_net(d: usize, count: usize) -> Vec<Vec<f64>> {
    if d == 1 {
        return vec![vec![1.0]];
    }
    if d == 2 {
        return (0..count)
            .map(|k| {
                let t = std::f64::consts::FRAC_PI_2 * k as f64 / (count - 1) as f64;
                vec![t.cos().max(0.0), t.sin()]
            })
            .collect();
    }
    let mut net: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    net.push(vec![1.0; d]);
    const PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    let mut k = 1u32;
    while net.len() < count.max(d + 1) {
        let p: Vec<f64> = (0..d).map(|j| radical_inverse(k, PRIMES[j % PRIMES.len()])).collect();
        if p.iter().any(|&v| v > 0.0) {
            net.push(p);
        }
        k += 1;
    }
    net
}

fn radical_inverse(mut k: u32, base: u32) -> f64 {
    let mut inv = 1.0 / f64::from(base);
    let mut v = 0.0;
    while k > 0 {
        v += f64::from(k % base) * inv;
        k /= base;
        inv /= f64::from(base);
    }
    v
}

/// `Q(u; M, a, ν)`.
pub fn q_value(problem: &QProblem, u: &[f64]) -> Result<f64> {
    problem.value(u)
}

/// Minimiser `u*`: closed forms for `d <= 2`, Newton otherwise.
pub fn q_minimize(problem: &QProblem) -> Result<Vec<f64>> {
    problem.check_f2()?;
    match problem.dim {
        1 | 2 => q_minimize_closed_form(problem),
        _ => q_minimize_newton(problem),
    }
}

/// Closed-form minimiser for one and two dimensions.
pub fn q_minimize_closed_form(problem: &QProblem) -> Result<Vec<f64>> {
    problem.check_f2()?;
    let nu = f64::from(problem.nu);
    let nf2 = factorial(problem.nu).powi(2);
    match problem.dim {
        1 => {
            let m = problem.m_at(0, 0);
            Ok(vec![(problem.a * nf2 / (2.0 * nu * m)).powf(nu / (2.0 * nu + 1.0))])
        }
        2 => {
            let (m11, m22, m12) = (problem.m_at(0, 0), problem.m_at(1, 1), problem.m_at(0, 1));
            let rhs = problem.a * nf2 * (m22 / m11).powf((nu + 1.0) / (2.0 * nu))
                / (2.0 * nu * ((m11 * m22).sqrt() + m12));
            let u1 = rhs.powf(nu / (2.0 * nu + 2.0));
            Ok(vec![u1, (m11 / m22).sqrt() * u1])
        }
        d => Err(Error::arg(format!("no closed form for d = {d}"))),
    }
}

/// Damped Newton iteration from the best isotropic point. Steps are taken in
/// log coordinates, which keeps iterates in the open orthant.
pub fn q_minimize_newton(problem: &QProblem) -> Result<Vec<f64>> {
    problem.check_f2()?;
    let d = problem.dim;
    let nu = f64::from(problem.nu);
    let nf2 = factorial(problem.nu).powi(2);
    let s: f64 = problem.m.iter().sum();
    let t = if s > 0.0 {
        (problem.a * d as f64 * nf2 / (2.0 * nu * s)).powf(nu / (2.0 * nu + d as f64))
    } else {
        1.0
    };
    let mut u = vec![t; d];
    let mut q = problem.value_unchecked(&u);
    let mut best_grad = f64::INFINITY;
    for _ in 0..NEWTON_MAX_ITER {
        let g = problem.gradient_unchecked(&u);
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm <= 1e-14 * (1.0 + q.abs()) {
            break;
        }
        let h = DMatrix::from_row_slice(d, d, &problem.hessian_unchecked(&u));
        let step = h
            .cholesky()
            .ok_or_else(|| Error::Numerical("Hessian lost positive definiteness".into()))?
            .solve(&DVector::from_column_slice(&g));
        // u-space Newton direction mapped to log coordinates
        let mut dz: Vec<f64> = (0..d).map(|i| -step[i] / u[i]).collect();
        let zmax = dz.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if zmax > 1.0 {
            dz.iter_mut().for_each(|v| *v /= zmax);
        }
        let slope: f64 = (0..d).map(|i| g[i] * u[i] * dz[i]).sum();
        let mut alpha = 1.0;
        let mut moved = false;
        while alpha > 1e-12 {
            let trial: Vec<f64> = (0..d).map(|i| u[i] * (alpha * dz[i]).exp()).collect();
            let qt = problem.value_unchecked(&trial);
            if qt <= q + 1e-4 * alpha * slope {
                moved = qt < q || gnorm < best_grad;
                u = trial;
                q = qt;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            // value differences at rounding level: accept a full step that
            // still shrinks the gradient
            let trial: Vec<f64> = (0..d).map(|i| u[i] * dz[i].exp()).collect();
            let gt = problem.gradient_unchecked(&trial);
            let gtnorm = gt.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gtnorm < gnorm {
                q = problem.value_unchecked(&trial);
                u = trial;
                moved = true;
            }
        }
        best_grad = best_grad.min(gnorm);
        if !moved {
            break;
        }
    }
    let g = problem.gradient_unchecked(&u);
    let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if gnorm > 1e-8 * (1.0 + q.abs()) {
        return Err(Error::Numerical(format!("Newton stalled with gradient norm {gnorm:.3e}")));
    }
    Ok(u)
}

/// The rescaled problem `(w⁻¹M, 1, ν)` and the factor that maps its
/// minimiser back: `u(M, a, ν) = a^{ν/(d+2ν)} w^{−ν/(d+2ν)} u(w⁻¹M, 1, ν)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingTransport {
    pub problem: QProblem,
    pub factor: f64,
}

impl ScalingTransport {
    /// Maps a minimiser of the rescaled problem to one of the original.
    pub fn map(&self, u: &[f64]) -> Vec<f64> {
        u.iter().map(|v| v * self.factor).collect()
    }
}

pub fn scaling_transport(problem: &QProblem, w: f64) -> Result<ScalingTransport> {
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::arg(format!("w must be positive, got {w}")));
    }
    let d = problem.dim as f64;
    let nu = f64::from(problem.nu);
    let e = nu / (d + 2.0 * nu);
    Ok(ScalingTransport {
        problem: QProblem::new(problem.m.iter().map(|v| v / w).collect(), 1.0, problem.nu)?,
        factor: problem.a.powf(e) * w.powf(-e),
    })
}
