//! Wilcoxon signed-rank test.
//!
//! Zero differences are dropped and tied magnitudes share their average
//! rank. Up to [`EXACT_MAX_N`] nonzero differences the null distribution of
//! `W⁺` is enumerated exactly (by counting over doubled ranks, which are
//! integers even with ties); beyond that a normal approximation with tie
//! correction and continuity correction is used.

use crate::error::{Error, Result};

/// Largest number of nonzero differences handled by exact enumeration.
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WilcoxonMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wilcoxon {
    /// `W⁺`, the rank sum of the positive differences.
    pub statistic: f64,
    pub p_two_sided: f64,
    /// Nonzero differences used.
    pub n: usize,
    pub method: WilcoxonMethod,
}

/// Test on the differences `a − b` of paired observations.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<Wilcoxon> {
    let d: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
    wilcoxon_differences(&d)
}

pub fn wilcoxon_differences(differences: &[f64]) -> Result<Wilcoxon> {
    if differences.iter().any(|d| !d.is_finite()) {
        return Err(Error::arg("differences must be finite"));
    }
    let nonzero: Vec<f64> = differences.iter().copied().filter(|d| *d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(Error::arg("all differences are zero; the test is degenerate"));
    }
    let ranks = average_ranks(&nonzero);
    let n = nonzero.len();
    let statistic: f64 = nonzero.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    if n <= EXACT_MAX_N {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let counts = signed_rank_counts(&doubled);
        let w2 = (2.0 * statistic).round() as usize;
        let total = 2f64.powi(n as i32);
        let le: u64 = counts[..=w2].iter().sum();
        let ge: u64 = counts[w2..].iter().sum();
        let p = (2.0 * le.min(ge) as f64 / total).min(1.0);
        return Ok(Wilcoxon {
            statistic,
            p_two_sided: p,
            n,
            method: WilcoxonMethod::Exact,
        });
    }
    Ok(Wilcoxon {
        statistic,
        p_two_sided: normal_p_value(&nonzero, statistic),
        n,
        method: WilcoxonMethod::Normal,
    })
}

// Two-sided p-value of `W⁺` under the normal approximation.
fn normal_p_value(nonzero: &[f64], statistic: f64) -> f64 {
    let nf = nonzero.len() as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = tie_groups(nonzero).iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = ((statistic - mean).abs() - 0.5).max(0.0) / var.sqrt();
    libm::erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// `counts[w]`: number of sign patterns whose positive doubled ranks sum to `w`.
pub fn signed_rank_counts(doubled_ranks: &[usize]) -> Vec<u64> {
    let max: usize = doubled_ranks.iter().sum();
    let mut counts = vec![0u64; max + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in doubled_ranks {
        for w in (0..=reach).rev() {
            counts[w + r] += counts[w];
        }
        reach += r;
    }
    counts
}

// Ranks of |d| with ties averaged.
fn average_ranks(d: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()));
    let mut ranks = vec![0.0; d.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && d[order[j + 1]].abs() == d[order[i]].abs() {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn tie_groups(d: &[f64]) -> Vec<usize> {
    let mut mags: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut i = 0;
    while i < mags.len() {
        let mut j = i;
        while j + 1 < mags.len() && mags[j + 1] == mags[i] {
            j += 1;
        }
        groups.push(j - i + 1);
        i = j + 1;
    }
    groups
}
