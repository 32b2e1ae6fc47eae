//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so that the lines are always printed;
//! the process exits nonzero when any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use lsbw::bandwidth::functionals::{exact_surface_functionals, EXACT_GRID_RES};
use lsbw::bandwidth::q::q_minimize_newton;
use lsbw::bandwidth::{q_minimize, scaling_transport, select_optimal, QProblem};
use lsbw::harness::{run_experiment, wilcoxon_differences, ExperimentConfig, GridConfig};
use lsbw::levelset::extract_d2;
use lsbw::risk::{theorem1_ratios, verify_bias_variance, verify_corollary1, verify_proposition1, WeightFunction};
use lsbw::{BandwidthVector, GridField, GridSpec, KernelSpec, Level, MixtureModel};
use rand::Rng as _;

// Tolerances and protocol constants.
const C1_PROBLEMS: usize = 100;
const C1_REL_TOL: f64 = 1e-6;
const C1_GRAD_TOL: f64 = 1e-8;
const C1_TRANSPORT_TOL: f64 = 1e-8;
const C1_RUNTIME_SECS: f64 = 10.0;

const C2_N: usize = 100_000;
const C2_REPS: usize = 2000;
const C2_BIAS_TOL: f64 = 0.15;
const C2_VAR_TOL: f64 = 0.10;

const C3_N: usize = 100_000;
const C3_SEEDS: usize = 50;
const C3_BAND: (f64, f64) = (0.8, 1.2);

const C4_N: usize = 100_000;
const C4_REPS: usize = 500;
const C4_BAND: (f64, f64) = (0.85, 1.15);

const C5_N: usize = 100_000;
const C5_REPS: usize = 200;
const C5_BAND: (f64, f64) = (0.85, 1.15);

const C6_TOL: f64 = 0.25;
const C6_STABILITY: f64 = 0.20;
/// Constant quoted alongside the criterion; its own arithmetic gives 0.8969.
const C6_QUOTED_CONSTANT: f64 = 0.9455;

const C7_CIRCLE_RES: usize = 512;
const C7_CIRCLE_TOL: f64 = 0.005;
const C7_FUNCTIONAL_TOL: f64 = 1e-6;
const C7_QUOTED_B: f64 = 18.5216;
const C7_QUOTED_A: f64 = 0.48596;

const C8_N: usize = 2000;
const C8_REPS: usize = 50;

const C9_MAX_N: usize = 10;
const C9_CASES: usize = 2000;

fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `E|Z − u|` for standard normal `Z`.
fn gamma(u: f64) -> f64 {
    u * libm::erf(u / 2f64.sqrt()) + (2.0 / PI).sqrt() * (-0.5 * u * u).exp()
}

/// `‖K‖₂²` of the Gaussian kernel.
const GAUSS_L2: f64 = 0.282_094_791_773_878_14;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn in_band(v: f64, (lo, hi): (f64, f64)) -> bool {
    v >= lo && v <= hi
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

// Closed-form minimisers computed here from first principles: d = 1 solves
// Q'(u) = 0 directly; d = 2 solves the stationarity system with the ratio
// u₂/u₁ = √(m₁₁/m₂₂).
fn oracle_minimiser(m: &[f64], a: f64, nu: u32) -> Vec<f64> {
    let nuf = f64::from(nu);
    let fact2: f64 = (1..=nu).map(f64::from).product::<f64>().powi(2);
    if m.len() == 1 {
        return vec![(a * fact2 / (2.0 * nuf * m[0])).powf(nuf / (2.0 * nuf + 1.0))];
    }
    let (m11, m12, m22) = (m[0], m[1], m[3]);
    let r = (m11 / m22).sqrt();
    // ∂Q/∂u₁ = 2(m₁₁u₁ + m₁₂u₂)/(ν!)² − a/(ν u₁) (u₁u₂)^{−1/ν} = 0 with u₂ = r u₁
    let k = 2.0 * (m11 + m12 * r) / fact2;
    let p = 2.0 + 2.0 / nuf;
    let u1 = (a * r.powf(-1.0 / nuf) / (nuf * k)).powf(1.0 / p);
    vec![u1, r * u1]
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut rng = lsbw::rng::seeded(101);
    let (mut worst_rel, mut worst_grad, mut worst_transport) = (0.0f64, 0.0f64, 0.0f64);
    for d in [1usize, 2] {
        for k in 0..C1_PROBLEMS {
            let nu = if k % 2 == 0 { 2 } else { 4 };
            let m = if d == 1 {
                vec![rng.random_range(0.1..10.0)]
            } else {
                let (l11, l21, l22): (f64, f64, f64) =
                    (rng.random_range(0.3..3.0), rng.random_range(-1.0..1.0), rng.random_range(0.3..3.0));
                let m12 = l11 * l21;
                vec![l11 * l11, m12, m12, l21 * l21 + l22 * l22]
            };
            let a = rng.random_range(0.1..10.0);
            let p = QProblem::new(m.clone(), a, nu).unwrap();
            let numeric = q_minimize_newton(&p).unwrap();
            let oracle = oracle_minimiser(&m, a, nu);
            let closed = q_minimize(&p).unwrap();
            for ((x, y), z) in numeric.iter().zip(&oracle).zip(&closed) {
                worst_rel = worst_rel.max(rel(*x, *y)).max(rel(*z, *y));
            }
            let g = p.gradient(&numeric).unwrap();
            worst_grad = worst_grad.max(g.iter().map(|v| v * v).sum::<f64>().sqrt());
            let w = rng.random_range(0.05..20.0);
            let t = scaling_transport(&p, w).unwrap();
            let mapped = t.map(&q_minimize_newton(&t.problem).unwrap());
            for (x, y) in mapped.iter().zip(&numeric) {
                worst_transport = worst_transport.max(rel(*x, *y));
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst_rel <= C1_REL_TOL
        && worst_grad <= C1_GRAD_TOL
        && worst_transport <= C1_TRANSPORT_TOL
        && secs < C1_RUNTIME_SECS;
    outcome(
        pass,
        format!(
            "max rel diff {worst_rel:.2e} (tol {C1_REL_TOL:e}), max |grad| {worst_grad:.2e} (tol {C1_GRAD_TOL:e}), \
             transport {worst_transport:.2e} (tol {C1_TRANSPORT_TOL:e}), {secs:.2}s"
        ),
    )
}

fn criterion_2() -> Outcome {
    let m = MixtureModel::standard_normal(1).unwrap();
    let spec = KernelSpec::gaussian();
    let h = (C2_N as f64).powf(-0.2);
    let bw = BandwidthVector::new(vec![h]).unwrap();
    let x = 2.0;
    let r = verify_bias_variance(&m, &[x], C2_N, &bw, &spec, C2_REPS, 2024).unwrap();
    // β = (κ₂/2) h² f''(x), f'' = (x² − 1)φ; s² = ‖K‖₂² f(x)/(n h)
    let beta = 0.5 * h * h * (x * x - 1.0) * phi(x);
    let s2 = GAUSS_L2 * phi(x) / (C2_N as f64 * h);
    let bias_err = rel(r.mean_error, beta);
    let var_err = rel(r.variance, s2);
    let pass = bias_err <= C2_BIAS_TOL && var_err <= C2_VAR_TOL && rel(r.beta, beta) < 1e-12 && rel(r.s2, s2) < 1e-12;
    outcome(
        pass,
        format!(
            "bias {:.4e} vs {beta:.4e} ({:.1}%, tol {}%), variance {:.4e} vs {s2:.4e} ({:.1}%, tol {}%), {C2_REPS} reps",
            r.mean_error,
            100.0 * bias_err,
            100.0 * C2_BIAS_TOL,
            r.variance,
            100.0 * var_err,
            100.0 * C2_VAR_TOL
        ),
    )
}

fn criterion_3() -> Outcome {
    let m = MixtureModel::standard_normal(1).unwrap();
    let c = phi(2.0);
    let g = WeightFunction::excess(c).unwrap();
    let h = BandwidthVector::new(vec![(C3_N as f64).powf(-0.2)]).unwrap();
    let rs = theorem1_ratios(&m, c, &g, C3_N, &h, &KernelSpec::gaussian(), C3_SEEDS, 7).unwrap();
    let ratios: Vec<f64> = rs.iter().map(|r| r.ratio).collect();
    let med = median(&ratios);
    outcome(
        in_band(med, C3_BAND),
        format!("median LHS/RHS {med:.4} over {C3_SEEDS} seeds, band {C3_BAND:?}"),
    )
}

fn criterion_4() -> Outcome {
    let m = MixtureModel::standard_normal(1).unwrap();
    // level of the 50% region: x₀ = Φ⁻¹(0.75)
    let x0 = 0.674_489_750_196_081_7;
    let c = phi(x0);
    let n = C4_N as f64;
    let h = n.powf(-0.2);
    let bw = BandwidthVector::new(vec![h]).unwrap();
    let g = WeightFunction::unit(c).unwrap();
    let o = verify_corollary1(&m, c, &g, C4_N, &bw, &KernelSpec::gaussian(), C4_REPS, 11).unwrap();
    // two boundary points, each contributing s γ(|β|/s) / |f'(x₀)|
    let s = (GAUSS_L2 * c / (n * h)).sqrt();
    let beta = 0.5 * h * h * (x0 * x0 - 1.0) * c;
    let formula = 2.0 * s * gamma(beta.abs() / s) / (x0 * c);
    let ratio = o.monte_carlo.value / formula;
    let pass = in_band(ratio, C4_BAND) && rel(o.formula.value, formula) < 1e-6;
    outcome(
        pass,
        format!(
            "Monte Carlo mean {:.5e}, formula {formula:.5e} (library {:.5e}), ratio {ratio:.4}, band {C4_BAND:?}",
            o.monte_carlo.value, o.formula.value
        ),
    )
}

fn criterion_5() -> Outcome {
    let m = MixtureModel::standard_normal(1).unwrap();
    let h = BandwidthVector::new(vec![(C5_N as f64).powf(-0.2)]).unwrap();
    let pts = verify_proposition1(&m, phi(2.0), C5_N, &h, &KernelSpec::gaussian(), &[0.04, 0.01], C5_REPS, 13).unwrap();
    let (wide, narrow) = (pts[0].ratio, pts[1].ratio);
    let pass = in_band(narrow, C5_BAND) && (narrow - 1.0).abs() < (wide - 1.0).abs();
    outcome(
        pass,
        format!("ratio {narrow:.4} at δ=0.01 (band {C5_BAND:?}), {wide:.4} at δ=0.04; closer to 1 at 0.01 required"),
    )
}

fn criterion_6() -> Outcome {
    let m = MixtureModel::standard_normal(1).unwrap();
    let spec = KernelSpec::gaussian();
    let c = phi(2.0);
    // h⁵ = c b ‖K‖₂² / (n A) with b = 1/φ(2), A = 9φ(2) on {±2}
    let exact_c = (c * (1.0 / c) * GAUSS_L2 / (9.0 * c)).powf(0.2);
    let scaled = |n: usize, seed: u64| {
        let s = m.sample(n, seed).unwrap();
        select_optimal(&s, Level::new(c).unwrap(), &spec).unwrap().h[0] * (n as f64).powf(0.2)
    };
    let (c4, c5) = (scaled(10_000, 61), scaled(100_000, 62));
    let err = rel(c5, exact_c);
    let drift = rel(c4, c5);
    let pass = err <= C6_TOL && drift < C6_STABILITY;
    outcome(
        pass,
        format!(
            "ĥ·n^(1/5) = {c5:.4} at n=1e5 vs C = {exact_c:.4} ({:.1}%, tol {}%; {:.1}% from the quoted {C6_QUOTED_CONSTANT}), \
             {c4:.4} at n=1e4 (drift {:.1}%, tol {}%)",
            100.0 * err,
            100.0 * C6_TOL,
            100.0 * rel(c5, C6_QUOTED_CONSTANT),
            100.0 * drift,
            100.0 * C6_STABILITY
        ),
    )
}

fn criterion_7() -> Outcome {
    let spec = GridSpec::new(vec![(-2.0, 2.0); 2], vec![C7_CIRCLE_RES; 2]).unwrap();
    let field = GridField::from_fn(spec, |x| x[0] * x[0] + x[1] * x[1]);
    let b = extract_d2(&field, 1.0).unwrap();
    let len: f64 = b.polylines().iter().map(|p| p.length()).sum();
    let circle_err = rel(len, 2.0 * PI);
    let m = MixtureModel::standard_normal(1).unwrap();
    let f = exact_surface_functionals(&m, phi(2.0), 2, EXACT_GRID_RES).unwrap();
    let (b_exact, a_exact) = (1.0 / phi(2.0), 9.0 * phi(2.0));
    let (db, da) = ((f.b - b_exact).abs(), (f.a[0] - a_exact).abs());
    let pass = circle_err <= C7_CIRCLE_TOL && db <= C7_FUNCTIONAL_TOL && da <= C7_FUNCTIONAL_TOL;
    outcome(
        pass,
        format!(
            "circumference error {:.3}% (tol {}%); b = {:.7} vs 1/φ(2) = {b_exact:.7} (quoted {C7_QUOTED_B}), \
             A = {:.7} vs 9φ(2) = {a_exact:.7} (quoted {C7_QUOTED_A}), tol {C7_FUNCTIONAL_TOL:e}",
            100.0 * circle_err,
            100.0 * C7_CIRCLE_TOL,
            f.b,
            f.a[0]
        ),
    )
}

fn criterion_8() -> Outcome {
    let cfg = ExperimentConfig {
        model: "M13".into(),
        taus: vec![0.5],
        n: C8_N,
        reps: C8_REPS,
        seed: 42,
        kernel: "gaussian".into(),
        grid: GridConfig::default(),
        out: None,
        jobs: None,
    };
    let t0 = Instant::now();
    let out = run_experiment(&cfg).unwrap();
    let s = &out[0].summary;
    let med = s.median_ratio.unwrap_or(f64::NAN);
    let p = s.wilcoxon.map_or(f64::NAN, |w| w.p_two_sided);
    outcome(
        med > 1.0,
        format!(
            "median e(h_LSCV)/e(ĥ_opt) = {med:.3} over {} computable of {C8_REPS}, Wilcoxon p = {p:.3e}, {:.0}s",
            s.computable,
            t0.elapsed().as_secs_f64()
        ),
    )
}

// Two-sided p-value by listing every sign pattern; ranks by counting.
fn brute_force_p(d: &[f64]) -> f64 {
    let nz: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
    let rank = |a: f64| {
        let less = nz.iter().filter(|b| b.abs() < a.abs()).count() as f64;
        let eq = nz.iter().filter(|b| b.abs() == a.abs()).count() as f64;
        less + (eq + 1.0) / 2.0
    };
    let twice: Vec<i64> = nz.iter().map(|v| (2.0 * rank(*v)) as i64).collect();
    let observed: i64 = nz.iter().zip(&twice).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u32..1 << nz.len() {
        let w: i64 = (0..nz.len()).filter(|k| mask >> k & 1 == 1).map(|k| twice[k]).sum();
        le += u64::from(w <= observed);
        ge += u64::from(w >= observed);
    }
    (2.0 * le.min(ge) as f64 / (1u64 << nz.len()) as f64).min(1.0)
}

fn criterion_9() -> Outcome {
    let mut rng = lsbw::rng::seeded(909);
    let mut mismatches = 0;
    let mut checked = 0;
    for _ in 0..C9_CASES {
        let n = rng.random_range(1..=C9_MAX_N);
        // small integer magnitudes force ties and zeros
        let d: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(-4i32..=4))).collect();
        if d.iter().all(|v| *v == 0.0) {
            continue;
        }
        checked += 1;
        if wilcoxon_differences(&d).unwrap().p_two_sided != brute_force_p(&d) {
            mismatches += 1;
        }
    }
    let cfg = ExperimentConfig {
        model: "M13".into(),
        taus: vec![0.5, 0.8],
        n: 400,
        reps: 4,
        seed: 5,
        kernel: "gaussian".into(),
        grid: GridConfig {
            functional_res: 128,
            error_res: 256,
            ..GridConfig::default()
        },
        out: None,
        jobs: Some(1),
    };
    let serial = run_experiment(&cfg).unwrap();
    let again = run_experiment(&cfg).unwrap();
    let parallel = run_experiment(&ExperimentConfig { jobs: Some(4), ..cfg }).unwrap();
    let bits = |o: &[lsbw::harness::ExperimentOutcome]| -> Vec<u64> {
        o.iter()
            .flat_map(|x| &x.records)
            .flat_map(|r| [r.e_opt, r.e_lscv, r.ratio].map(|v| v.map_or(u64::MAX, f64::to_bits)))
            .collect()
    };
    let identical = serial == again && serial == parallel && bits(&serial) == bits(&parallel);
    outcome(
        mismatches == 0 && identical,
        format!("{mismatches} p-value mismatches in {checked} cases (n ≤ {C9_MAX_N}); re-run and 1 vs 4 threads identical: {identical}"),
    )
}

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 optimizer exactness", criterion_1),
        ("2 pointwise bias and variance", criterion_2),
        ("3 first-order risk expansion", criterion_3),
        ("4 exact L1 risk", criterion_4),
        ("5 band ratio", criterion_5),
        ("6 plug-in consistency", criterion_6),
        ("7 geometry", criterion_7),
        ("8 desk-scale comparison with LSCV", criterion_8),
        ("9 Wilcoxon and determinism", criterion_9),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {name}: {} [{:.1}s]", o.detail, t0.elapsed().as_secs_f64());
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    }
}
