use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lsbw::bandwidth::functionals::FunctionalOptions;
use lsbw::bandwidth::{sample_hdr_level, select_lscv, select_optimal_with, SearchBox};
use lsbw::harness::{self, emit_results, ExperimentConfig, GridConfig};
use lsbw::kde::{DEFAULT_MARGIN, DEFAULT_RES_2D};
use lsbw::levelset::DEFAULT_SCAN_RESOLUTION;
use lsbw::mixtures::hdr_level;
use lsbw::risk::{self, verify, WeightFunction, WeightKind};
use lsbw::{BandwidthVector, KernelFamily, KernelSpec, Level, MixtureModel, Sample};

#[derive(Parser)]
#[command(name = "lsbw", version, about = "Risk-optimal bandwidths for kernel density level sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Level c(τ) of a model's highest density region.
    HdrLevel {
        #[arg(long)]
        model: String,
        #[arg(long)]
        tau: f64,
    },
    /// Select a bandwidth for a CSV point cloud.
    SelectBandwidth(SelectArgs),
    /// Monte Carlo checks of the risk expansions.
    Verify(VerifyArgs),
    /// Replicated comparison of the plug-in selector against LSCV.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Opt,
    Lscv,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, conflicts_with = "tau")]
    level: Option<f64>,
    /// HDR parameter; the level comes from `--model` when given, else from
    /// the data.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, requires = "tau")]
    model: Option<String>,
    #[arg(long, default_value = "gaussian")]
    kernel: KernelFamily,
    #[arg(long, value_enum, default_value = "opt")]
    method: Method,
    #[arg(long, default_value_t = DEFAULT_RES_2D)]
    grid_res: usize,
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    grid_margin: f64,
    #[arg(long, default_value_t = DEFAULT_SCAN_RESOLUTION)]
    scan_resolution: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    Theorem1,
    Corollary1,
    Proposition1,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    check: Check,
    #[arg(long)]
    model: String,
    #[arg(long, conflicts_with = "level")]
    tau: Option<f64>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "gaussian")]
    kernel: KernelFamily,
    /// Isotropic bandwidth; defaults to n^(−1/(2ν+d)).
    #[arg(long)]
    h: Option<f64>,
    /// Weight g: unit, density, excess or power:q. Defaults to excess, or
    /// unit for corollary1.
    #[arg(long)]
    weight: Option<WeightKind>,
    /// Band widths for proposition1, strictly decreasing.
    #[arg(long, value_delimiter = ',', default_value = "0.04,0.02,0.01")]
    deltas: Vec<f64>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML experiment file; other flags are then ignored.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    model: Option<String>,
    #[arg(long, value_delimiter = ',', required_unless_present = "config")]
    tau: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "gaussian")]
    kernel: String,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_RES_2D)]
    functional_res: usize,
    #[arg(long, default_value_t = risk::DEFAULT_ERROR_RES)]
    error_res: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::HdrLevel { model, tau } => {
            let m = MixtureModel::resolve(&model)?;
            println!("c = {}", hdr_level(&m, tau)?.c);
            Ok(())
        }
        Command::SelectBandwidth(a) => select(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Simulate(a) => simulate(a),
    }
}

fn kv(out: &mut impl Write, key: &str, value: impl std::fmt::Display) -> std::io::Result<()> {
    writeln!(out, "{key} = {value}")
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn select(a: SelectArgs) -> anyhow::Result<()> {
    let sample = Sample::read_csv(&a.data)?;
    let spec = KernelSpec::new(a.kernel)?;
    let level = match (a.level, a.tau, &a.model) {
        (Some(c), _, _) => Level::new(c)?,
        (None, Some(t), Some(m)) => hdr_level(&MixtureModel::resolve(m)?, t)?,
        (None, Some(t), None) => sample_hdr_level(&sample, t, &spec)?,
        (None, None, _) => bail!("one of --level or --tau is required"),
    };
    let out = &mut std::io::stdout().lock();
    let header: Vec<String> = (1..=sample.dim()).map(|k| format!("h_{k}")).collect();
    match a.method {
        Method::Opt => {
            let opts = FunctionalOptions {
                scan_resolution: a.scan_resolution,
                grid_res: a.grid_res,
                grid_margin: a.grid_margin,
            };
            let sel = select_optimal_with(&sample, level, &spec, &opts)?;
            writeln!(out, "{}", header.join(","))?;
            writeln!(out, "{}", join(sel.h.as_slice()))?;
            kv(out, "level", level.c)?;
            kv(out, "b_hat", sel.functionals.b)?;
            kv(out, "A_hat", join(&sel.functionals.a))?;
            kv(out, "boundary_nodes", sel.functionals.nodes)?;
            if let Some(p) = &sel.pilots {
                kv(out, "pilot_h0", join(p.h0.as_slice()))?;
                kv(out, "pilot_h1", join(p.h1.as_slice()))?;
                kv(out, "pilot_h2", join(p.h2.as_slice()))?;
            }
        }
        Method::Lscv => {
            let sel = select_lscv(&sample, &spec, SearchBox::default())?;
            writeln!(out, "{}", header.join(","))?;
            writeln!(out, "{}", join(sel.h.as_slice()))?;
            kv(out, "level", level.c)?;
            kv(out, "lscv_score", sel.score)?;
            kv(out, "boundary_warning", sel.boundary_warning)?;
            kv(out, "evaluations", sel.evaluations)?;
        }
    }
    Ok(())
}

fn verify_cmd(a: VerifyArgs) -> anyhow::Result<()> {
    let model = MixtureModel::resolve(&a.model)?;
    let c = match (a.level, a.tau) {
        (Some(c), _) => Level::new(c)?.c,
        (None, Some(t)) => hdr_level(&model, t)?.c,
        (None, None) => bail!("one of --level or --tau is required"),
    };
    let spec = KernelSpec::new(a.kernel)?;
    let d = model.dim();
    let h = a
        .h
        .unwrap_or_else(|| (a.n as f64).powf(-1.0 / f64::from(2 * spec.order + d as u32)));
    let h = BandwidthVector::isotropic(h, d)?;
    if verify::h1_statistic(a.n, &h) < verify::H1_WARNING_THRESHOLD {
        eprintln!(
            "warning: n·Πh·‖h‖⁴/log n = {:.4} is below {}; the asymptotic regime may not apply",
            verify::h1_statistic(a.n, &h),
            verify::H1_WARNING_THRESHOLD
        );
    }
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| p.display().to_string())?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    match a.check {
        Check::Theorem1 => {
            let kind = a.weight.unwrap_or(WeightKind::Excess);
            let g = WeightFunction::new(kind, c)?;
            let rs = risk::theorem1_ratios(&model, c, &g, a.n, &h, &spec, a.reps, a.seed)?;
            w.write_record(["row", "lhs", "rhs", "ratio", "degenerate"])?;
            for (i, r) in rs.iter().enumerate() {
                w.write_record([i.to_string(), r.lhs.to_string(), r.rhs.to_string(), r.ratio.to_string(), r.degenerate.to_string()])?;
            }
            let k = rs.len() as f64;
            let ratios: Vec<f64> = rs.iter().map(|r| r.ratio).collect();
            let med = harness::median(&ratios).unwrap_or(f64::NAN);
            let degenerate = rs.iter().filter(|r| r.degenerate).count();
            w.write_record([
                "summary".to_string(),
                (rs.iter().map(|r| r.lhs).sum::<f64>() / k).to_string(),
                (rs.iter().map(|r| r.rhs).sum::<f64>() / k).to_string(),
                med.to_string(),
                degenerate.to_string(),
            ])?;
        }
        Check::Corollary1 => {
            let kind = a.weight.unwrap_or(WeightKind::Unit);
            let g = WeightFunction::new(kind, c)?;
            let o = risk::verify_corollary1(&model, c, &g, a.n, &h, &spec, a.reps, a.seed)?;
            w.write_record(["row", "error", "formula", "ratio"])?;
            let f = o.formula.value;
            for (i, e) in o.errors.iter().enumerate() {
                w.write_record([i.to_string(), e.to_string(), f.to_string(), (e / f).to_string()])?;
            }
            w.write_record(["summary".to_string(), o.monte_carlo.value.to_string(), f.to_string(), o.ratio.to_string()])?;
        }
        Check::Proposition1 => {
            if a.weight.is_some_and(|k| k != WeightKind::Excess) {
                bail!("proposition1 uses the excess weight |f − c|");
            }
            let per_rep = risk::proposition1_replicates(&model, c, a.n, &h, &spec, &a.deltas, a.reps, a.seed)?;
            w.write_record(["row", "delta", "numerator", "denominator", "ratio"])?;
            for (i, r) in per_rep.iter().enumerate() {
                for (delta, den) in a.deltas.iter().zip(&r.denominators) {
                    let ratio = 2.0 * delta * r.numerator / den;
                    w.write_record([i.to_string(), delta.to_string(), r.numerator.to_string(), den.to_string(), ratio.to_string()])?;
                }
            }
            for p in risk::proposition1_points(&a.deltas, &per_rep) {
                w.write_record([
                    "summary".to_string(),
                    p.delta.to_string(),
                    p.numerator.to_string(),
                    p.denominator.to_string(),
                    p.ratio.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let config = match &a.config {
        Some(path) => ExperimentConfig::from_toml_file(path)?,
        None => {
            let cfg = ExperimentConfig {
                model: a.model.clone().expect("required by clap"),
                taus: a.tau.clone(),
                n: a.n,
                reps: a.reps,
                seed: a.seed,
                kernel: a.kernel.clone(),
                grid: GridConfig {
                    functional_res: a.functional_res,
                    error_res: a.error_res,
                    ..GridConfig::default()
                },
                out: a.out.clone(),
                jobs: a.jobs,
            };
            cfg.validate()?;
            cfg
        }
    };
    let model = MixtureModel::resolve(&config.model)?;
    let outcomes = harness::run_experiment(&config)?;
    let multiple = outcomes.len() > 1;
    for o in &outcomes {
        let s = &o.summary;
        print!("{}", harness::output::format_summary(s));
        if multiple {
            println!();
        }
        for r in o.records.iter().filter(|r| r.message.is_some()) {
            eprintln!("rep {} ({}): {}", r.rep, r.status.as_str(), r.message.as_deref().unwrap_or(""));
        }
        if let Some(dir) = &config.out {
            let dir = if multiple { dir.join(format!("tau_{}", s.tau)) } else { dir.clone() };
            for p in emit_results(o, &model, &config, &dir)? {
                eprintln!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}
