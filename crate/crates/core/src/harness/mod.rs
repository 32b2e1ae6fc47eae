//! Simulation harness: the plug-in selector against least-squares
//! cross-validation on replicated samples from a mixture, scored by
//! `e(h) = λ_g(L Δ L̂)` with `g = |f − c|`.

pub mod output;
pub mod wilcoxon;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::functionals::FunctionalOptions;
use crate::bandwidth::lscv::{select_lscv, SearchBox};
use crate::bandwidth::select::select_optimal_with;
use crate::error::{Error, Result};
use crate::kde::{self, BandwidthVector, GridField, SortedKde1, DEFAULT_MARGIN, DEFAULT_RES_2D};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::levelset::{DEFAULT_SCAN_RESOLUTION, LevelSetBoundary};
use crate::mixtures::{hdr_level, Level, MixtureModel};
use crate::risk::symdiff::{self, sym_diff_error, Estimate, LineEstimate, DEFAULT_ERROR_RES};
use crate::risk::WeightFunction;
use crate::rng;
use crate::sample::Sample;

pub use output::{emit_results, read_replications_csv, read_summary};
pub use wilcoxon::{wilcoxon_differences, wilcoxon_signed_rank, Wilcoxon, WilcoxonMethod};

/// Smallest sample size accepted by an experiment.
pub const MIN_EXPERIMENT_N: usize = 100;

/// Grid resolutions of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Nodes per axis of the pilot-estimate grid used to find `M̂` (d = 2).
    pub functional_res: usize,
    /// Nodes per axis of the error grid (d = 2).
    pub error_res: usize,
    /// Scan points for one-dimensional root finding.
    pub scan_resolution: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            functional_res: DEFAULT_RES_2D,
            error_res: DEFAULT_ERROR_RES,
            scan_resolution: DEFAULT_SCAN_RESOLUTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Registry id or path to a mixture TOML file.
    pub model: String,
    pub taus: Vec<f64>,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    #[serde(default = "default_kernel")]
    pub kernel: String,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub jobs: Option<usize>,
}

fn default_kernel() -> String {
    "gaussian".into()
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.taus.is_empty() {
            return Err(Error::Config("at least one tau is required".into()));
        }
        if let Some(t) = self.taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::Config(format!("tau must lie in (0, 1), got {t}")));
        }
        if self.n < MIN_EXPERIMENT_N {
            return Err(Error::Config(format!("n must be at least {MIN_EXPERIMENT_N}, got {}", self.n)));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be positive".into()));
        }
        if self.grid.functional_res < 2 || self.grid.error_res < 2 || self.grid.scan_resolution < 2 {
            return Err(Error::Config("grid resolutions must be at least 2".into()));
        }
        self.kernel_spec()?;
        Ok(())
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        KernelSpec::new(self.kernel.parse::<KernelFamily>()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordStatus {
    Ok,
    /// The plug-in selector had no estimated boundary or a degenerate
    /// curvature matrix.
    Incomputable,
    /// Least-squares cross-validation failed.
    LscvFailed,
    Failed,
}

impl RecordStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordStatus::Ok => "ok",
            RecordStatus::Incomputable => "incomputable",
            RecordStatus::LscvFailed => "lscv-failed",
            RecordStatus::Failed => "failed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(RecordStatus::Ok),
            "incomputable" => Ok(RecordStatus::Incomputable),
            "lscv-failed" => Ok(RecordStatus::LscvFailed),
            "failed" => Ok(RecordStatus::Failed),
            other => Err(Error::arg(format!("unknown record status `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub seed: u64,
    pub h_opt: Option<BandwidthVector>,
    pub h_lscv: Option<BandwidthVector>,
    pub e_opt: Option<f64>,
    pub e_lscv: Option<f64>,
    /// `e_lscv / e_opt`, present iff both errors are.
    pub ratio: Option<f64>,
    pub status: RecordStatus,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub model: String,
    pub tau: f64,
    pub level: f64,
    pub n: usize,
    pub reps: usize,
    pub kernel: String,
    pub computable: usize,
    pub incomputable: usize,
    pub incomputable_rate: f64,
    pub failed: usize,
    pub median_ratio: Option<f64>,
    /// Signed-rank test of `log e_lscv − log e_opt`.
    pub wilcoxon: Option<Wilcoxon>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub summary: Summary,
    pub records: Vec<ReplicationRecord>,
}

/// Runs every `tau` of the configuration.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ExperimentOutcome>> {
    config.validate()?;
    let model = MixtureModel::resolve(&config.model)?;
    if !(1..=2).contains(&model.dim()) {
        return Err(Error::Config(format!("experiments support d in {{1, 2}}, got {}", model.dim())));
    }
    let run = || {
        config
            .taus
            .iter()
            .map(|&tau| {
                let level = hdr_level(&model, tau)?;
                run_level(&model, level, config)
            })
            .collect()
    };
    match config.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run),
        None => run(),
    }
}

/// Replications at one level.
pub fn run_level(model: &MixtureModel, level: Level, config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let spec = config.kernel_spec()?;
    let records: Vec<ReplicationRecord> = (0..config.reps)
        .into_par_iter()
        .map(|rep| replication(model, level, &spec, config, rep))
        .collect();
    let summary = summarize(config, level, &records);
    Ok(ExperimentOutcome { summary, records })
}

/// The sample of replication `rep`.
pub fn replication_sample(model: &MixtureModel, config: &ExperimentConfig, rep: usize) -> Result<Sample> {
    model.sample_with(config.n, &mut rng::replication_rng(config.seed, rep as u64))
}

fn functional_options(config: &ExperimentConfig) -> FunctionalOptions {
    FunctionalOptions {
        scan_resolution: config.grid.scan_resolution,
        grid_res: config.grid.functional_res,
        grid_margin: DEFAULT_MARGIN,
    }
}

fn replication(
    model: &MixtureModel,
    level: Level,
    spec: &KernelSpec,
    config: &ExperimentConfig,
    rep: usize,
) -> ReplicationRecord {
    let mut record = ReplicationRecord {
        rep,
        seed: config.seed,
        h_opt: None,
        h_lscv: None,
        e_opt: None,
        e_lscv: None,
        ratio: None,
        status: RecordStatus::Ok,
        message: None,
    };
    let sample = match replication_sample(model, config, rep) {
        Ok(s) => s,
        Err(e) => {
            record.status = RecordStatus::Failed;
            record.message = Some(e.to_string());
            return record;
        }
    };
    match select_optimal_with(&sample, level, spec, &functional_options(config)) {
        Ok(sel) => record.h_opt = Some(sel.h),
        Err(e @ (Error::EmptyLevelSet { .. } | Error::DegenerateCurvature(_))) => {
            record.status = RecordStatus::Incomputable;
            record.message = Some(e.to_string());
        }
        Err(e) => {
            record.status = RecordStatus::Failed;
            record.message = Some(e.to_string());
        }
    }
    match select_lscv(&sample, spec, SearchBox::default()) {
        Ok(sel) => {
            if sel.boundary_warning {
                record.message.get_or_insert_with(|| "LSCV minimiser on the search box edge".into());
            }
            record.h_lscv = Some(sel.h);
        }
        Err(e) => {
            if record.status == RecordStatus::Ok {
                record.status = RecordStatus::LscvFailed;
            }
            record.message.get_or_insert(e.to_string());
        }
    }
    let bandwidths: Vec<&BandwidthVector> = [&record.h_opt, &record.h_lscv].into_iter().flatten().collect();
    if bandwidths.is_empty() {
        return record;
    }
    match errors(model, level.c, spec, &sample, &record.h_opt, &record.h_lscv, config) {
        Ok((e_opt, e_lscv)) => {
            record.e_opt = e_opt;
            record.e_lscv = e_lscv;
            if let (Some(a), Some(b)) = (e_opt, e_lscv) {
                record.ratio = Some(b / a);
            }
        }
        Err(e) => {
            record.status = RecordStatus::Failed;
            record.message = Some(e.to_string());
        }
    }
    record
}

// Errors of both estimates; in two dimensions on one grid whose box covers
// the model box and the sample padded for the wider bandwidth.
fn errors(
    model: &MixtureModel,
    c: f64,
    spec: &KernelSpec,
    sample: &Sample,
    h_opt: &Option<BandwidthVector>,
    h_lscv: &Option<BandwidthVector>,
    config: &ExperimentConfig,
) -> Result<(Option<f64>, Option<f64>)> {
    let g = WeightFunction::excess(c)?;
    match model.dim() {
        1 => {
            let one = |h: &Option<BandwidthVector>| -> Result<Option<f64>> {
                let Some(h) = h else { return Ok(None) };
                let kde = SortedKde1::new(sample, h[0], spec)?;
                let est = Estimate::Line(LineEstimate::from_sorted(&kde));
                Ok(Some(sym_diff_error(model, c, &est, &g)?.value))
            };
            Ok((one(h_opt)?, one(h_lscv)?))
        }
        _ => {
            let widest = [h_opt, h_lscv]
                .into_iter()
                .flatten()
                .max_by(|a, b| a.max().total_cmp(&b.max()))
                .expect("at least one bandwidth");
            let grid = symdiff::error_grid(model, sample, widest, config.grid.error_res)?;
            let truth = symdiff::truth_grid(model, &grid)?;
            let one = |h: &Option<BandwidthVector>| -> Result<Option<f64>> {
                let Some(h) = h else { return Ok(None) };
                let field = kde::kde_grid_truncated(sample, h, spec, &grid)?;
                Ok(Some(symdiff::sym_diff_grid(&truth, &field, c, &g)?.value))
            };
            Ok((one(h_opt)?, one(h_lscv)?))
        }
    }
}

/// Median of a nonempty slice (mean of the middle pair for even length).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn summarize(config: &ExperimentConfig, level: Level, records: &[ReplicationRecord]) -> Summary {
    let ratios: Vec<f64> = records.iter().filter_map(|r| r.ratio).collect();
    let incomputable = records.iter().filter(|r| r.status == RecordStatus::Incomputable).count();
    let failed = records
        .iter()
        .filter(|r| matches!(r.status, RecordStatus::Failed | RecordStatus::LscvFailed))
        .count();
    let logs: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
    Summary {
        model: config.model.clone(),
        tau: level.tau.unwrap_or(f64::NAN),
        level: level.c,
        n: config.n,
        reps: records.len(),
        kernel: config.kernel.clone(),
        computable: ratios.len(),
        incomputable,
        incomputable_rate: incomputable as f64 / records.len().max(1) as f64,
        failed,
        median_ratio: median(&ratios),
        wilcoxon: wilcoxon_differences(&logs).ok(),
    }
}

/// Estimated boundaries of replication `rep` under both selectors, plus the
/// true boundary, on the replication's error grid (two dimensions only).
pub fn replication_boundaries(
    model: &MixtureModel,
    level: Level,
    config: &ExperimentConfig,
    record: &ReplicationRecord,
) -> Result<Vec<(&'static str, LevelSetBoundary)>> {
    if model.dim() != 2 {
        return Err(Error::arg("boundary export needs a bivariate model"));
    }
    let spec = config.kernel_spec()?;
    let sample = replication_sample(model, config, record.rep)?;
    let widest = [&record.h_opt, &record.h_lscv]
        .into_iter()
        .flatten()
        .max_by(|a, b| a.max().total_cmp(&b.max()))
        .ok_or_else(|| Error::arg("record has no bandwidth"))?;
    let grid = symdiff::error_grid(model, &sample, widest, config.grid.error_res)?;
    let mut out = vec![("true", crate::levelset::extract_d2(&symdiff::truth_grid(model, &grid)?, level.c)?)];
    for (name, h) in [("opt", &record.h_opt), ("lscv", &record.h_lscv)] {
        if let Some(h) = h {
            let field: GridField = kde::kde_grid_truncated(&sample, h, &spec, &grid)?;
            out.push((name, crate::levelset::extract_d2(&field, level.c)?));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            model: "normal-d1".into(),
            taus: vec![0.5],
            n: 400,
            reps: 4,
            seed: 7,
            kernel: "gaussian".into(),
            grid: GridConfig::default(),
            out: None,
            jobs: Some(1),
        }
    }

    #[test]
    fn config_parsing_and_validation() {
        let cfg = ExperimentConfig::from_toml_str(
            "model = \"M13\"\ntaus = [0.2, 0.5]\nn = 2000\nreps = 3\nseed = 1\n[grid]\nerror_res = 256\n",
        )
        .unwrap();
        assert_eq!(cfg.kernel, "gaussian");
        assert_eq!(cfg.grid.error_res, 256);
        assert_eq!(cfg.grid.functional_res, DEFAULT_RES_2D);
        for bad in [
            "model = \"M13\"\ntaus = [1.2]\nn = 2000\nreps = 3\nseed = 1\n",
            "model = \"M13\"\ntaus = [0.5]\nn = 50\nreps = 3\nseed = 1\n",
            "model = \"M13\"\ntaus = [0.5]\nn = 500\nreps = 0\nseed = 1\n",
            "model = \"M13\"\ntaus = [0.5]\nn = 500\nreps = 1\nseed = 1\nkernel = \"box\"\n",
            "model = \"M13\"\ntaus = [0.5]\nn = 500\nreps = 1\nseed = 1\nextra = 3\n",
        ] {
            assert!(ExperimentConfig::from_toml_str(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn one_dimensional_run_is_deterministic() {
        let cfg = small_config();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&ExperimentConfig { jobs: Some(2), ..cfg }).unwrap();
        assert_eq!(a, b);
        let s = &a[0].summary;
        assert_eq!(s.reps, 4);
        for r in &a[0].records {
            assert_eq!(r.ratio.is_some(), r.e_opt.is_some() && r.e_lscv.is_some());
            assert!(r.e_opt.unwrap_or(0.0) >= 0.0 && r.e_lscv.unwrap_or(0.0) >= 0.0);
        }
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn status_round_trip() {
        for s in [RecordStatus::Ok, RecordStatus::Incomputable, RecordStatus::LscvFailed, RecordStatus::Failed] {
            assert_eq!(RecordStatus::parse(s.as_str()).unwrap(), s);
        }
    }
}
