//! C ABI over `lsbw`.
//!
//! Objects cross the boundary as opaque handles created by `*_new` style
//! functions and released with the matching `*_free`. Every fallible call
//! returns an [`LsbwStatus`]; on failure the message is available from
//! [`lsbw_last_error_message`] on the same thread until the next failure.
//! Panics are caught and reported as [`LsbwStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lsbw::bandwidth::{select_lscv, select_optimal, SearchBox};
use lsbw::harness::{run_experiment, wilcoxon_differences, ExperimentConfig, ExperimentOutcome, WilcoxonMethod};
use lsbw::mixtures::hdr_level;
use lsbw::{BandwidthVector, Error, KernelFamily, KernelSpec, Level, MixtureModel, Sample};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsbwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    EmptyLevelSet = 4,
    DegenerateCurvature = 5,
    Resolution = 6,
    Numerical = 7,
    UnknownModel = 8,
    Config = 9,
    Io = 10,
    /// The output buffer is too small.
    BufferTooSmall = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsbwKernel {
    Gaussian = 0,
    /// Fourth-order Gaussian-based kernel.
    Gaussian4 = 1,
}

/// Mixture model handle.
pub struct LsbwModel(MixtureModel);

/// Sample handle; points are stored row-major.
pub struct LsbwSample(Sample);

/// Finished experiment handle, one outcome per level.
pub struct LsbwExperiment(Vec<ExperimentOutcome>);

/// Summary of one level of an experiment. Absent values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsbwSummary {
    pub tau: f64,
    pub level: f64,
    pub reps: usize,
    pub computable: usize,
    pub incomputable: usize,
    pub failed: usize,
    pub incomputable_rate: f64,
    pub median_ratio: f64,
    pub wilcoxon_statistic: f64,
    pub wilcoxon_p: f64,
}

/// Wilcoxon signed-rank result.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsbwWilcoxon {
    pub statistic: f64,
    pub p_two_sided: f64,
    pub n: usize,
    /// 1 when the null distribution was enumerated exactly, 0 otherwise.
    pub exact: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LsbwStatus {
    match e {
        Error::InvalidArgument(_) => LsbwStatus::InvalidArgument,
        Error::DimensionMismatch { .. } => LsbwStatus::DimensionMismatch,
        Error::EmptyLevelSet { .. } => LsbwStatus::EmptyLevelSet,
        Error::DegenerateCurvature(_) => LsbwStatus::DegenerateCurvature,
        Error::Resolution(_) => LsbwStatus::Resolution,
        Error::Numerical(_) => LsbwStatus::Numerical,
        Error::UnknownModel(_) => LsbwStatus::UnknownModel,
        Error::Config(_) => LsbwStatus::Config,
        Error::Io { .. } | Error::Csv { .. } => LsbwStatus::Io,
    }
}

enum Fail {
    Lib(Error),
    Status(LsbwStatus, String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn null() -> Fail {
    Fail::Status(LsbwStatus::NullPointer, "null pointer argument".into())
}

// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> LsbwStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => LsbwStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            LsbwStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(s: *const c_char) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null());
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail::Status(LsbwStatus::InvalidArgument, "string is not valid UTF-8".into()))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(null)
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(null)
}

fn kernel_spec(k: LsbwKernel) -> Result<KernelSpec, Fail> {
    let family = match k {
        LsbwKernel::Gaussian => KernelFamily::Gaussian,
        LsbwKernel::Gaussian4 => KernelFamily::Gaussian4,
    };
    Ok(KernelSpec::new(family)?)
}

// Copies `h` into `out[..cap]`, failing when the buffer is short.
unsafe fn write_bandwidth(h: &BandwidthVector, out: *mut f64, cap: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null());
    }
    if cap < h.dim() {
        return Err(Fail::Status(
            LsbwStatus::BufferTooSmall,
            format!("bandwidth needs {} entries, buffer holds {cap}", h.dim()),
        ));
    }
    std::slice::from_raw_parts_mut(out, h.dim()).copy_from_slice(h.as_slice());
    Ok(())
}

/// Message of the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lsbw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Version string of the library (static storage).
#[no_mangle]
pub extern "C" fn lsbw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Looks a model up by registry id (`M13`, `normal-d1`, `normal-d2`,
/// `A`..`L`) or loads it from a TOML file path.
///
/// # Safety
/// `id` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lsbw_model_new(id: *const c_char, out: *mut *mut LsbwModel) -> LsbwStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = ptr::null_mut();
        let m = MixtureModel::resolve(str_arg(id)?)?;
        *out = Box::into_raw(Box::new(LsbwModel(m)));
        Ok(())
    })
}

/// Parses a mixture from TOML text.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lsbw_model_from_toml(text: *const c_char, out: *mut *mut LsbwModel) -> LsbwStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = ptr::null_mut();
        let m = MixtureModel::from_toml_str(str_arg(text)?)?;
        *out = Box::into_raw(Box::new(LsbwModel(m)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from `lsbw_model_new` or `lsbw_model_from_toml` and
/// not have been freed; NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn lsbw_model_free(model: *mut LsbwModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Dimension of the model, or 0 for NULL.
///
/// # Safety
/// `model` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn lsbw_model_dim(model: *const LsbwModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.dim())
}

/// Density at the point `x[0..dim]`.
///
/// # Safety
/// `model` must be a live handle, `x` must hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn lsbw_model_density(
    model: *const LsbwModel,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> LsbwStatus {
    guard(|| {
        let m = handle(model)?;
        *out_arg(out)? = m.0.density(slice_arg(x, dim)?)?;
        Ok(())
    })
}

/// Level `c(τ)` of the highest density region with probability `1 − τ`.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lsbw_model_hdr_level(model: *const LsbwModel, tau: f64, out: *mut f64) -> LsbwStatus {
    guard(|| {
        let m = handle(model)?;
        *out_arg(out)? = hdr_level(&m.0, tau)?.c;
        Ok(())
    })
}

/// Draws `n` points with the given seed.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lsbw_model_sample(
    model: *const LsbwModel,
    n: usize,
    seed: u64,
    out: *mut *mut LsbwSample,
) -> LsbwStatus {
    guard(|| {
        let m = handle(model)?;
        let out = out_arg(out)?;
        *out = ptr::null_mut();
        let s = m.0.sample(n, seed)?;
        *out = Box::into_raw(Box::new(LsbwSample(s)));
        Ok(())
    })
}

/// Copies `n` row-major points of dimension `dim`.
///
/// # Safety
/// `data` must hold `n * dim` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lsbw_sample_new(
    data: *const f64,
    n: usize,
    dim: usize,
    out: *mut *mut LsbwSample,
) -> LsbwStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = ptr::null_mut();
        let len = n
            .checked_mul(dim)
            .ok_or_else(|| Fail::Status(LsbwStatus::InvalidArgument, "n * dim overflows".into()))?;
        let s = Sample::new(dim, slice_arg(data, len)?.to_vec())?;
        *out = Box::into_raw(Box::new(LsbwSample(s)));
        Ok(())
    })
}

/// Reads a CSV point cloud (one point per row, optional header).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lsbw_sample_read_csv(path: *const c_char, out: *mut *mut LsbwSample) -> LsbwStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = ptr::null_mut();
        let s = Sample::read_csv(str_arg(path)?)?;
        *out = Box::into_raw(Box::new(LsbwSample(s)));
        Ok(())
    })
}

/// # Safety
/// `sample` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn lsbw_sample_free(sample: *mut LsbwSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

/// Number of points, or 0 for NULL.
///
/// # Safety
/// `sample` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn lsbw_sample_len(sample: *const LsbwSample) -> usize {
    sample.as_ref().map_or(0, |s| s.0.len())
}

/// Dimension, or 0 for NULL.
///
/// # Safety
/// `sample` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn lsbw_sample_dim(sample: *const LsbwSample) -> usize {
    sample.as_ref().map_or(0, |s| s.0.dim())
}

/// Kernel density estimate at `x[0..dim]` with bandwidths `h[0..dim]`.
///
/// # Safety
/// `sample` must be a live handle; `h` and `x` must hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn lsbw_kde_at(
    sample: *const LsbwSample,
    kernel: LsbwKernel,
    h: *const f64,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> LsbwStatus {
    guard(|| {
        let s = handle(sample)?;
        let h = BandwidthVector::new(slice_arg(h, dim)?.to_vec())?;
        *out_arg(out)? = lsbw::kde::kde_at(&s.0, &h, &kernel_spec(kernel)?, slice_arg(x, dim)?)?;
        Ok(())
    })
}

/// Risk-optimal plug-in bandwidth for the level set at `level`; writes
/// `dim` entries to `h_out`.
///
/// # Safety
/// `sample` must be a live handle; `h_out` must hold `h_cap` values.
#[no_mangle]
pub unsafe extern "C" fn lsbw_select_optimal(
    sample: *const LsbwSample,
    level: f64,
    kernel: LsbwKernel,
    h_out: *mut f64,
    h_cap: usize,
) -> LsbwStatus {
    guard(|| {
        let s = handle(sample)?;
        let sel = select_optimal(&s.0, Level::new(level)?, &kernel_spec(kernel)?)?;
        write_bandwidth(&sel.h, h_out, h_cap)
    })
}

/// Least-squares cross-validation bandwidth; writes `dim` entries.
///
/// # Safety
/// `sample` must be a live handle; `h_out` must hold `h_cap` values.
#[no_mangle]
pub unsafe extern "C" fn lsbw_select_lscv(
    sample: *const LsbwSample,
    kernel: LsbwKernel,
    h_out: *mut f64,
    h_cap: usize,
) -> LsbwStatus {
    guard(|| {
        let s = handle(sample)?;
        let sel = select_lscv(&s.0, &kernel_spec(kernel)?, SearchBox::default())?;
        write_bandwidth(&sel.h, h_out, h_cap)
    })
}

/// Wilcoxon signed-rank test on `n` paired differences.
///
/// # Safety
/// `differences` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lsbw_wilcoxon(differences: *const f64, n: usize, out: *mut LsbwWilcoxon) -> LsbwStatus {
    guard(|| {
        let w = wilcoxon_differences(slice_arg(differences, n)?)?;
        *out_arg(out)? = LsbwWilcoxon {
            statistic: w.statistic,
            p_two_sided: w.p_two_sided,
            n: w.n,
            exact: i32::from(w.method == WilcoxonMethod::Exact),
        };
        Ok(())
    })
}

/// Runs an experiment described by TOML text (the `simulate --config`
/// format). Result files are not written.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lsbw_experiment_run(config_toml: *const c_char, out: *mut *mut LsbwExperiment) -> LsbwStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = ptr::null_mut();
        let cfg = ExperimentConfig::from_toml_str(str_arg(config_toml)?)?;
        *out = Box::into_raw(Box::new(LsbwExperiment(run_experiment(&cfg)?)));
        Ok(())
    })
}

/// Number of levels in the experiment, or 0 for NULL.
///
/// # Safety
/// `exp` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn lsbw_experiment_levels(exp: *const LsbwExperiment) -> usize {
    exp.as_ref().map_or(0, |e| e.0.len())
}

/// Summary of level `index` (in configuration order).
///
/// # Safety
/// `exp` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lsbw_experiment_summary(
    exp: *const LsbwExperiment,
    index: usize,
    out: *mut LsbwSummary,
) -> LsbwStatus {
    guard(|| {
        let e = handle(exp)?;
        let o = e.0.get(index).ok_or_else(|| {
            Fail::Status(
                LsbwStatus::InvalidArgument,
                format!("level index {index} out of range for {} levels", e.0.len()),
            )
        })?;
        let s = &o.summary;
        *out_arg(out)? = LsbwSummary {
            tau: s.tau,
            level: s.level,
            reps: s.reps,
            computable: s.computable,
            incomputable: s.incomputable,
            failed: s.failed,
            incomputable_rate: s.incomputable_rate,
            median_ratio: s.median_ratio.unwrap_or(f64::NAN),
            wilcoxon_statistic: s.wilcoxon.map_or(f64::NAN, |w| w.statistic),
            wilcoxon_p: s.wilcoxon.map_or(f64::NAN, |w| w.p_two_sided),
        };
        Ok(())
    })
}

/// Error ratio `e_lscv / e_opt` of replication `rep` at level `index`;
/// NaN when the replication has no ratio.
///
/// # Safety
/// `exp` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lsbw_experiment_ratio(
    exp: *const LsbwExperiment,
    index: usize,
    rep: usize,
    out: *mut f64,
) -> LsbwStatus {
    guard(|| {
        let e = handle(exp)?;
        let r = e
            .0
            .get(index)
            .and_then(|o| o.records.get(rep))
            .ok_or_else(|| Fail::Status(LsbwStatus::InvalidArgument, format!("no replication {rep} at level {index}")))?;
        *out_arg(out)? = r.ratio.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// # Safety
/// `exp` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn lsbw_experiment_free(exp: *mut LsbwExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}
