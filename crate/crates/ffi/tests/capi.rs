use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use lsbw_ffi::*;

fn last_error() -> String {
    let p = lsbw_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn model_round_trip() {
    let id = CString::new("normal-d1").unwrap();
    let mut model = ptr::null_mut();
    unsafe {
        assert_eq!(lsbw_model_new(id.as_ptr(), &mut model), LsbwStatus::Ok);
        assert_eq!(lsbw_model_dim(model), 1);
        let mut f = 0.0;
        assert_eq!(lsbw_model_density(model, [0.0].as_ptr(), 1, &mut f), LsbwStatus::Ok);
        assert!((f - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert_eq!(lsbw_model_density(model, [0.0, 1.0].as_ptr(), 2, &mut f), LsbwStatus::DimensionMismatch);
        let mut sample = ptr::null_mut();
        assert_eq!(lsbw_model_sample(model, 500, 3, &mut sample), LsbwStatus::Ok);
        assert_eq!((lsbw_sample_len(sample), lsbw_sample_dim(sample)), (500, 1));
        let mut fhat = 0.0;
        assert_eq!(
            lsbw_kde_at(sample, LsbwKernel::Gaussian, [0.3].as_ptr(), [0.0].as_ptr(), 1, &mut fhat),
            LsbwStatus::Ok
        );
        assert!((fhat - 0.4).abs() < 0.1, "{fhat}");
        lsbw_sample_free(sample);
        lsbw_model_free(model);
    }
}

#[test]
fn errors_are_reported() {
    let id = CString::new("no-such-model").unwrap();
    let mut model = ptr::null_mut();
    unsafe {
        assert_eq!(lsbw_model_new(id.as_ptr(), &mut model), LsbwStatus::UnknownModel);
        assert!(model.is_null());
        assert!(last_error().contains("no-such-model"));
        assert_eq!(lsbw_model_new(ptr::null(), &mut model), LsbwStatus::NullPointer);
        assert_eq!(lsbw_model_dim(ptr::null()), 0);
        lsbw_model_free(ptr::null_mut());
        let mut sample = ptr::null_mut();
        assert_eq!(lsbw_sample_new([1.0, f64::NAN].as_ptr(), 1, 2, &mut sample), LsbwStatus::InvalidArgument);
        assert!(last_error().contains("non-finite"));
        assert_eq!(lsbw_sample_new([1.0].as_ptr(), 1, 0, &mut sample), LsbwStatus::InvalidArgument);
        let mut h = [0.0; 1];
        assert_eq!(lsbw_select_lscv(ptr::null(), LsbwKernel::Gaussian, h.as_mut_ptr(), 1), LsbwStatus::NullPointer);
    }
}

#[test]
fn selection_through_handles() {
    let id = CString::new("normal-d1").unwrap();
    let mut model = ptr::null_mut();
    let mut sample = ptr::null_mut();
    unsafe {
        assert_eq!(lsbw_model_new(id.as_ptr(), &mut model), LsbwStatus::Ok);
        assert_eq!(lsbw_model_sample(model, 2000, 5, &mut sample), LsbwStatus::Ok);
        let mut c = 0.0;
        assert_eq!(lsbw_model_hdr_level(model, 0.5, &mut c), LsbwStatus::Ok);
        assert!((c - 0.317777).abs() < 1e-3);
        let mut h = [0.0; 1];
        assert_eq!(lsbw_select_optimal(sample, c, LsbwKernel::Gaussian, h.as_mut_ptr(), 1), LsbwStatus::Ok);
        assert!(h[0] > 0.05 && h[0] < 1.0, "{h:?}");
        assert_eq!(lsbw_select_lscv(sample, LsbwKernel::Gaussian, h.as_mut_ptr(), 1), LsbwStatus::Ok);
        assert!(h[0] > 0.05 && h[0] < 1.0, "{h:?}");
        assert_eq!(
            lsbw_select_optimal(sample, c, LsbwKernel::Gaussian, h.as_mut_ptr(), 0),
            LsbwStatus::BufferTooSmall
        );
        assert_eq!(
            lsbw_select_optimal(sample, 5.0, LsbwKernel::Gaussian, h.as_mut_ptr(), 1),
            LsbwStatus::EmptyLevelSet
        );
        lsbw_sample_free(sample);
        lsbw_model_free(model);
    }
}

#[test]
fn wilcoxon_and_experiment() {
    let mut w = LsbwWilcoxon {
        statistic: 0.0,
        p_two_sided: 0.0,
        n: 0,
        exact: 0,
    };
    unsafe {
        assert_eq!(lsbw_wilcoxon([1.0, 2.0, 3.0].as_ptr(), 3, &mut w), LsbwStatus::Ok);
        assert_eq!((w.statistic, w.p_two_sided, w.n, w.exact), (6.0, 0.25, 3, 1));
        assert_eq!(lsbw_wilcoxon([0.0].as_ptr(), 1, &mut w), LsbwStatus::InvalidArgument);

        let cfg = CString::new("model = \"normal-d1\"\ntaus = [0.5]\nn = 300\nreps = 3\nseed = 9\n").unwrap();
        let mut exp = ptr::null_mut();
        assert_eq!(lsbw_experiment_run(cfg.as_ptr(), &mut exp), LsbwStatus::Ok);
        assert_eq!(lsbw_experiment_levels(exp), 1);
        let mut s = std::mem::zeroed::<LsbwSummary>();
        assert_eq!(lsbw_experiment_summary(exp, 0, &mut s), LsbwStatus::Ok);
        assert_eq!((s.reps, s.tau), (3, 0.5));
        let mut r = 0.0;
        assert_eq!(lsbw_experiment_ratio(exp, 0, 2, &mut r), LsbwStatus::Ok);
        assert_eq!(lsbw_experiment_ratio(exp, 0, 3, &mut r), LsbwStatus::InvalidArgument);
        assert_eq!(lsbw_experiment_summary(exp, 1, &mut s), LsbwStatus::InvalidArgument);
        lsbw_experiment_free(exp);

        let bad = CString::new("model = \"normal-d1\"\ntaus = [1.5]\nn = 300\nreps = 3\nseed = 9\n").unwrap();
        assert_eq!(lsbw_experiment_run(bad.as_ptr(), &mut exp), LsbwStatus::Config);
        assert!(exp.is_null());
    }
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include").join("lsbw.h")
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "lsbw_last_error_message",
        "lsbw_model_new",
        "lsbw_model_free",
        "lsbw_sample_new",
        "lsbw_select_optimal",
        "lsbw_select_lscv",
        "lsbw_wilcoxon",
        "lsbw_experiment_run",
        "typedef struct LsbwModel LsbwModel;",
        "LSBW_STATUS_EMPTY_LEVEL_SET = 4",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

// Compiles and runs a C program against the header and static library when
// a C compiler is available.
#[test]
fn c_program_links_against_the_library() {
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("liblsbw_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "lsbw.h"
int main(void) {
    LsbwModel *m = NULL;
    LsbwSample *s = NULL;
    double c = 0.0, h[1];
    if (lsbw_model_new("normal-d1", &m) != LSBW_STATUS_OK) return 1;
    if (lsbw_model_hdr_level(m, 0.5, &c) != LSBW_STATUS_OK) return 2;
    if (lsbw_model_sample(m, 1000, 1, &s) != LSBW_STATUS_OK) return 3;
    if (lsbw_select_optimal(s, c, LSBW_KERNEL_GAUSSIAN, h, 1) != LSBW_STATUS_OK) return 4;
    lsbw_model_free(m);
    if (lsbw_model_new("nope", &m) != LSBW_STATUS_UNKNOWN_MODEL) return 5;
    printf("%.6f\n", h[0]);
    lsbw_sample_free(s);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    let h: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!(h > 0.05 && h < 1.0);
}
