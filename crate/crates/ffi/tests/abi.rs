use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use sfsda::inference::sfs_da;
use sfsda::{generate_synthetic, PenaltyConfig, SyntheticConfig};
use sfsda_ffi::*;

fn row_major(m: &sfsda::nalgebra::DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn last_error() -> String {
    let p = sfsda_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

#[test]
fn infer_through_handles_matches_rust_api() {
    let d = generate_synthetic(&SyntheticConfig::constant(20, 8, 3, 2.0, 0.5, 11)).unwrap();
    let penalty = PenaltyConfig::lasso(3.0);
    let expected = sfs_da(&d, &penalty).unwrap();

    let xs = row_major(d.source_features());
    let xt = row_major(d.target_features());
    let mut ds: *mut SfsdaDataset = ptr::null_mut();
    let status = unsafe {
        sfsda_dataset_new(
            xs.as_ptr(),
            d.source_response().as_ptr(),
            20,
            xt.as_ptr(),
            d.target_response().as_ptr(),
            8,
            3,
            1.0,
            &mut ds,
        )
    };
    assert_eq!(status, SfsdaStatus::Ok);
    let mut report: *mut SfsdaReport = ptr::null_mut();
    assert_eq!(unsafe { sfsda_infer(ds, 3.0, 0.0, &mut report) }, SfsdaStatus::Ok);
    let len = unsafe { sfsda_report_len(report) };
    assert_eq!(len, expected.len());
    for (k, e) in expected.iter().enumerate() {
        let (mut feature, mut stat, mut sd, mut p) = (0usize, 0.0, 0.0, 0.0);
        let s = unsafe { sfsda_report_feature(report, k, &mut feature, &mut stat, &mut sd, &mut p) };
        assert_eq!(s, SfsdaStatus::Ok);
        assert_eq!(feature, e.feature);
        assert_eq!(p.to_bits(), e.p_value.to_bits());
        assert_eq!(stat.to_bits(), e.statistic.to_bits());
        assert_eq!(sd.to_bits(), e.statistic_sd.to_bits());

        let mut count = 0usize;
        assert_eq!(unsafe { sfsda_report_intervals(report, k, ptr::null_mut(), 0, &mut count) }, SfsdaStatus::Ok);
        assert_eq!(count, e.region.len());
        let mut buf = vec![0.0; 2 * count];
        assert_eq!(unsafe { sfsda_report_intervals(report, k, buf.as_mut_ptr(), count, &mut count) }, SfsdaStatus::Ok);
        let flat: Vec<f64> = e.region.intervals().iter().flat_map(|&(a, b)| [a, b]).collect();
        assert_eq!(buf, flat);

        let mut again = 0.0;
        assert_eq!(unsafe { sfsda_truncated_p(buf.as_ptr(), count, sd, stat, &mut again) }, SfsdaStatus::Ok);
        assert_eq!(again.to_bits(), p.to_bits());
    }
    let s = unsafe { sfsda_report_feature(report, len, ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(s, SfsdaStatus::InvalidArgument);
    assert!(last_error().contains("out of range"));
    unsafe {
        sfsda_report_free(report);
        sfsda_dataset_free(ds);
    }
}

#[test]
fn error_codes() {
    let mut ds: *mut SfsdaDataset = ptr::null_mut();
    let missing = CString::new("/nonexistent/source.csv").unwrap();
    let s = unsafe { sfsda_dataset_from_csv(missing.as_ptr(), missing.as_ptr(), 1.0, &mut ds) };
    assert_eq!(s, SfsdaStatus::IoError);
    assert!(ds.is_null());
    assert!(last_error().contains("nonexistent"));

    let x = [1.0, 2.0];
    let s = unsafe { sfsda_dataset_new(x.as_ptr(), x.as_ptr(), 2, x.as_ptr(), x.as_ptr(), 2, 1, -1.0, &mut ds) };
    assert_eq!(s, SfsdaStatus::InvalidArgument);

    let s = unsafe { sfsda_dataset_new(ptr::null(), x.as_ptr(), 2, x.as_ptr(), x.as_ptr(), 2, 1, 1.0, &mut ds) };
    assert_eq!(s, SfsdaStatus::InvalidArgument);

    let mut out = 0.0;
    let far = [40.0, 41.0];
    assert_eq!(unsafe { sfsda_truncated_p(far.as_ptr(), 1, 1.0, 40.5, &mut out) }, SfsdaStatus::NumericalError);
    let reversed = [2.0, 1.0];
    assert_eq!(unsafe { sfsda_truncated_p(reversed.as_ptr(), 1, 1.0, 1.0, &mut out) }, SfsdaStatus::InvalidArgument);
    let whole = [-30.0, 30.0];
    assert_eq!(unsafe { sfsda_truncated_p(whole.as_ptr(), 1, 1.0, 0.0, &mut out) }, SfsdaStatus::Ok);
    assert!((out - 1.0).abs() < 1e-15);
    assert!(sfsda_last_error_message().is_null());

    assert_eq!(unsafe { sfsda_infer(ptr::null(), 1.0, 0.0, &mut ptr::null_mut()) }, SfsdaStatus::InvalidArgument);
    assert_eq!(unsafe { sfsda_report_len(ptr::null()) }, 0);
    unsafe {
        sfsda_dataset_free(ptr::null_mut());
        sfsda_report_free(ptr::null_mut());
    }
}

fn artifact_dir() -> PathBuf {
    // tests/abi-<hash> lives in target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_header_and_static_library() {
    let compiler = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok());
    let Some(compiler) = compiler else {
        eprintln!("no C compiler available; header compiled by cbindgen only");
        return;
    };
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let lib = artifact_dir().join("libsfsda_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "sfsda.h"
int main(void) {
    double region[4] = {-3.0, -1.0, 1.0, 3.0};
    double p = -1.0;
    if (sfsda_truncated_p(region, 2, 1.0, 2.0, &p) != SFSDA_STATUS_OK) return 10;
    if (!(p > 0.0 && p < 1.0)) return 11;
    double xs[6] = {0.1, -0.4, 1.3, 0.2, -0.7, 0.9};
    double ys[3] = {1.0, -2.0, 0.5};
    double xt[4] = {0.3, 0.8, -1.1, 0.4};
    double yt[2] = {0.7, -0.1};
    SfsdaDataset *ds = NULL;
    if (sfsda_dataset_new(xs, ys, 3, xt, yt, 2, 2, 0.0, &ds) != SFSDA_STATUS_INVALID_ARGUMENT) return 12;
    if (sfsda_last_error_message() == NULL) return 13;
    if (sfsda_dataset_new(xs, ys, 3, xt, yt, 2, 2, 1.0, &ds) != SFSDA_STATUS_OK) return 14;
    sfsda_dataset_free(ds);
    printf("%.17g\n", p);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new(compiler)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "smoke program exited with {:?}", out.status.code());
    let p: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    let expected = sfsda::inference::truncated_two_sided_p_raw(
        &sfsda::TruncationRegion::from_intervals([(-3.0, -1.0), (1.0, 3.0)], 0.0),
        1.0,
        2.0,
    )
    .unwrap();
    assert_eq!(p, expected);
}
