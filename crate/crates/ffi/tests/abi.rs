use std::ffi::{CStr, CString};
use std::ptr;

use umatch_ffi::*;

const FAST: &str = "hidden = 8,8\nmax_outer = 2\nn_m = 2\n";

fn last_error() -> String {
    unsafe { CStr::from_ptr(um_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn synthetic(n: usize, seed: u64) -> *mut UmDataset {
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { um_dataset_synthetic(n, seed, 1, 1, &mut ds) }, UmStatus::Ok);
    ds
}

fn train(ds: *const UmDataset, method: &str, seed: u64) -> *mut UmModel {
    let method = CString::new(method).unwrap();
    let cfg = CString::new(FAST).unwrap();
    let mut model = ptr::null_mut();
    let status = unsafe { um_train(ds, method.as_ptr(), 0.9, seed, cfg.as_ptr(), &mut model) };
    assert_eq!(status, UmStatus::Ok, "{}", last_error());
    model
}

#[test]
fn version_and_z_score() {
    let v = unsafe { CStr::from_ptr(um_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    let mut z = 0.0;
    assert_eq!(unsafe { um_z_score(0.95, &mut z) }, UmStatus::Ok);
    assert!((z - 1.959963984540054).abs() < 1e-9);
    assert_eq!(unsafe { um_z_score(1.5, &mut z) }, UmStatus::Config);
    assert!(last_error().contains("alpha"));
}

#[test]
fn null_pointers_are_reported() {
    assert_eq!(unsafe { um_z_score(0.9, ptr::null_mut()) }, UmStatus::NullPointer);
    assert!(last_error().contains("out_z"));
    let mut ds = ptr::null_mut();
    assert_eq!(
        unsafe { um_dataset_load_csv(ptr::null(), &mut ds) },
        UmStatus::NullPointer
    );
    let (mut rows, mut cols) = (0, 0);
    assert_eq!(
        unsafe { um_dataset_shape(ptr::null(), &mut rows, &mut cols) },
        UmStatus::NullPointer
    );
    unsafe {
        um_dataset_free(ptr::null_mut());
        um_model_free(ptr::null_mut());
    }
}

#[test]
fn missing_file_is_an_io_error_naming_the_path() {
    let path = CString::new("/nonexistent/boston.csv").unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { um_dataset_load_csv(path.as_ptr(), &mut ds) }, UmStatus::Io);
    assert!(ds.is_null());
    assert!(last_error().contains("/nonexistent/boston.csv"));
}

#[test]
fn bad_arguments_are_rejected() {
    let ds = synthetic(200, 1);
    let mut model = ptr::null_mut();
    let unknown = CString::new("bayes").unwrap();
    assert_eq!(
        unsafe { um_train(ds, unknown.as_ptr(), 0.9, 1, ptr::null(), &mut model) },
        UmStatus::Config
    );
    let oracle = CString::new("oracle").unwrap();
    assert_eq!(
        unsafe { um_train(ds, oracle.as_ptr(), 0.9, 1, ptr::null(), &mut model) },
        UmStatus::InvalidArgument
    );
    let hnn = CString::new("hnn").unwrap();
    let bad_cfg = CString::new("no_such_key = 1").unwrap();
    assert_eq!(
        unsafe { um_train(ds, hnn.as_ptr(), 0.9, 1, bad_cfg.as_ptr(), &mut model) },
        UmStatus::Config
    );
    assert!(model.is_null());
    let mut other = ptr::null_mut();
    assert_eq!(
        unsafe { um_dataset_synthetic(200, 1, 1, 7, &mut other) },
        UmStatus::InvalidArgument
    );
    unsafe { um_dataset_free(ds) };
}

#[test]
fn train_predict_save_load_round_trip() {
    let ds = synthetic(300, 2);
    let (mut rows, mut cols) = (0, 0);
    assert_eq!(unsafe { um_dataset_shape(ds, &mut rows, &mut cols) }, UmStatus::Ok);
    assert_eq!((rows, cols), (300, 1));

    let model = train(ds, "iqr_fit", 3);
    let mut report = UmReport::default();
    assert_eq!(unsafe { um_model_report(model, &mut report) }, UmStatus::Ok);
    assert_eq!(report.n_samples, 60);
    assert!(report.rmse.is_finite() && report.aw > 0.0 && (0.0..=1.0).contains(&report.coverage));
    let mut len = 0;
    assert_eq!(unsafe { um_model_trace_len(model, &mut len) }, UmStatus::Ok);
    assert_eq!(len, 2);

    let x = [-0.9, -0.3, 0.0, 0.4, 0.8];
    let predict = |m: *const UmModel| {
        let (mut y, mut lo, mut up) = ([0.0; 5], [0.0; 5], [0.0; 5]);
        let status = unsafe { um_model_predict(m, x.as_ptr(), 5, 1, y.as_mut_ptr(), lo.as_mut_ptr(), up.as_mut_ptr()) };
        assert_eq!(status, UmStatus::Ok, "{}", last_error());
        (y, lo, up)
    };
    let (y, lo, up) = predict(model);
    for i in 0..5 {
        assert!(lo[i] <= y[i] && y[i] <= up[i], "row {i}: {} {} {}", lo[i], y[i], up[i]);
    }

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("model.txt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { um_model_save(model, path.as_ptr()) }, UmStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(
        unsafe { um_model_load(path.as_ptr(), &mut loaded) },
        UmStatus::Ok,
        "{}",
        last_error()
    );
    let (y2, lo2, up2) = predict(loaded);
    assert_eq!((y, lo, up), (y2, lo2, up2));

    let mut alpha = 0.0;
    assert_eq!(unsafe { um_model_alpha(loaded, &mut alpha) }, UmStatus::Ok);
    assert_eq!(alpha, 0.9);
    assert_eq!(
        unsafe { um_model_report(loaded, &mut report) },
        UmStatus::InvalidArgument
    );
    let (mut a, mut b) = (UmReport::default(), UmReport::default());
    assert_eq!(unsafe { um_model_evaluate(model, ds, &mut a) }, UmStatus::Ok);
    assert_eq!(unsafe { um_model_evaluate(loaded, ds, &mut b) }, UmStatus::Ok);
    assert_eq!(a, b);
    assert_eq!(a.n_samples, 300);

    let wide = [0.0; 4];
    let mut out = [0.0; 2];
    let status = unsafe {
        um_model_predict(
            model,
            wide.as_ptr(),
            2,
            2,
            out.as_mut_ptr(),
            out.as_mut_ptr(),
            out.as_mut_ptr(),
        )
    };
    assert_eq!(status, UmStatus::InvalidArgument);
    assert!(last_error().contains("features"));

    unsafe {
        um_model_free(model);
        um_model_free(loaded);
        um_dataset_free(ds);
    }
}

#[test]
fn every_trainable_method_runs() {
    let ds = synthetic(200, 4);
    for method in ["sigma_fit", "iqr_fit", "hnn", "quantile", "mc_dropout"] {
        let model = train(ds, method, 1);
        let mut report = UmReport::default();
        assert_eq!(unsafe { um_model_report(model, &mut report) }, UmStatus::Ok);
        assert!(report.aw.is_finite(), "{method}");
        unsafe { um_model_free(model) };
    }
    unsafe { um_dataset_free(ds) };
}

#[test]
fn calibration_error_counts_closed_intervals() {
    let y = [0.0, 1.0, 2.0, 3.0];
    let lo = [0.0, 0.5, 2.5, 2.0];
    let up = [1.0, 1.0, 3.0, 4.0];
    let mut ce = 0.0;
    assert_eq!(
        unsafe { um_calibration_error(y.as_ptr(), lo.as_ptr(), up.as_ptr(), 4, 0.9, &mut ce) },
        UmStatus::Ok
    );
    assert!((ce - 0.15).abs() < 1e-12);
    assert_eq!(
        unsafe { um_calibration_error(y.as_ptr(), lo.as_ptr(), up.as_ptr(), 0, 0.9, &mut ce) },
        UmStatus::InvalidArgument
    );
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/umatch.h")).unwrap();
    for name in [
        "typedef struct UmDataset UmDataset",
        "typedef struct UmModel UmModel",
        "UM_STATUS_NULL_POINTER",
        "um_last_error",
        "um_train",
        "um_model_predict",
        "um_calibration_error",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/umatch.h");
    let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .output()
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
