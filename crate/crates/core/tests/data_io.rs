use std::path::PathBuf;

use umatch::data::{load_csv, split, CsvOptions, TargetColumn};

fn boston() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/boston.csv")
}

#[test]
fn boston_has_506_rows_and_13_features() {
    let ds = load_csv(&boston(), &"medv".parse().unwrap(), &CsvOptions::default()).unwrap();
    assert_eq!((ds.len(), ds.dim()), (506, 13));
    assert!(ds.targets.iter().all(|t| (0.0..=1.0).contains(t)));
    for (stored, raw) in ds.targets.iter().zip(&ds.raw_targets) {
        assert!((ds.target_transform.invert(*stored) - raw).abs() < 1e-12);
    }
}

#[test]
fn canonical_echo_reloads_bitwise() {
    let ds = load_csv(&boston(), &TargetColumn::default(), &CsvOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("echo.csv");
    ds.write_canonical_csv(&path).unwrap();
    let again = load_csv(&path, &TargetColumn::default(), &CsvOptions::default()).unwrap();
    assert_eq!(ds.feature_names, again.feature_names);
    assert!(ds
        .features
        .iter()
        .zip(&again.features)
        .all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(ds
        .raw_targets
        .iter()
        .zip(&again.raw_targets)
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn split_is_disjoint_and_uses_train_statistics() {
    let ds = load_csv(&boston(), &"medv".parse().unwrap(), &CsvOptions::default()).unwrap();
    let sp = split(&ds, 0.8, 3).unwrap();
    assert_eq!((sp.train.len(), sp.test.len()), (405, 101));
    let mut rows: Vec<usize> = sp.train_rows.iter().chain(&sp.test_rows).copied().collect();
    rows.sort_unstable();
    assert_eq!(rows, (0..506).collect::<Vec<_>>());
    for j in 0..13 {
        let col = sp.train.features.column(j);
        let mean = col.sum() / col.len() as f64;
        assert!(mean.abs() < 1e-10);
    }
    let lo = sp.train.targets.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sp.train.targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!((lo, hi), (0.0, 1.0));
}
