//! Dataset ingestion, splitting, and synthetic data with known noise.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Matrix, Result};

/// Affine map from stored targets in [0, 1] back to raw units:
/// `raw = shift + scale * stored`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetTransform {
    pub shift: f64,
    pub scale: f64,
}

impl Default for TargetTransform {
    fn default() -> Self {
        TargetTransform { shift: 0.0, scale: 1.0 }
    }
}

impl TargetTransform {
    /// Min-max fit. A constant target gets unit scale.
    pub fn fit(raw: &[f64]) -> Self {
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        TargetTransform {
            shift: lo,
            scale: if range > 0.0 { range } else { 1.0 },
        }
    }

    pub fn apply(&self, raw: f64) -> f64 {
        (raw - self.shift) / self.scale
    }

    pub fn invert(&self, stored: f64) -> f64 {
        self.shift + self.scale * stored
    }
}

/// Per-column standardization fitted on a training partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.nrows() as f64;
        let mean: Vec<f64> = x.mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_default();
        let std = x
            .axis_iter(Axis(1))
            .zip(&mean)
            .map(|(col, m)| {
                let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                let s = var.sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        FeatureScaler { mean, std }
    }

    pub fn identity(dim: usize) -> Self {
        FeatureScaler {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.mean.len() {
            return Err(Error::Shape {
                op: "standardize",
                lhs: x.dim(),
                rhs: (1, self.mean.len()),
            });
        }
        let mut out = x.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| (v - self.mean[j]) / self.std[j]);
        }
        Ok(out)
    }
}

/// True conditional mean and noise level per sample, in raw target units.
#[derive(Debug, Clone, PartialEq)]
pub struct Oracle {
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    /// Targets in [0, 1] under `target_transform`.
    pub targets: Vec<f64>,
    pub raw_targets: Vec<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub target_transform: TargetTransform,
    pub oracle: Option<Oracle>,
}

impl Dataset {
    /// Builds a dataset from raw columns, fitting the [0, 1] target rescaling.
    pub fn from_raw(
        features: Matrix,
        raw_targets: Vec<f64>,
        feature_names: Vec<String>,
        target_name: String,
    ) -> Result<Self> {
        if features.nrows() != raw_targets.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} targets",
                features.nrows(),
                raw_targets.len()
            )));
        }
        if features.iter().chain(&raw_targets).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value in dataset".into()));
        }
        let transform = TargetTransform::fit(&raw_targets);
        Ok(Dataset {
            targets: raw_targets.iter().map(|&v| transform.apply(v)).collect(),
            features,
            raw_targets,
            feature_names,
            target_name,
            target_transform: transform,
            oracle: None,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Re-expresses the targets under a different (e.g. checkpointed) transform.
    pub fn with_transform(mut self, transform: TargetTransform) -> Self {
        self.targets = self.raw_targets.iter().map(|&v| transform.apply(v)).collect();
        self.target_transform = transform;
        self
    }

    /// Rows in the given order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            targets: rows.iter().map(|&i| self.targets[i]).collect(),
            raw_targets: rows.iter().map(|&i| self.raw_targets[i]).collect(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            target_transform: self.target_transform,
            oracle: self.oracle.as_ref().map(|o| Oracle {
                mean: rows.iter().map(|&i| o.mean[i]).collect(),
                sigma: rows.iter().map(|&i| o.sigma[i]).collect(),
            }),
        }
    }

    /// Raw features and raw targets, with a header row. Floats use the
    /// shortest representation that parses back to the same bits.
    pub fn to_canonical_csv(&self) -> String {
        let mut out = String::new();
        let names: Vec<&str> = self
            .feature_names
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(self.target_name.as_str()))
            .collect();
        out.push_str(&names.join(","));
        out.push('\n');
        for (row, y) in self.features.axis_iter(Axis(0)).zip(&self.raw_targets) {
            for v in row {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{y}");
        }
        out
    }

    pub fn write_canonical_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_canonical_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Target column selector: a header name, or a zero-based index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetColumn {
    Name(String),
    Index(usize),
}

impl FromStr for TargetColumn {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.to_string()),
        })
    }
}

impl Default for TargetColumn {
    /// The last column.
    fn default() -> Self {
        TargetColumn::Index(usize::MAX)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    pub delimiter: u8,
    /// Fraction of unparseable rows tolerated (dropped) before failing.
    pub max_bad_fraction: f64,
    /// Drop (with a warning) feature columns holding a single value.
    pub drop_constant: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: b',',
            max_bad_fraction: 0.05,
            drop_constant: true,
        }
    }
}

/// What ingestion discarded.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestSummary {
    pub rows_read: usize,
    pub dropped_missing: usize,
    pub dropped_unparseable: usize,
    pub dropped_columns: Vec<String>,
}

const MISSING: [&str; 6] = ["", "na", "nan", "?", "null", "none"];

enum Cell {
    Value(f64),
    Missing,
    Bad,
}

fn parse_cell(s: &str) -> Cell {
    let t = s.trim();
    if MISSING.contains(&t.to_ascii_lowercase().as_str()) {
        return Cell::Missing;
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Cell::Value(v),
        Ok(_) => Cell::Missing,
        Err(_) => Cell::Bad,
    }
}

/// Loads a headed CSV, logging what was dropped.
pub fn load_csv(path: &Path, target: &TargetColumn, opts: &CsvOptions) -> Result<Dataset> {
    let (ds, summary) = load_csv_with_summary(path, target, opts)?;
    if summary.dropped_missing > 0 || summary.dropped_unparseable > 0 {
        log::info!(
            "{}: dropped {} row(s) with missing values and {} unparseable row(s)",
            path.display(),
            summary.dropped_missing,
            summary.dropped_unparseable
        );
    }
    Ok(ds)
}

/// Reads a CSV with a header row. Rows with missing cells are dropped;
/// constant feature columns are dropped with a warning; targets are
/// rescaled to [0, 1]. Features are left in raw units (see [`split`]).
pub fn load_csv_with_summary(
    path: &Path,
    target: &TargetColumn,
    opts: &CsvOptions,
) -> Result<(Dataset, IngestSummary)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.len() < 2 {
        return Err(Error::Data(format!(
            "{}: need at least one feature and one target column",
            path.display()
        )));
    }
    let target_idx = match target {
        TargetColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("{}: no column named '{name}'", path.display())))?,
        TargetColumn::Index(usize::MAX) => headers.len() - 1,
        TargetColumn::Index(i) if *i < headers.len() => *i,
        TargetColumn::Index(i) => {
            return Err(Error::Data(format!(
                "{}: target index {i} out of range ({} columns)",
                path.display(),
                headers.len()
            )))
        }
    };

    let mut summary = IngestSummary::default();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        summary.rows_read += 1;
        let record = match record {
            Ok(r) if r.len() == headers.len() => r,
            _ => {
                summary.dropped_unparseable += 1;
                continue;
            }
        };
        let mut row = Vec::with_capacity(headers.len());
        let mut missing = false;
        let mut bad = false;
        for cell in record.iter() {
            match parse_cell(cell) {
                Cell::Value(v) => row.push(v),
                Cell::Missing => missing = true,
                Cell::Bad => bad = true,
            }
        }
        if bad {
            summary.dropped_unparseable += 1;
        } else if missing {
            summary.dropped_missing += 1;
        } else {
            rows.push(row);
        }
    }
    let allowed = (opts.max_bad_fraction * summary.rows_read as f64).floor() as usize;
    if summary.dropped_unparseable > allowed {
        return Err(Error::Data(format!(
            "{}: {} of {} rows unparseable (limit {allowed})",
            path.display(),
            summary.dropped_unparseable,
            summary.rows_read
        )));
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no usable rows", path.display())));
    }

    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&j| j != target_idx)
        .filter(|&j| {
            let first = rows[0][j];
            let constant = opts.drop_constant && rows.iter().all(|r| r[j] == first);
            if constant {
                log::warn!("{}: dropping constant column '{}'", path.display(), headers[j]);
                summary.dropped_columns.push(headers[j].clone());
            }
            !constant
        })
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::Data(format!(
            "{}: no non-constant feature columns",
            path.display()
        )));
    }
    let features = Array2::from_shape_fn((rows.len(), feature_cols.len()), |(i, j)| rows[i][feature_cols[j]]);
    let raw_targets = rows.iter().map(|r| r[target_idx]).collect();
    let names = feature_cols.iter().map(|&j| headers[j].clone()).collect();
    let ds = Dataset::from_raw(features, raw_targets, names, headers[target_idx].clone())?;
    Ok((ds, summary))
}

/// Train/test partition with features standardized by train statistics.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: Dataset,
    pub test: Dataset,
    pub seed: u64,
    pub fraction: f64,
    pub scaler: FeatureScaler,
    /// Source row index of each train / test row.
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

/// Seeded shuffle, then the first `ceil(fraction * N)` rows train. Feature
/// standardization and target rescaling both use train statistics.
pub fn split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<SplitDataset> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config(format!("split fraction {fraction} outside (0, 1)")));
    }
    let n = dataset.len();
    if n < 5 {
        return Err(Error::Data(format!("need at least 5 rows to split, got {n}")));
    }
    let n_train = (fraction * n as f64).ceil() as usize;
    if n_train >= n {
        return Err(Error::Data("split leaves the test partition empty".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[rng::TAG_SPLIT]));
    let (train_rows, test_rows) = order.split_at(n_train);
    // Target rescaling is refitted on the train rows only; test targets may
    // then fall slightly outside [0, 1].
    let mut train = dataset.select(train_rows);
    let transform = TargetTransform::fit(&train.raw_targets);
    train = train.with_transform(transform);
    let mut test = dataset.select(test_rows).with_transform(transform);
    let scaler = FeatureScaler::fit(&train.features);
    train.features = scaler.transform(&train.features)?;
    test.features = scaler.transform(&test.features)?;
    Ok(SplitDataset {
        train,
        test,
        seed,
        fraction,
        scaler,
        train_rows: train_rows.to_vec(),
        test_rows: test_rows.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseProfile {
    /// Noise grows linearly across the input range.
    Linear,
    /// Noise oscillates with the input.
    Sinusoidal,
}

impl FromStr for NoiseProfile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(NoiseProfile::Linear),
            "sinusoidal" | "sin" => Ok(NoiseProfile::Sinusoidal),
            other => Err(Error::config(format!("unknown noise profile '{other}'"))),
        }
    }
}

impl NoiseProfile {
    pub fn name(self) -> &'static str {
        match self {
            NoiseProfile::Linear => "linear",
            NoiseProfile::Sinusoidal => "sinusoidal",
        }
    }

    /// Noise standard deviation at input `x` (first coordinate drives it).
    pub fn sigma(self, x: &[f64]) -> f64 {
        let u = x[0];
        match self {
            NoiseProfile::Linear => 0.05 + 0.125 * (u + 1.0),
            NoiseProfile::Sinusoidal => 0.05 + 0.1 * (1.0 + (std::f64::consts::PI * u).sin()),
        }
    }
}

/// Conditional mean of the synthetic task.
pub fn synth_mean(x: &[f64]) -> f64 {
    let head = (std::f64::consts::PI * x[0]).sin() + 0.5 * x[0];
    head + 0.3 * x[1..].iter().sum::<f64>()
}

/// `y = f(x) + sigma(x) * eps` with `x ~ U[-1, 1]^dim` and standard normal
/// `eps`. The true mean and sigma are kept as the dataset's oracle.
pub fn synth_heteroscedastic(n: usize, seed: u64, profile: NoiseProfile, dim: usize) -> Result<Dataset> {
    if n < 100 {
        return Err(Error::config(format!("synthetic data needs n >= 100, got {n}")));
    }
    if dim == 0 {
        return Err(Error::config("synthetic data needs dim >= 1"));
    }
    let mut rng = rng::stream(seed, &[rng::TAG_SYNTH]);
    let mut features = Array2::zeros((n, dim));
    let mut raw = Vec::with_capacity(n);
    let mut mean = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    for i in 0..n {
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let eps: f64 = rng.sample(StandardNormal);
        let (m, s) = (synth_mean(&x), profile.sigma(&x));
        for (j, v) in x.iter().enumerate() {
            features[[i, j]] = *v;
        }
        raw.push(m + s * eps);
        mean.push(m);
        sigma.push(s);
    }
    let names = (0..dim).map(|j| format!("x{j}")).collect();
    let mut ds = Dataset::from_raw(features, raw, names, "y".into())?;
    ds.oracle = Some(Oracle { mean, sigma });
    Ok(ds)
}

/// Oracle sidecar: `mean_true,sigma_true` per row.
pub fn oracle_to_csv(oracle: &Oracle) -> String {
    let mut out = String::from("mean_true,sigma_true\n");
    for (m, s) in oracle.mean.iter().zip(&oracle.sigma) {
        let _ = writeln!(out, "{m},{s}");
    }
    out
}

pub fn load_oracle_csv(path: &Path) -> Result<Oracle> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::Data(format!("{}: {e}", path.display())),
        _ => Error::Csv(e),
    })?;
    let mut mean = Vec::new();
    let mut sigma = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Data(format!("{}: bad oracle row", path.display())))
        };
        mean.push(parse(0)?);
        sigma.push(parse(1)?);
    }
    Ok(Oracle { mean, sigma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn small_file_loads_and_inverts() {
        let f = write_tmp("a,b,y\n1,2,10\n2,5,30\n3,1,20\n");
        let ds = load_csv(f.path(), &TargetColumn::Name("y".into()), &CsvOptions::default()).unwrap();
        assert_eq!(ds.features.dim(), (3, 2));
        assert!(ds.targets.iter().all(|&t| (0.0..=1.0).contains(&t)));
        for (s, r) in ds.targets.iter().zip(&ds.raw_targets) {
            assert!((ds.target_transform.invert(*s) - r).abs() < 1e-12);
        }
    }

    #[test]
    fn target_by_index_and_default_last() {
        let f = write_tmp("y,a,b\n1,2,10\n2,5,30\n3,1,20\n");
        let ds = load_csv(f.path(), &TargetColumn::Index(0), &CsvOptions::default()).unwrap();
        assert_eq!(ds.target_name, "y");
        let ds = load_csv(f.path(), &TargetColumn::default(), &CsvOptions::default()).unwrap();
        assert_eq!(ds.target_name, "b");
        assert!(load_csv(f.path(), &TargetColumn::Name("zz".into()), &CsvOptions::default()).is_err());
    }

    #[test]
    fn missing_rows_and_constant_columns_dropped() {
        let f = write_tmp("a,c,y\n1,7,1\nNA,7,2\n3,7,\n4,7,5\n");
        let (ds, s) = load_csv_with_summary(f.path(), &TargetColumn::Name("y".into()), &CsvOptions::default()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(s.dropped_missing, 2);
        assert_eq!(s.dropped_columns, vec!["c".to_string()]);
        assert_eq!(ds.feature_names, vec!["a".to_string()]);
    }

    #[test]
    fn too_many_bad_rows_is_an_error() {
        let f = write_tmp("a,y\n1,1\nfoo,2\n3,3\nbar,1\n");
        let err = load_csv(f.path(), &TargetColumn::default(), &CsvOptions::default());
        assert!(matches!(err, Err(Error::Data(_))));
        let lenient = CsvOptions {
            max_bad_fraction: 0.5,
            ..CsvOptions::default()
        };
        assert_eq!(load_csv(f.path(), &TargetColumn::default(), &lenient).unwrap().len(), 2);
    }

    #[test]
    fn semicolon_delimiter() {
        let f = write_tmp("a;y\n1;1\n2;3\n");
        let opts = CsvOptions {
            delimiter: b';',
            ..CsvOptions::default()
        };
        assert_eq!(load_csv(f.path(), &TargetColumn::default(), &opts).unwrap().len(), 2);
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_csv(
            Path::new("/no/such/file.csv"),
            &TargetColumn::default(),
            &CsvOptions::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("/no/such/file.csv"));
    }

    #[test]
    fn canonical_echo_reloads_bitwise() {
        let ds = synth_heteroscedastic(150, 3, NoiseProfile::Sinusoidal, 2).unwrap();
        let f = write_tmp(&ds.to_canonical_csv());
        let back = load_csv(f.path(), &TargetColumn::Name("y".into()), &CsvOptions::default()).unwrap();
        let bits = |m: &[f64]| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(
            bits(back.features.as_slice().unwrap()),
            bits(ds.features.as_slice().unwrap())
        );
        assert_eq!(bits(&back.targets), bits(&ds.targets));
        assert_eq!(bits(&back.raw_targets), bits(&ds.raw_targets));
        // And once more from the echo of the echo.
        assert_eq!(back.to_canonical_csv(), ds.to_canonical_csv());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = synth_heteroscedastic(100, 1, NoiseProfile::Linear, 1).unwrap();
        let small = ds.select(&(0..10).collect::<Vec<_>>());
        let s = split(&small, 0.8, 4).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
        let a = split(&ds, 0.8, 9).unwrap();
        let b = split(&ds, 0.8, 9).unwrap();
        assert_eq!(a.train_rows, b.train_rows);
        let mut all: Vec<usize> = a.train_rows.iter().chain(&a.test_rows).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert!(split(&ds.select(&[0, 1, 2, 3]), 0.8, 0).is_err());
        assert!(split(&ds, 1.0, 0).is_err());
    }

    #[test]
    fn split_seeds_give_distinct_permutations() {
        let ds = synth_heteroscedastic(100, 1, NoiseProfile::Linear, 1).unwrap();
        let small = ds.select(&(0..30).collect::<Vec<_>>());
        let perms: std::collections::HashSet<Vec<usize>> = (0..100)
            .map(|s| {
                let sp = split(&small, 0.8, s).unwrap();
                sp.train_rows.iter().chain(&sp.test_rows).copied().collect()
            })
            .collect();
        assert_eq!(perms.len(), 100);
    }

    #[test]
    fn standardization_uses_train_statistics() {
        let ds = synth_heteroscedastic(200, 2, NoiseProfile::Linear, 3).unwrap();
        let s = split(&ds, 0.8, 1).unwrap();
        for col in s.train.features.axis_iter(Axis(1)) {
            let m = col.mean().unwrap();
            let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / col.len() as f64;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        }
        // Test targets share the source transform.
        assert_eq!(s.test.target_transform, ds.target_transform);
        let raw_test = ds.select(&s.test_rows);
        let refit = FeatureScaler::fit(&ds.select(&s.train_rows).features);
        assert_eq!(s.test.features, refit.transform(&raw_test.features).unwrap());
    }

    #[test]
    fn synthetic_properties() {
        let a = synth_heteroscedastic(500, 5, NoiseProfile::Sinusoidal, 1).unwrap();
        let b = synth_heteroscedastic(500, 5, NoiseProfile::Sinusoidal, 1).unwrap();
        assert_eq!(a, b);
        let o = a.oracle.as_ref().unwrap();
        assert!(o.sigma.iter().all(|&s| s > 0.0));
        assert!(a.features.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(synth_heteroscedastic(99, 5, NoiseProfile::Linear, 1).is_err());
    }
}
