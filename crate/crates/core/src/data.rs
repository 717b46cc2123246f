//! Benchmark generators, CSV ingestion, normalization and splitting.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, ScmError};
use crate::numerics::Matrix;

/// Per-feature min-max scaling fitted on training rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl Normalization {
    pub fn fit(x: &Matrix) -> Self {
        let mut min = vec![f64::INFINITY; x.cols()];
        let mut max = vec![f64::NEG_INFINITY; x.cols()];
        for r in 0..x.rows() {
            for (c, &v) in x.row(r).iter().enumerate() {
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
        }
        Self { min, max }
    }

    pub fn from_parts(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(ScmError::LengthMismatch {
                expected: min.len(),
                found: max.len(),
            });
        }
        if min.iter().chain(&max).any(|v| !v.is_finite()) {
            return Err(ScmError::invalid("normalization bounds must be finite"));
        }
        Ok(Self { min, max })
    }

    pub fn features(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    /// Maps each feature's training range onto `[0, 1]`; constant features
    /// map to 0. Values outside the training range land outside `[0, 1]`.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.features() {
            return Err(ScmError::LengthMismatch {
                expected: self.features(),
                found: x.cols(),
            });
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                let span = self.max[c] - self.min[c];
                *v = if span > 0.0 {
                    (*v - self.min[c]) / span
                } else {
                    0.0
                };
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    /// Set when `x` has been normalized; holds the parameters used.
    pub normalization: Option<Normalization>,
}

impl Dataset {
    pub fn new(
        x: Matrix,
        y: Matrix,
        feature_names: Vec<String>,
        target_names: Vec<String>,
    ) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(ScmError::LengthMismatch {
                expected: x.rows(),
                found: y.rows(),
            });
        }
        if feature_names.len() != x.cols() || target_names.len() != y.cols() {
            return Err(ScmError::invalid(
                "column names do not match the data width",
            ));
        }
        Ok(Self {
            x,
            y,
            feature_names,
            target_names,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            y: self.y.select_rows(rows),
            feature_names: self.feature_names.clone(),
            target_names: self.target_names.clone(),
            normalization: self.normalization.clone(),
        }
    }

    /// Fits min-max scaling on these rows and applies it in place.
    pub fn normalize(&mut self) -> Result<Normalization> {
        let norm = Normalization::fit(&self.x);
        self.x = norm.apply(&self.x)?;
        self.normalization = Some(norm.clone());
        Ok(norm)
    }
}

/// A generated benchmark with its train/test partition.
#[derive(Clone, Debug, PartialEq)]
pub struct Benchmark {
    pub train: Dataset,
    pub test: Dataset,
    /// `key=value` facts worth recording next to the data files.
    pub manifest: Vec<(String, String)>,
}

/// Deterministic shuffle, then the last `fraction` of rows become the
/// held-out part. Returns `(kept, held_out)`.
pub fn split(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(ScmError::invalid(format!(
            "split fraction {fraction} outside [0, 1)"
        )));
    }
    let n = ds.len();
    let held = (n as f64 * fraction).round() as usize;
    if n - held < 1 {
        return Err(ScmError::invalid(format!(
            "splitting {n} rows by {fraction} leaves no training rows"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (kept, out) = order.split_at(n - held);
    Ok((ds.select(kept), ds.select(out)))
}

/// Sum of three Gaussian bumps on `[0, 1]`.
pub fn db1_function(x: f64) -> f64 {
    0.2 * (-(10.0 * x - 4.0).powi(2)).exp()
        + 0.5 * (-(90.0 * x - 40.0).powi(2)).exp()
        + 0.3 * (-(80.0 * x - 20.0).powi(2)).exp()
}

/// Rastrigin function with `A = 10`.
pub fn rastrigin(x: &[f64]) -> f64 {
    const A: f64 = 10.0;
    A * x.len() as f64
        + x.iter()
            .map(|&v| v * v - A * (2.0 * PI * v).cos())
            .sum::<f64>()
}

pub const DB1_ROWS: usize = 1300;
pub const DB1_TEST_ROWS: usize = 300;

/// 1300 uniform draws on `[0, 1]`, shuffled; 1000 train and 300 test.
pub fn gen_db1(seed: u64) -> Result<Benchmark> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..DB1_ROWS).map(|_| rng.random::<f64>()).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| db1_function(x)).collect();
    let all = Dataset::new(
        Matrix::column_vector(&xs),
        Matrix::column_vector(&ys),
        vec!["x".into()],
        vec!["y".into()],
    )?;
    let (train, test) = split(&all, DB1_TEST_ROWS as f64 / DB1_ROWS as f64, seed ^ 0x5eed)?;
    let manifest = vec![
        ("dataset".into(), "db1".into()),
        ("seed".into(), seed.to_string()),
        ("rows".into(), DB1_ROWS.to_string()),
        ("train_rows".into(), train.len().to_string()),
        ("test_rows".into(), test.len().to_string()),
    ];
    Ok(Benchmark {
        train,
        test,
        manifest,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Db2Options {
    pub train_rows: usize,
    /// Test points on a regular `grid_side × grid_side` grid; otherwise
    /// `grid_side²` uniform draws.
    pub grid_test: bool,
    pub grid_side: usize,
}

pub const DB2_FULL_TRAIN_ROWS: usize = 40_000;
pub const DB2_DOMAIN: f64 = 5.12;

impl Default for Db2Options {
    fn default() -> Self {
        Self {
            train_rows: DB2_FULL_TRAIN_ROWS / 10,
            grid_test: true,
            grid_side: 67,
        }
    }
}

impl Db2Options {
    /// Training rows as a fraction of the full 40000.
    pub fn with_scale(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(ScmError::invalid(format!("scale {scale} outside (0, 1]")));
        }
        Ok(Self {
            train_rows: ((DB2_FULL_TRAIN_ROWS as f64 * scale).round() as usize).max(2),
            ..Self::default()
        })
    }
}

/// Two-dimensional Rastrigin on `[-5.12, 5.12]²`.
///
/// Features stay raw. The target is min-max scaled with the training rows'
/// range so it fits comfortably inside the fixed-point output format; the
/// range is recorded in the manifest.
pub fn gen_db2(seed: u64, opts: Db2Options) -> Result<Benchmark> {
    if opts.train_rows < 2 || opts.grid_side < 1 {
        return Err(ScmError::invalid(
            "db2 needs at least 2 training rows and a non-empty test set",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| [0, 1].map(|_| rng.random_range(-DB2_DOMAIN..=DB2_DOMAIN));
    let train_x: Vec<[f64; 2]> = (0..opts.train_rows).map(|_| draw(&mut rng)).collect();
    let test_x: Vec<[f64; 2]> = if opts.grid_test {
        let side = opts.grid_side;
        let at = |i: usize| {
            if side == 1 {
                0.0
            } else {
                -DB2_DOMAIN + 2.0 * DB2_DOMAIN * i as f64 / (side - 1) as f64
            }
        };
        (0..side)
            .flat_map(|i| (0..side).map(move |j| [at(i), at(j)]))
            .collect()
    } else {
        (0..opts.grid_side * opts.grid_side)
            .map(|_| draw(&mut rng))
            .collect()
    };

    let f_train: Vec<f64> = train_x.iter().map(|p| rastrigin(p)).collect();
    let f_min = f_train.iter().copied().fold(f64::INFINITY, f64::min);
    let f_max = f_train.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = |f: f64| (f - f_min) / (f_max - f_min);

    let build = |pts: &[[f64; 2]]| -> Result<Dataset> {
        let x = Matrix::from_rows(pts)?;
        let y: Vec<f64> = pts.iter().map(|p| scale(rastrigin(p))).collect();
        Dataset::new(
            x,
            Matrix::column_vector(&y),
            vec!["x1".into(), "x2".into()],
            vec!["y".into()],
        )
    };
    let train = build(&train_x)?;
    let test = build(&test_x)?;
    let manifest = vec![
        ("dataset".into(), "db2".into()),
        ("seed".into(), seed.to_string()),
        ("train_rows".into(), train.len().to_string()),
        ("test_rows".into(), test.len().to_string()),
        (
            "test_layout".into(),
            if opts.grid_test { "grid" } else { "random" }.into(),
        ),
        ("target_min".into(), f_min.to_string()),
        ("target_max".into(), f_max.to_string()),
    ];
    Ok(Benchmark {
        train,
        test,
        manifest,
    })
}

/// Reads a numeric CSV with a header row. Columns named in `targets` become
/// `y` (in the order given); all others are features. With `normalize`,
/// features are min-max scaled on these rows.
pub fn load_csv(path: impl AsRef<Path>, targets: &[&str], normalize: bool) -> Result<Dataset> {
    let file = File::open(path.as_ref())?;
    read_csv(file, targets, normalize)
}

pub fn read_csv<R: std::io::Read>(reader: R, targets: &[&str], normalize: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut target_cols = Vec::with_capacity(targets.len());
    for &t in targets {
        let idx = header
            .iter()
            .position(|h| h == t)
            .ok_or_else(|| ScmError::MissingColumn(t.to_string()))?;
        target_cols.push(idx);
    }
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|c| !target_cols.contains(c))
        .collect();

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            ScmError::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut values = Vec::with_capacity(record.len());
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| ScmError::Parse {
                line,
                message: format!("column `{}`: `{cell}` is not a number", header[c]),
            })?;
            values.push(v);
        }
        xs.extend(feature_cols.iter().map(|&c| values[c]));
        ys.extend(target_cols.iter().map(|&c| values[c]));
        rows += 1;
    }
    let mut ds = Dataset::new(
        Matrix::from_vec(rows, feature_cols.len(), xs)?,
        Matrix::from_vec(rows, target_cols.len(), ys)?,
        feature_cols.iter().map(|&c| header[c].clone()).collect(),
        targets.iter().map(|s| s.to_string()).collect(),
    )?;
    if normalize {
        ds.normalize()?;
    }
    Ok(ds)
}

/// Writes features then targets, with shortest round-trip float formatting.
pub fn write_csv(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(ds.feature_names.iter().chain(&ds.target_names))?;
    for r in 0..ds.len() {
        let row: Vec<String> =
            ds.x.row(r)
                .iter()
                .chain(ds.y.row(r))
                .map(|v| v.to_string())
                .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[(String, String)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    for (k, v) in entries {
        writeln!(w, "{k}={v}")?;
    }
    w.flush()?;
    Ok(())
}
