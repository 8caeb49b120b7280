//! Dense datasets, CSV ingestion, splitting and per-round subsampling.

use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{self, Purpose, Rng};

/// Immutable row-major feature matrix with labels and optional sample weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    labels: Vec<f64>,
    weights: Option<Vec<f64>>,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        n_rows: usize,
        n_cols: usize,
        labels: Vec<f64>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::InvalidData(format!(
                "need at least one row and one column, got {n_rows}x{n_cols}"
            )));
        }
        if features.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch {
                expected: n_rows * n_cols,
                got: features.len(),
            });
        }
        if labels.len() != n_rows {
            return Err(Error::DimensionMismatch {
                expected: n_rows,
                got: labels.len(),
            });
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / n_cols,
                column: (pos % n_cols).to_string(),
            });
        }
        if let Some(pos) = labels.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos,
                column: "label".into(),
            });
        }
        if let Some(w) = &weights {
            validate_weights(w, n_rows)?;
        }
        Ok(Dataset {
            features,
            n_rows,
            n_cols,
            labels,
            weights,
            feature_names: None,
        })
    }

    /// Builds a dataset from a slice of rows.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_cols) {
            return Err(Error::DimensionMismatch {
                expected: n_cols,
                got: bad.len(),
            });
        }
        let features = rows.iter().flatten().copied().collect();
        Self::new(features, rows.len(), n_cols, labels, None)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        validate_weights(&weights, self.n_rows)?;
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                got: names.len(),
            });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.features[row * self.n_cols + col]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Weights with the implicit all-ones default materialized.
    pub fn weights_or_ones(&self) -> Vec<f64> {
        self.weights
            .clone()
            .unwrap_or_else(|| vec![1.0; self.n_rows])
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Copies the listed rows, in the given order, into a new dataset.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        let mut features = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        let weights = self
            .weights
            .as_ref()
            .map(|w| rows.iter().map(|&r| w[r]).collect());
        let mut ds = Dataset::new(features, rows.len(), self.n_cols, labels, weights)?;
        ds.feature_names = self.feature_names.clone();
        Ok(ds)
    }

    /// Column `j` as an owned vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.value(i, j)).collect()
    }
}

fn validate_weights(w: &[f64], n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: w.len(),
        });
    }
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidData(
            "weights must be finite and non-negative".into(),
        ));
    }
    if w.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidData("weights are all zero".into()));
    }
    Ok(())
}

/// Selects a CSV column by header name or zero-based index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl LabelColumn {
    /// Parses a user-supplied selector: all-digit strings are indices.
    pub fn parse(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        }
    }

    fn resolve(&self, header: Option<&[String]>, n_fields: usize) -> Result<usize> {
        let idx = match self {
            LabelColumn::Index(i) => *i,
            LabelColumn::Name(name) => {
                let header = header.ok_or_else(|| {
                    Error::InvalidParam(format!(
                        "column '{name}' selected by name but the file has no header"
                    ))
                })?;
                header.iter().position(|h| h == name).ok_or_else(|| {
                    Error::InvalidParam(format!("column '{name}' not found in header"))
                })?
            }
        };
        if idx >= n_fields {
            return Err(Error::InvalidParam(format!(
                "column index {idx} out of range for {n_fields} columns"
            )));
        }
        Ok(idx)
    }
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub label: LabelColumn,
    pub has_header: bool,
    pub weight: Option<LabelColumn>,
}

/// Reads a labelled dataset; every column except the label is a feature.
pub fn load_csv(path: impl AsRef<Path>, label: LabelColumn, has_header: bool) -> Result<Dataset> {
    load_csv_with(
        path,
        &CsvOptions {
            label,
            has_header,
            weight: None,
        },
    )
}

pub fn load_csv_with(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let table = read_table(path.as_ref(), opts.has_header)?;
    let label_idx = opts
        .label
        .resolve(table.header.as_deref(), table.n_fields)?;
    let weight_idx = opts
        .weight
        .as_ref()
        .map(|w| w.resolve(table.header.as_deref(), table.n_fields))
        .transpose()?;
    if weight_idx == Some(label_idx) {
        return Err(Error::InvalidParam(
            "label and weight columns must differ".into(),
        ));
    }
    let feature_cols: Vec<usize> = (0..table.n_fields)
        .filter(|&j| j != label_idx && Some(j) != weight_idx)
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::InvalidData("no feature columns".into()));
    }

    let n = table.rows.len();
    let mut features = Vec::with_capacity(n * feature_cols.len());
    let mut labels = Vec::with_capacity(n);
    let mut weights = weight_idx.map(|_| Vec::with_capacity(n));
    for row in &table.rows {
        features.extend(feature_cols.iter().map(|&j| row[j]));
        labels.push(row[label_idx]);
        if let (Some(w), Some(j)) = (weights.as_mut(), weight_idx) {
            w.push(row[j]);
        }
    }
    let ds = Dataset::new(features, n, feature_cols.len(), labels, weights)?;
    match table.header {
        Some(h) => ds.with_feature_names(feature_cols.iter().map(|&j| h[j].clone()).collect()),
        None => Ok(ds),
    }
}

/// Reads an unlabelled feature matrix (row-major) for prediction. When
/// `drop` is given, that column is skipped.
pub fn load_features(
    path: impl AsRef<Path>,
    has_header: bool,
    drop: Option<&LabelColumn>,
) -> Result<(Vec<f64>, usize, usize)> {
    let table = read_table(path.as_ref(), has_header)?;
    let drop_idx = drop
        .map(|c| c.resolve(table.header.as_deref(), table.n_fields))
        .transpose()?;
    let cols: Vec<usize> = (0..table.n_fields)
        .filter(|&j| Some(j) != drop_idx)
        .collect();
    let mut values = Vec::with_capacity(table.rows.len() * cols.len());
    for row in &table.rows {
        values.extend(cols.iter().map(|&j| row[j]));
    }
    Ok((values, table.rows.len(), cols.len()))
}

struct Table {
    header: Option<Vec<String>>,
    n_fields: usize,
    rows: Vec<Vec<f64>>,
}

fn read_table(path: &Path, has_header: bool) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = if has_header {
        let h = reader.headers().map_err(|e| csv_error(path, e))?;
        Some(h.iter().map(str::to_string).collect::<Vec<_>>())
    } else {
        None
    };
    let column_name = |j: usize| -> String {
        header
            .as_ref()
            .and_then(|h| h.get(j).cloned())
            .unwrap_or_else(|| j.to_string())
    };

    let mut n_fields = header.as_ref().map_or(0, Vec::len);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if rows.is_empty() && header.is_none() {
            n_fields = record.len();
        }
        if record.len() != n_fields {
            return Err(Error::Parse {
                row: i,
                column: "*".into(),
                message: format!("expected {n_fields} fields, found {}", record.len()),
            });
        }
        let mut row = Vec::with_capacity(n_fields);
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: i,
                column: column_name(j),
                message: format!("'{cell}' is not a real number"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: i,
                    column: column_name(j),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidData(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(Table {
        header,
        n_fields,
        rows,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            row: 0,
            column: "*".into(),
            message: format!("{other:?}"),
        },
    }
}

/// Writes features then the label as the last column (`x0..x{d-1},y`).
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header: Vec<String> = match ds.feature_names() {
        Some(names) => names.to_vec(),
        None => (0..ds.n_cols()).map(|j| format!("x{j}")).collect(),
    };
    header.push("y".into());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for i in 0..ds.n_rows() {
        let mut rec: Vec<String> = ds.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(ds.labels()[i].to_string());
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Train/validation/test fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
    pub stratify: bool,
}

impl SplitSpec {
    fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("train", self.train),
            ("validation", self.validation),
            ("test", self.test),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidParam(format!(
                    "{name} fraction must be in (0,1), got {f}"
                )));
            }
        }
        let sum = self.train + self.validation + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParam(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

/// Row indices of the three parts, each sorted ascending.
pub fn split_indices(ds: &Dataset, spec: &SplitSpec) -> Result<[Vec<usize>; 3]> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, 0, Purpose::Split);
    let groups: Vec<Vec<usize>> = if spec.stratify {
        let labels = ds.labels();
        if labels.iter().any(|&y| y != 0.0 && y != 1.0 && y != -1.0) {
            return Err(Error::InvalidParam(
                "stratified split needs binary class labels".into(),
            ));
        }
        let mut classes: Vec<f64> = labels.to_vec();
        classes.sort_by(f64::total_cmp);
        classes.dedup();
        classes
            .iter()
            .map(|c| (0..ds.n_rows()).filter(|&i| labels[i] == *c).collect())
            .collect()
    } else {
        vec![(0..ds.n_rows()).collect()]
    };

    let mut parts: [Vec<usize>; 3] = Default::default();
    for mut group in groups {
        group.shuffle(&mut rng);
        let n = group.len() as f64;
        let n_valid = ((spec.validation * n).round() as usize).min(group.len());
        let n_test = ((spec.test * n).round() as usize).min(group.len() - n_valid);
        let n_train = group.len() - n_valid - n_test;
        parts[0].extend_from_slice(&group[..n_train]);
        parts[1].extend_from_slice(&group[n_train..n_train + n_valid]);
        parts[2].extend_from_slice(&group[n_train + n_valid..]);
    }
    for (name, part) in ["train", "validation", "test"].iter().zip(parts.iter_mut()) {
        if part.is_empty() {
            return Err(Error::InvalidData(format!(
                "{name} part is empty for n={}",
                ds.n_rows()
            )));
        }
        part.sort_unstable();
    }
    Ok(parts)
}

pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let [a, b, c] = split_indices(ds, spec)?;
    Ok((
        ds.select_rows(&a)?,
        ds.select_rows(&b)?,
        ds.select_rows(&c)?,
    ))
}

/// Weights `n / (2 n_c)` so that both classes carry equal total weight.
pub fn balanced_weights(labels: &[f64]) -> Result<Vec<f64>> {
    let mut classes: Vec<f64> = labels.to_vec();
    classes.sort_by(f64::total_cmp);
    classes.dedup();
    if classes.len() != 2 {
        return Err(Error::InvalidData(format!(
            "balanced weights need exactly two classes, found {}",
            classes.len()
        )));
    }
    let n = labels.len() as f64;
    let count_lo = labels.iter().filter(|&&y| y == classes[0]).count() as f64;
    let count_hi = n - count_lo;
    Ok(labels
        .iter()
        .map(|&y| {
            let c = if y == classes[0] { count_lo } else { count_hi };
            n / (2.0 * c)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleSpec {
    pub row_fraction: f64,
    pub col_fraction: f64,
    pub seed: u64,
}

/// Number of items kept when sampling `fraction` of `n`: `ceil(fraction * n)`, at least 1.
pub fn sample_size(fraction: f64, n: usize) -> usize {
    let k = (fraction * n as f64 - 1e-9).ceil() as usize;
    k.clamp(1, n)
}

/// Uniform draw of `ceil(fraction * n)` distinct indices without replacement,
/// returned in ascending order. `fraction == 1` returns `0..n` without
/// consuming randomness.
pub fn sample_indices(n: usize, fraction: f64, rng: &mut Rng) -> Vec<usize> {
    if fraction >= 1.0 {
        return (0..n).collect();
    }
    let k = sample_size(fraction, n);
    let mut idx = rand::seq::index::sample(rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

fn check_fraction(name: &str, f: f64) -> Result<()> {
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "{name} must be in (0,1], got {f}"
        )));
    }
    Ok(())
}

/// Row and column indices for one round.
pub fn subsample(ds: &Dataset, spec: &SubsampleSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    check_fraction("row fraction", spec.row_fraction)?;
    check_fraction("column fraction", spec.col_fraction)?;
    let mut row_rng = rng::stream(spec.seed, 0, Purpose::RowSample);
    let mut col_rng = rng::stream(spec.seed, 0, Purpose::ColSample);
    Ok((
        sample_indices(ds.n_rows(), spec.row_fraction, &mut row_rng),
        sample_indices(ds.n_cols(), spec.col_fraction, &mut col_rng),
    ))
}
