//! Binary-label datasets: CSV ingestion, seeded synthetic generators and a
//! writer that round-trips every value exactly.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Result, VepError};
use crate::gaussian::sigmoid;
use crate::oracle::seeded_rng;

pub const LABEL_COLUMN: &str = "label";

/// Rows of real features with a binary label each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<u8>, feature_names: Vec<String>) -> Result<Self> {
        if features.is_empty() {
            return Err(VepError::NoDataRows);
        }
        if features.len() != labels.len() {
            return Err(VepError::Dimension(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let d = feature_names.len();
        for (i, row) in features.iter().enumerate() {
            if row.len() != d {
                return Err(VepError::Dimension(format!("row {i} has {} features, expected {d}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(VepError::Dimension(format!("row {i} has a non-finite feature")));
            }
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(VepError::Dimension(format!("label {bad} is not binary")));
        }
        Ok(Self {
            features,
            labels,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }
}

/// Feature rows read from a file, with labels when a `label` column is present.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub features: Vec<Vec<f64>>,
    pub labels: Option<Vec<u8>>,
    pub feature_names: Vec<String>,
}

fn csv_error(line: u64, message: impl Into<String>) -> VepError {
    VepError::Csv {
        line,
        message: message.into(),
    }
}

fn read_table(path: &Path, require_label: bool) -> Result<FeatureTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| VepError::Io(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| csv_error(1, e.to_string()))?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(VepError::NoDataRows);
    }
    let has_label = headers.iter().last() == Some(LABEL_COLUMN);
    if require_label && !has_label {
        return Err(csv_error(1, format!("last column must be named \"{LABEL_COLUMN}\"")));
    }
    let width = headers.len();
    let n_features = if has_label { width - 1 } else { width };
    let feature_names: Vec<String> = headers.iter().take(n_features).map(str::to_owned).collect();

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let more = reader.read_record(&mut record).map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_error(line, e.to_string())
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != width {
            return Err(csv_error(line, format!("expected {width} fields, found {}", record.len())));
        }
        let mut row = Vec::with_capacity(n_features);
        for (j, field) in record.iter().take(n_features).enumerate() {
            let value: f64 = field
                .parse()
                .map_err(|_| csv_error(line, format!("column \"{}\": \"{field}\" is not a number", &headers[j])))?;
            if !value.is_finite() {
                return Err(csv_error(line, format!("column \"{}\": value is not finite", &headers[j])));
            }
            row.push(value);
        }
        if has_label {
            let label = match &record[width - 1] {
                "0" => 0,
                "1" => 1,
                other => return Err(csv_error(line, format!("label \"{other}\" is not 0 or 1"))),
            };
            labels.push(label);
        }
        features.push(row);
    }
    if features.is_empty() {
        return Err(VepError::NoDataRows);
    }
    Ok(FeatureTable {
        features,
        labels: has_label.then_some(labels),
        feature_names,
    })
}

/// Reads a comma-separated file with a header row whose last column is `label`.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let table = read_table(path.as_ref(), true)?;
    let labels = table.labels.expect("label column was required");
    Dataset::new(table.features, labels, table.feature_names)
}

/// Like [`load_csv`] but the `label` column is optional.
pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureTable> {
    read_table(path.as_ref(), false)
}

/// Writes `feature names..., label` with shortest round-trip float formatting.
pub fn write_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e: csv::Error| VepError::Io(format!("{}: {e}", path.display()));
    let mut writer = csv::Writer::from_path(path).map_err(io_err)?;
    let mut header: Vec<&str> = data.feature_names.iter().map(String::as_str).collect();
    header.push(LABEL_COLUMN);
    writer.write_record(&header).map_err(io_err)?;
    for (row, y) in data.features.iter().zip(&data.labels) {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        fields.push(y.to_string());
        writer.write_record(&fields).map_err(io_err)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    Separable,
    Sparse,
    Noise,
}

impl FromStr for SyntheticKind {
    type Err = VepError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separable" => Ok(Self::Separable),
            "sparse" => Ok(Self::Sparse),
            "noise" => Ok(Self::Noise),
            other => Err(VepError::Config(format!(
                "invalid kind \"{other}\" (expected separable, sparse or noise)"
            ))),
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Separable => "separable",
            Self::Sparse => "sparse",
            Self::Noise => "noise",
        })
    }
}

/// How a synthetic set was built.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticMeta {
    pub kind: SyntheticKind,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    /// Columns the labels depend on.
    pub relevant_columns: Vec<usize>,
    /// Label-generating coefficients, one per feature (zero when irrelevant).
    pub coefficients: Vec<f64>,
}

/// Minimum `|w·x|` for separable points, `w` a unit vector.
pub const SEPARABLE_MARGIN: f64 = 0.1;
/// Logistic coefficient magnitude on each relevant column of the sparse kind.
pub const SPARSE_SIGNAL: f64 = 3.0;

const GENERATE_STREAM: u64 = 0xda7a;

fn gaussian_row<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// Standard-normal features with labels from the chosen mechanism:
/// `separable` uses the sign of a random hyperplane through the origin and
/// rejects points within [`SEPARABLE_MARGIN`] of it; `sparse` draws logistic
/// labels from two random columns with coefficients `±SPARSE_SIGNAL`;
/// `noise` draws labels from Bernoulli(1/2).
pub fn generate_synthetic(kind: SyntheticKind, n: usize, d: usize, seed: u64) -> Result<(Dataset, SyntheticMeta)> {
    if n == 0 || d == 0 {
        return Err(VepError::Config(format!("n and d must be >= 1 (got n={n}, d={d})")));
    }
    if kind == SyntheticKind::Sparse && d < 2 {
        return Err(VepError::Config(format!("sparse kind needs d >= 2, got {d}")));
    }
    let mut rng = seeded_rng(seed, GENERATE_STREAM);
    let (relevant, coefficients) = match kind {
        SyntheticKind::Separable => {
            let w = loop {
                let w = gaussian_row(&mut rng, d);
                let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1e-3 {
                    break w.into_iter().map(|v| v / norm).collect::<Vec<_>>();
                }
            };
            ((0..d).collect(), w)
        }
        SyntheticKind::Sparse => {
            let mut cols = sample(&mut rng, d, 2).into_vec();
            cols.sort_unstable();
            let mut w = vec![0.0; d];
            w[cols[0]] = SPARSE_SIGNAL;
            w[cols[1]] = -SPARSE_SIGNAL;
            (cols, w)
        }
        SyntheticKind::Noise => (Vec::new(), vec![0.0; d]),
    };
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while features.len() < n {
        let x = gaussian_row(&mut rng, d);
        let score: f64 = x.iter().zip(&coefficients).map(|(a, b)| a * b).sum();
        let y = match kind {
            SyntheticKind::Separable => {
                if score.abs() < SEPARABLE_MARGIN {
                    continue;
                }
                u8::from(score > 0.0)
            }
            SyntheticKind::Sparse => u8::from(rng.random::<f64>() < sigmoid(score)),
            SyntheticKind::Noise => u8::from(rng.random::<bool>()),
        };
        features.push(x);
        labels.push(y);
    }
    let names = (0..d).map(|j| format!("x{j}")).collect();
    let meta = SyntheticMeta {
        kind,
        n,
        d,
        seed,
        relevant_columns: relevant,
        coefficients,
    };
    Ok((Dataset::new(features, labels, names)?, meta))
}
