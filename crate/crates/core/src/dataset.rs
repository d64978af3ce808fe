//! Sparse binary-classification datasets: LIBSVM I/O, synthetic generation, normalization.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("row {0} has zero norm and cannot be normalized")]
    ZeroRow(usize),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Sparse row in canonical form: strictly increasing 0-based indices, no stored zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    indices: Vec<usize>,
    values: Vec<f64>,
    dim: usize,
}

impl SparseVector {
    /// Builds a canonical sparse vector. Zero values are dropped; indices must be
    /// strictly increasing and below `dim`.
    pub fn new(dim: usize, entries: impl IntoIterator<Item = (usize, f64)>) -> Result<Self, DatasetError> {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut last: Option<usize> = None;
        for (j, v) in entries {
            if j >= dim {
                return Err(DatasetError::Invalid(format!("index {j} out of range for dimension {dim}")));
            }
            if let Some(prev) = last {
                if j <= prev {
                    return Err(DatasetError::Invalid(format!("indices not strictly increasing ({prev} then {j})")));
                }
            }
            if !v.is_finite() {
                return Err(DatasetError::Invalid(format!("non-finite value at index {j}")));
            }
            last = Some(j);
            if v != 0.0 {
                indices.push(j);
                values.push(v);
            }
        }
        Ok(Self { indices, values, dim })
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| (j, *v))
            .unzip();
        Self { indices, values, dim: dense.len() }
    }

    pub fn empty(dim: usize) -> Self {
        Self { indices: Vec::new(), values: Vec::new(), dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    #[inline]
    pub fn dot_dense(&self, x: &[f64]) -> f64 {
        self.iter().map(|(j, v)| v * x[j]).sum()
    }

    /// `out += alpha * self`
    #[inline]
    pub fn axpy_into(&self, alpha: f64, out: &mut [f64]) {
        for (j, v) in self.iter() {
            out[j] += alpha * v;
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.axpy_into(1.0, &mut out);
        out
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
            dim: self.dim,
        }
    }

    /// Same entries, embedded in a (not smaller) dimension.
    pub fn widened(&self, dim: usize) -> Result<Self, DatasetError> {
        if self.indices.last().is_some_and(|&j| j >= dim) {
            return Err(DatasetError::Invalid(format!("cannot shrink row to dimension {dim}")));
        }
        Ok(Self { dim, ..self.clone() })
    }
}

/// Immutable labelled dataset with cached squared row norms.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<SparseVector>,
    labels: Vec<f64>,
    dim: usize,
    row_sq_norms: Vec<f64>,
}

impl Dataset {
    /// Labels must be exactly `+1.0` or `-1.0`; every row must have dimension `dim`.
    pub fn new(rows: Vec<SparseVector>, labels: Vec<f64>, dim: usize) -> Result<Self, DatasetError> {
        if rows.is_empty() {
            return Err(DatasetError::Invalid("dataset has no rows".into()));
        }
        if rows.len() != labels.len() {
            return Err(DatasetError::Invalid(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some((i, b)) = labels.iter().enumerate().find(|(_, b)| **b != 1.0 && **b != -1.0) {
            return Err(DatasetError::Invalid(format!("label {b} of row {i} is not ±1")));
        }
        if let Some(i) = rows.iter().position(|r| r.dim() != dim) {
            return Err(DatasetError::Invalid(format!(
                "row {i} has dimension {} but dataset dimension is {dim}",
                rows[i].dim()
            )));
        }
        let row_sq_norms = rows.iter().map(SparseVector::norm_sq).collect();
        Ok(Self { rows, labels, dim, row_sq_norms })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[SparseVector] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &SparseVector {
        &self.rows[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn row_sq_norms(&self) -> &[f64] {
        &self.row_sq_norms
    }

    pub fn max_row_sq_norm(&self) -> f64 {
        self.row_sq_norms.iter().copied().fold(0.0, f64::max)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(SparseVector::nnz).sum()
    }

    /// Scales every row to unit ℓ2 norm.
    pub fn normalize_rows(&self) -> Result<Self, DatasetError> {
        let rows = self
            .rows
            .iter()
            .zip(&self.row_sq_norms)
            .enumerate()
            .map(|(i, (row, &sq))| {
                if sq == 0.0 {
                    Err(DatasetError::ZeroRow(i))
                } else {
                    Ok(row.scaled(1.0 / sq.sqrt()))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(rows, self.labels.clone(), self.dim)
    }

    /// Appends a constant-1 feature as the last column.
    pub fn with_bias_column(&self) -> Self {
        let dim = self.dim + 1;
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut indices = r.indices.clone();
                let mut values = r.values.clone();
                indices.push(self.dim);
                values.push(1.0);
                SparseVector { indices, values, dim }
            })
            .collect();
        Self::new(rows, self.labels.clone(), dim).expect("bias column preserves invariants")
    }

    /// Re-embeds the dataset in a wider feature space (train/test alignment).
    pub fn with_dim(&self, dim: usize) -> Result<Self, DatasetError> {
        let rows = self.rows.iter().map(|r| r.widened(dim)).collect::<Result<Vec<_>, _>>()?;
        Self::new(rows, self.labels.clone(), dim)
    }
}

/// Formats a float with the shortest decimal that parses back to the same value.
pub fn fmt_shortest(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:?}")
    }
}

struct LibsvmLine<'a>(&'a SparseVector, f64);

impl fmt::Display for LibsvmLine<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.1 > 0.0 { "+1" } else { "-1" })?;
        for (j, v) in self.0.iter() {
            write!(f, " {}:{}", j + 1, fmt_shortest(v))?;
        }
        Ok(())
    }
}

/// Canonical writer: `label idx:val ...` with 1-based indices.
pub fn write_libsvm<W: Write>(ds: &Dataset, mut out: W) -> io::Result<()> {
    for (row, &b) in ds.rows.iter().zip(&ds.labels) {
        writeln!(out, "{}", LibsvmLine(row, b))?;
    }
    out.flush()
}

pub fn to_libsvm_string(ds: &Dataset) -> String {
    let mut buf = Vec::new();
    write_libsvm(ds, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

fn parse_label(tok: &str) -> Option<f64> {
    match tok {
        "+1" | "1" => Some(1.0),
        "-1" | "0" => Some(-1.0),
        _ => None,
    }
}

/// Reads LIBSVM text. Indices on disk are 1-based. `dim` defaults to the largest index
/// seen; pass `dim_override` to align several files.
pub fn parse_libsvm<R: BufRead>(reader: R, dim_override: Option<usize>) -> Result<Dataset, DatasetError> {
    let mut raw_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line?;
        let mut tokens = line.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue;
        };
        let err = |message: String| DatasetError::Parse { line: line_no, message };
        let label = parse_label(label_tok).ok_or_else(|| err(format!("unrecognized label {label_tok:?}")))?;
        let mut entries = Vec::new();
        let mut prev = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("malformed token {tok:?}")))?;
            let idx: usize = idx.parse().map_err(|_| err(format!("malformed index in {tok:?}")))?;
            if idx == 0 {
                return Err(err(format!("index 0 in {tok:?}; indices are 1-based")));
            }
            let val: f64 = val.parse().map_err(|_| err(format!("malformed value in {tok:?}")))?;
            if !val.is_finite() {
                return Err(err(format!("non-finite value in {tok:?}")));
            }
            if idx <= prev {
                return Err(err(format!("index {idx} does not increase (previous {prev})")));
            }
            prev = idx;
            if val != 0.0 {
                entries.push((idx - 1, val));
            }
        }
        max_index = max_index.max(prev);
        raw_rows.push(entries);
        labels.push(label);
    }
    let dim = match dim_override {
        Some(d) if d < max_index => {
            return Err(DatasetError::Invalid(format!(
                "dimension override {d} is smaller than the largest index {max_index}"
            )))
        }
        Some(d) => d,
        None => max_index,
    };
    let rows = raw_rows
        .into_iter()
        .map(|entries| SparseVector::new(dim, entries))
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::new(rows, labels, dim)
}

pub fn parse_libsvm_str(text: &str, dim_override: Option<usize>) -> Result<Dataset, DatasetError> {
    parse_libsvm(text.as_bytes(), dim_override)
}

pub fn read_libsvm_file(path: impl AsRef<Path>, dim_override: Option<usize>) -> Result<Dataset, DatasetError> {
    parse_libsvm(BufReader::new(File::open(path)?), dim_override)
}

/// Fraction of generated entries kept by [`generate_synthetic`].
pub const SYNTHETIC_DENSITY: f64 = 0.7;

/// Two label-conditioned Gaussian clusters centred at `±(separation/2)·u` for a random unit
/// direction `u`, with unit-variance isotropic noise, then sparsified by keeping each entry
/// with probability [`SYNTHETIC_DENSITY`]. Rows 0 and 1 are labelled `+1` and `-1`.
pub fn generate_synthetic(n: usize, d: usize, seed: u64, separation: f64) -> Result<Dataset, DatasetError> {
    if n < 2 {
        return Err(DatasetError::Invalid(format!("n = {n}; at least 2 rows are needed to hold both labels")));
    }
    if d == 0 {
        return Err(DatasetError::Invalid("dimension must be at least 1".into()));
    }
    if !separation.is_finite() {
        return Err(DatasetError::Invalid("separation must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut direction: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let len = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if len > 0.0 {
        direction.iter_mut().for_each(|v| *v /= len);
    } else {
        direction[0] = 1.0;
    }

    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let b = match i {
            0 => 1.0,
            1 => -1.0,
            _ if rng.random_bool(0.5) => 1.0,
            _ => -1.0,
        };
        let mut dense: Vec<f64> = direction
            .iter()
            .map(|u| b * 0.5 * separation * u + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let keep: Vec<bool> = (0..d).map(|_| rng.random_bool(SYNTHETIC_DENSITY)).collect();
        let largest = (0..d)
            .max_by(|&a, &c| dense[a].abs().total_cmp(&dense[c].abs()))
            .expect("d >= 1");
        for j in 0..d {
            if !keep[j] && j != largest {
                dense[j] = 0.0;
            }
        }
        rows.push(SparseVector::new(d, dense.into_iter().enumerate())?);
        labels.push(b);
    }
    Dataset::new(rows, labels, d)
}
