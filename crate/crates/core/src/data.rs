//! Dataset representation, column standardization and matrix file I/O.
//!
//! Two on-disk formats are supported:
//!
//! * CSV with a header `label,<id0>,<id1>,...`, one observation per line.
//! * `binary-f64`: magic `STBL`, `u32` version (1), `u64` n, `u64` p, then n
//!   little-endian `f64` labels followed by n·p little-endian `f64` values in
//!   row-major order.
//!
//! Row and column numbers in error messages are 1-based and count data rows
//! (the header is not a row); column 1 is the label.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"STBL";
const BINARY_VERSION: u32 = 1;

/// File format accepted by [`load_matrix`] and [`save_matrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    BinaryF64,
}

impl MatrixFormat {
    /// Guesses the format from a file extension: `.csv` is CSV, anything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::BinaryF64,
        }
    }
}

impl std::str::FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MatrixFormat::Csv),
            "binary-f64" | "bin" => Ok(MatrixFormat::BinaryF64),
            other => Err(Error::InvalidConfig(format!("unknown matrix format `{other}`"))),
        }
    }
}

/// Sorted, duplicate-free set of feature indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn empty() -> Self {
        IndexSet(Vec::new())
    }

    /// `0, 1, .., p-1`.
    pub fn full(p: usize) -> Self {
        IndexSet((0..p).collect())
    }

    /// Sorts and deduplicates arbitrary indices.
    pub fn from_unsorted(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        IndexSet(indices)
    }

    /// Builds a set and checks every member is below `bound`.
    pub fn with_bound(indices: Vec<usize>, bound: usize) -> Result<Self> {
        let set = Self::from_unsorted(indices);
        if let Some(&last) = set.0.last() {
            if last >= bound {
                return Err(Error::IndexOutOfRange { index: last, bound });
            }
        }
        Ok(set)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&index).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn intersection_len(&self, other: &IndexSet) -> usize {
        let (mut i, mut j, mut count) = (0, 0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    count += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        count
    }

    /// Maps members through `lookup` (e.g. a restricted-to-original index table).
    pub fn map_through(&self, lookup: &[usize]) -> IndexSet {
        IndexSet::from_unsorted(self.0.iter().map(|&i| lookup[i]).collect())
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }
}

impl FromIterator<usize> for IndexSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        IndexSet::from_unsorted(iter.into_iter().collect())
    }
}

/// Observation matrix with binary labels.
///
/// `x` is n×p (rows are observations), `y` holds labels in `{0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Vec<u8>,
    feature_ids: Vec<String>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<u8>, feature_ids: Vec<String>) -> Result<Self> {
        let (n, p) = x.dim();
        if n < 2 {
            return Err(Error::InvalidDataset(format!("need at least 2 observations, got {n}")));
        }
        if p < 1 {
            return Err(Error::InvalidDataset("need at least 1 feature".into()));
        }
        if y.len() != n {
            return Err(Error::InvalidDataset(format!(
                "label vector has length {} but matrix has {n} rows",
                y.len()
            )));
        }
        if feature_ids.len() != p {
            return Err(Error::InvalidDataset(format!(
                "{} feature ids for {p} columns",
                feature_ids.len()
            )));
        }
        if let Some(row) = y.iter().position(|&v| v > 1) {
            return Err(Error::NonBinaryLabel { row: row + 1 });
        }
        for ((row, column), v) in x.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: row + 1,
                    column: column + 2,
                });
            }
        }
        Ok(Dataset { x, y, feature_ids })
    }

    /// Same as [`Dataset::new`] with ids `f0..f{p-1}`.
    pub fn with_default_ids(x: Array2<f64>, y: Vec<u8>) -> Result<Self> {
        let ids = default_ids(x.ncols());
        Self::new(x, y, ids)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    /// Labels mapped to ±1.
    pub fn signed_labels(&self) -> Vec<f64> {
        self.y.iter().map(|&v| 2.0 * f64::from(v) - 1.0).collect()
    }

    /// `(n0, n1)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let n1 = self.y.iter().filter(|&&v| v == 1).count();
        (self.y.len() - n1, n1)
    }

    /// Fails unless both classes are present.
    pub fn require_both_classes(&self) -> Result<()> {
        let (n0, n1) = self.class_counts();
        if n0 == 0 || n1 == 0 {
            return Err(Error::InvalidDataset(format!(
                "both classes required, got {n0} zeros and {n1} ones"
            )));
        }
        Ok(())
    }

    /// Replaces the labels, keeping the matrix.
    pub fn with_labels(&self, y: Vec<u8>) -> Result<Self> {
        Dataset::new(self.x.clone(), y, self.feature_ids.clone())
    }

    /// Column `j` as a view.
    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.x.column(j)
    }

    /// Copy of the matrix in column-major order: the `j`-th chunk of `n` values is column `j`.
    pub fn columns_contiguous(&self) -> Vec<f64> {
        let (n, p) = self.x.dim();
        let mut out = Vec::with_capacity(n * p);
        for col in self.x.axis_iter(Axis(1)) {
            out.extend(col.iter().copied());
        }
        out
    }

    /// SHA-256 over shape, labels and matrix bytes; identifies the exact data a
    /// ranking was computed from.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        h.update((self.p() as u64).to_le_bytes());
        h.update(&self.y);
        for v in self.x.iter() {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

pub fn default_ids(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("f{j}")).collect()
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ColumnStats {
    pub fn compute(x: &Array2<f64>) -> Self {
        let (n, _) = x.dim();
        let mut means = Vec::with_capacity(x.ncols());
        let mut stds = Vec::with_capacity(x.ncols());
        for col in x.axis_iter(Axis(1)) {
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                means.push(first);
                stds.push(0.0);
                continue;
            }
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            means.push(mean);
            stds.push(var.sqrt());
        }
        ColumnStats { means, stds }
    }

    /// Applies `(x - mean) / std` column-wise; zero-std columns become all zeros.
    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.means[j], self.stds[j]);
            if s > 0.0 {
                col.mapv_inplace(|v| (v - m) / s);
            } else {
                col.fill(0.0);
            }
        }
        out
    }
}

/// Centers and scales every column to mean 0, std 1. Constant columns are
/// mapped to all zeros and recorded with std 0.
pub fn standardize(d: &Dataset) -> (Dataset, ColumnStats) {
    let stats = ColumnStats::compute(&d.x);
    let x = stats.apply(&d.x);
    (
        Dataset {
            x,
            y: d.y.clone(),
            feature_ids: d.feature_ids.clone(),
        },
        stats,
    )
}

/// Submatrix `x[rows, cols]` with `y[rows]` and the matching feature ids.
pub fn restrict(d: &Dataset, rows: &[usize], cols: &IndexSet) -> Result<Dataset> {
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::InvalidDataset("restriction to an empty row or column set".into()));
    }
    if let Some(&bad) = rows.iter().find(|&&r| r >= d.n()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            bound: d.n(),
        });
    }
    if let Some(bad) = cols.iter().find(|&c| c >= d.p()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            bound: d.p(),
        });
    }
    let x = Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| {
        d.x[[rows[i], cols.as_slice()[j]]]
    });
    let y = rows.iter().map(|&r| d.y[r]).collect();
    let feature_ids = cols.iter().map(|c| d.feature_ids[c].clone()).collect();
    Dataset::new(x, y, feature_ids)
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<Dataset> {
    match format {
        MatrixFormat::Csv => load_csv(path),
        MatrixFormat::BinaryF64 => load_binary(path),
    }
}

pub fn save_matrix(d: &Dataset, path: &Path, format: MatrixFormat) -> Result<()> {
    match format {
        MatrixFormat::Csv => save_csv(d, path),
        MatrixFormat::BinaryF64 => save_binary(d, path),
    }
}

fn parse_label(field: &str, row: usize) -> Result<u8> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        row,
        column: 1,
        message: format!("label `{field}` is not a number"),
    })?;
    if v == 0.0 {
        Ok(0)
    } else if v == 1.0 {
        Ok(1)
    } else {
        Err(Error::NonBinaryLabel { row })
    }
}

fn load_csv(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(BufReader::new(file));
    let header = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Empty(path.display().to_string()));
    }
    if header.len() < 2 {
        return Err(Error::Format(format!(
            "{}: header must be `label,<feature ids>`",
            path.display()
        )));
    }
    let p = header.len() - 1;
    let feature_ids: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if record.len() != p + 1 {
            return Err(Error::Parse {
                row,
                column: record.len().min(p + 1),
                message: format!("expected {} fields, found {}", p + 1, record.len()),
            });
        }
        labels.push(parse_label(&record[0], row)?);
        for (j, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row,
                column: j + 2,
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, column: j + 2 });
            }
            values.push(v);
        }
    }
    if labels.is_empty() {
        return Err(Error::Empty(path.display().to_string()));
    }
    let n = labels.len();
    let x = Array2::from_shape_vec((n, p), values).expect("row width checked above");
    Dataset::new(x, labels, feature_ids)
}

fn save_csv(d: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "label").map_err(io)?;
    for id in &d.feature_ids {
        write!(w, ",{id}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for (i, row) in d.x.axis_iter(Axis(0)).enumerate() {
        write!(w, "{}", d.y[i]).map_err(io)?;
        for v in row {
            write!(w, ",{v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn save_binary(d: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&BINARY_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(d.n() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(d.p() as u64).to_le_bytes()).map_err(io)?;
    for &label in &d.y {
        w.write_all(&f64::from(label).to_le_bytes()).map_err(io)?;
    }
    for v in d.x.iter() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn load_binary(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.is_empty() {
        return Err(Error::Empty(path.display().to_string()));
    }
    const HEADER: usize = 4 + 4 + 8 + 8;
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("{}: missing STBL header", path.display())));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != BINARY_VERSION {
        return Err(Error::Format(format!("unsupported binary version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let p = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let expected = n
        .checked_mul(p)
        .and_then(|np| np.checked_add(n))
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(HEADER))
        .ok_or_else(|| Error::Format("header dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{}: expected {expected} bytes for n={n}, p={p}, found {}",
            path.display(),
            bytes.len()
        )));
    }
    let read_f64 = |k: usize| {
        let off = HEADER + 8 * k;
        f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap())
    };
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let v = read_f64(i);
        labels.push(match v {
            v if v == 0.0 => 0,
            v if v == 1.0 => 1,
            _ => return Err(Error::NonBinaryLabel { row: i + 1 }),
        });
    }
    let mut values = Vec::with_capacity(n * p);
    for k in 0..n * p {
        let v = read_f64(n + k);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                row: k / p + 1,
                column: k % p + 2,
            });
        }
        values.push(v);
    }
    let x = Array2::from_shape_vec((n, p), values).expect("length checked");
    Dataset::with_default_ids(x, labels)
}
