//! Datasets: synthetic manifold generators, CSV ingestion and feature-wise
//! zero-one normalization.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// A set of `n` points in `d_h` dimensions plus an optional per-point scalar
/// label used as a color/ordering parameter in plots.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Array2<f64>,
    labels: Option<Vec<f64>>,
    name: String,
}

impl Dataset {
    /// Build a dataset, validating the invariants: at least two points, at
    /// least one feature, all coordinates finite, labels (when present) one
    /// per point.
    pub fn new(points: Array2<f64>, labels: Option<Vec<f64>>, name: &str) -> Result<Self> {
        if points.nrows() < 2 {
            return Err(Error::InvalidArgument(format!(
                "dataset needs at least 2 points, got {}",
                points.nrows()
            )));
        }
        if points.ncols() < 1 {
            return Err(Error::InvalidArgument("dataset needs at least 1 feature".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "dataset contains a non-finite coordinate".into(),
            ));
        }
        if let Some(ref l) = labels {
            if l.len() != points.nrows() {
                return Err(Error::InvalidArgument(format!(
                    "labels length {} does not match point count {}",
                    l.len(),
                    points.nrows()
                )));
            }
        }
        Ok(Self {
            points,
            labels,
            name: name.to_string(),
        })
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn labels(&self) -> Option<&[f64]> {
        self.labels.as_deref()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// One point as a slice (rows are contiguous).
    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.points.as_slice().expect("row-major layout")[i * d..(i + 1) * d]
    }

    /// Euclidean distance between points `i` and `j`.
    pub fn euclidean(&self, i: usize, j: usize) -> f64 {
        euclidean(self.row(i), self.row(j))
    }

    /// Largest pairwise Euclidean distance.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.n() {
            for j in (i + 1)..self.n() {
                best = best.max(self.euclidean(i, j));
            }
        }
        best
    }

    /// Subset of the rows (labels carried along). Indices must be valid and
    /// there must be at least two of them.
    pub fn select(&self, indices: &[usize], name: &str) -> Result<Self> {
        let d = self.dim();
        let mut pts = Array2::zeros((indices.len(), d));
        for (r, &i) in indices.iter().enumerate() {
            pts.row_mut(r).assign(&self.points.row(i));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Dataset::new(pts, labels, name)
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Per-feature minimum/maximum of a training set; supports re-applying the
/// training-time affine map to held-out points.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    /// Identity stats: applying them leaves points unchanged.
    pub fn identity(dim: usize) -> Self {
        Self {
            min: vec![0.0; dim],
            max: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Map one coordinate of feature `q` into the unit interval of the
    /// training data. Constant features map to 0. Values outside the training
    /// range land outside [0,1] on purpose: rejection logic must see true
    /// distances.
    pub fn apply_value(&self, q: usize, x: f64) -> f64 {
        let range = self.max[q] - self.min[q];
        if range > 0.0 {
            (x - self.min[q]) / range
        } else {
            0.0
        }
    }

    /// Apply the stored affine map to every point of a dataset.
    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset> {
        if dataset.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: dataset.dim(),
            });
        }
        let mut pts = dataset.points().clone();
        for mut row in pts.rows_mut() {
            for q in 0..self.dim() {
                row[q] = self.apply_value(q, row[q]);
            }
        }
        Dataset::new(pts, dataset.labels().map(|l| l.to_vec()), dataset.name())
    }
}

/// Swiss roll: `(t cos t, h, t sin t)` with `t` uniform in `[1.5pi, 4.5pi]`
/// and `h` uniform in `[0, 21]`; the label is the unrolled parameter `t`.
pub fn generate_swiss_roll(n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n must be >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Array2::zeros((n, 3));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let t = 1.5 * PI * (1.0 + 2.0 * rng.random_range(0.0..1.0));
        let h = 21.0 * rng.random_range(0.0..1.0);
        pts[[i, 0]] = t * t.cos();
        pts[[i, 1]] = h;
        pts[[i, 2]] = t * t.sin();
        labels.push(t);
    }
    Dataset::new(pts, Some(labels), "swiss-roll")
}

/// S curve: `(sin t, h, sign(t) (cos t - 1))` with `t` uniform in
/// `[-1.5pi, 1.5pi]` and `h` uniform in `[0, 2]`; label is `t`.
pub fn generate_s_curve(n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n must be >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Array2::zeros((n, 3));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let t = 3.0 * PI * (rng.random_range(0.0..1.0) - 0.5);
        let h = 2.0 * rng.random_range(0.0..1.0);
        pts[[i, 0]] = t.sin();
        pts[[i, 1]] = h;
        pts[[i, 2]] = t.signum() * (t.cos() - 1.0);
        labels.push(t);
    }
    Dataset::new(pts, Some(labels), "s-curve")
}

/// Helix: `z = t / sqrt(2)`, point `(cos z, sin z, z)` for
/// `t = t_min, t_min + step, ... <= t_max`; label is `t`.
///
/// The sweep `(-20, 20, 0.02)` yields 2001 points: the arithmetic sequence
/// from -20 to 20 inclusive has 2001 terms, one more than the commonly quoted
/// 2000. The true count is reported.
pub fn generate_helix(t_min: f64, t_max: f64, step: f64) -> Result<Dataset> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be > 0, got {step}")));
    }
    if !(t_max > t_min) {
        return Err(Error::InvalidArgument(format!(
            "t_max ({t_max}) must be greater than t_min ({t_min})"
        )));
    }
    // Tolerate float rounding in the endpoint so a nominal span of k steps
    // really yields k+1 points.
    let count = ((t_max - t_min) / step + 1e-9).floor() as usize + 1;
    let mut pts = Array2::zeros((count, 3));
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let t = t_min + i as f64 * step;
        let z = t / 2.0f64.sqrt();
        pts[[i, 0]] = z.cos();
        pts[[i, 1]] = z.sin();
        pts[[i, 2]] = z;
        labels.push(t);
    }
    Dataset::new(pts, Some(labels), "helix")
}

/// Returns true when the first row of the file contains a field that does not
/// parse as a number, i.e. looks like a header.
pub fn sniff_header(path: &Path) -> Result<bool> {
    let content = std::fs::read_to_string(path)?;
    let first = content
        .lines()
        .next()
        .ok_or_else(|| Error::InsufficientData(format!("{}: file is empty", path.display())))?;
    Ok(first
        .split(',')
        .any(|cell| cell.trim().parse::<f64>().is_err()))
}

/// Column names of the header row.
pub fn header_names(path: &Path) -> Result<Vec<String>> {
    read_header(path)
}

fn read_header(path: &Path) -> Result<Vec<String>> {
    let content = std::fs::read_to_string(path)?;
    let first = content
        .lines()
        .next()
        .ok_or_else(|| Error::InsufficientData(format!("{}: file is empty", path.display())))?;
    Ok(first.split(',').map(|s| s.trim().to_string()).collect())
}

/// Index of the column literally named `label`, if a header is present.
pub fn find_label_column(path: &Path, has_header: bool) -> Result<Option<usize>> {
    if !has_header {
        return Ok(None);
    }
    Ok(read_header(path)?.iter().position(|name| name == "label"))
}

/// Load a numeric CSV. `label_column`, when given, is extracted into the
/// label vector instead of the feature matrix. Row/column numbers in errors
/// are 1-based and count the header row.
pub fn load_csv(path: &Path, has_header: bool, label_column: Option<usize>) -> Result<Dataset> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: display.clone(),
            detail: e.to_string(),
        })?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    let header_offset = if has_header { 1 } else { 0 };

    for (idx, record) in reader.records().enumerate() {
        let row_no = idx + 1 + header_offset;
        let record = record.map_err(|e| Error::Csv {
            path: display.clone(),
            detail: e.to_string(),
        })?;
        if record.len() == 1 && record[0].is_empty() {
            continue; // trailing blank line
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::CsvRagged {
                    path: display,
                    row: row_no,
                    expected: w,
                    got: record.len(),
                })
            }
            _ => {}
        }
        if let Some(lc) = label_column {
            if lc >= record.len() {
                return Err(Error::InvalidArgument(format!(
                    "label column {lc} out of range for {} columns",
                    record.len()
                )));
            }
        }
        let mut row = Vec::with_capacity(record.len());
        for (col, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::CsvParse {
                path: display.clone(),
                row: row_no,
                col: col + 1,
                value: cell.to_string(),
            })?;
            if Some(col) == label_column {
                labels.push(value);
            } else {
                row.push(value);
            }
        }
        rows.push(row);
    }

    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{display}: need at least 2 data rows, got {}",
            rows.len()
        )));
    }
    let d = rows[0].len();
    if d == 0 {
        return Err(Error::InsufficientData(format!(
            "{display}: no feature columns left after label extraction"
        )));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let n = flat.len() / d;
    let pts = Array2::from_shape_vec((n, d), flat)
        .expect("dimensions checked while reading");
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    Dataset::new(pts, (label_column.is_some()).then_some(labels), &name)
}

/// Write a dataset as CSV with a header (`x0..x{d-1}` plus `label` when
/// present). Values are printed with shortest round-trip precision.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    let d = dataset.dim();
    for q in 0..d {
        if q > 0 {
            out.push(',');
        }
        out.push_str(&format!("x{q}"));
    }
    if dataset.labels().is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for i in 0..dataset.n() {
        let row = dataset.row(i);
        for (q, v) in row.iter().enumerate() {
            if q > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
        }
        if let Some(labels) = dataset.labels() {
            out.push_str(&format!(",{}", labels[i]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Affinely map every feature to [0,1] over the dataset; constant features
/// map to 0. Returns the transformed dataset and the stats needed to apply
/// the identical map to held-out points.
pub fn normalize_unit(dataset: &Dataset) -> (Dataset, NormStats) {
    let d = dataset.dim();
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for i in 0..dataset.n() {
        for (q, &v) in dataset.row(i).iter().enumerate() {
            min[q] = min[q].min(v);
            max[q] = max[q].max(v);
        }
    }
    let stats = NormStats { min, max };
    let normalized = stats
        .apply(dataset)
        .expect("dimensions match by construction");
    (normalized, stats)
}
