//! Standardization, PCA embeddings, density clustering and cluster
//! summaries over per-hex feature vectors.

mod hdbscan;
mod pca;
mod search;
mod summary;

use rayon::prelude::*;
use thiserror::Error;

use crate::ingest::{HexFrame, IngestError, RowKey};

pub use hdbscan::{core_distances, hdbscan_fit, mutual_reachability_mst, ClusterModel, CondensedEdge, MstEdge};
pub use pca::{pca_fit, pca_select, pca_transform, symmetric_eigen, PcaModel, PcaSelect};
pub use search::{grid_search_hdbscan, silhouette, GridSearch, DEFAULT_LATTICE};
pub use summary::{cluster_summary, five_number, summary_csv, ClusterSummary, FiveNumber};

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("matrix has no rows or no columns")]
    Empty,
    #[error("need at least {needed} rows, got {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("row {row} has {found} values, expected {expected}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("asked for {k} components but only {d} features")]
    TooManyComponents { k: usize, d: usize },
    #[error("data has zero total variance")]
    ZeroVariance,
    #[error("threshold must be in (0, 1], got {0}")]
    Threshold(f64),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("{labels} labels for {rows} rows")]
    LabelCount { labels: usize, rows: usize },
    #[error("no valid clustering: every parameter pair gave fewer than two clusters")]
    NoValidClustering,
}

/// Dense row-major observations × features, with optional row keys when
/// built from a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
    pub columns: Vec<String>,
    pub keys: Vec<RowKey>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AnalyticsError> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || d == 0 {
            return Err(AnalyticsError::Empty);
        }
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(AnalyticsError::Ragged {
                    row: i,
                    expected: d,
                    found: r.len(),
                });
            }
            for (j, v) in r.iter().enumerate() {
                if !v.is_finite() {
                    return Err(AnalyticsError::NonFinite { row: i, col: j });
                }
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            n: rows.len(),
            d,
            data,
            columns: (0..d).map(|j| format!("x{j}")).collect(),
            keys: Vec::new(),
        })
    }

    /// Rows of `frame` with a value in every selected column (all columns
    /// when `columns` is empty). Returns the matrix and the number of rows
    /// dropped for missing values.
    pub fn from_frame(frame: &HexFrame, columns: &[&str]) -> Result<(Self, usize), AnalyticsError> {
        let names: Vec<String> = if columns.is_empty() {
            frame.variables().to_vec()
        } else {
            columns.iter().map(|c| c.to_string()).collect()
        };
        let idx = names
            .iter()
            .map(|c| frame.column_index(c).ok_or_else(|| IngestError::MissingColumn(c.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let mut rows = Vec::new();
        let mut keys = Vec::new();
        let mut dropped = 0;
        for (k, v) in frame.rows() {
            let row: Option<Vec<f64>> = idx.iter().map(|&i| v[i]).collect();
            match row {
                Some(r) => {
                    rows.push(r);
                    keys.push(k.clone());
                }
                None => dropped += 1,
            }
        }
        let mut m = Self::from_rows(&rows)?;
        m.columns = names;
        m.keys = keys;
        Ok((m, dropped))
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    fn with_data(&self, d: usize, data: Vec<f64>, columns: Vec<String>) -> Self {
        Self {
            n: self.n,
            d,
            data,
            columns,
            keys: self.keys.clone(),
        }
    }

    /// Frame with one static row per matrix row; needs row keys.
    pub fn to_frame(&self, grid: crate::hexgrid::GridFingerprint) -> Result<HexFrame, AnalyticsError> {
        if self.keys.len() != self.n {
            return Err(AnalyticsError::Parameter("matrix has no row keys".into()));
        }
        let mut f = HexFrame::new(grid, self.columns.clone())?;
        for (i, k) in self.keys.iter().enumerate() {
            f.insert(k.hex, &k.period, self.row(i).iter().map(|v| Some(*v)).collect())?;
        }
        Ok(f)
    }

    fn require_rows(&self, needed: usize) -> Result<(), AnalyticsError> {
        if self.n < needed {
            return Err(AnalyticsError::TooFewRows {
                needed,
                found: self.n,
            });
        }
        Ok(())
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Pairwise distances, stored densely up to this many rows and recomputed
/// on demand beyond it.
const DENSE_LIMIT: usize = 4096;

pub(crate) enum Distances<'a> {
    Dense { n: usize, d: Vec<f64> },
    Lazy(&'a Matrix),
}

impl<'a> Distances<'a> {
    pub(crate) fn new(x: &'a Matrix) -> Self {
        let n = x.nrows();
        if n > DENSE_LIMIT {
            return Distances::Lazy(x);
        }
        let mut d = vec![0.0; n * n];
        d.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = euclidean(x.row(i), x.row(j));
            }
        });
        Distances::Dense { n, d }
    }

    pub(crate) fn len(&self) -> usize {
        match self {
            Distances::Dense { n, .. } => *n,
            Distances::Lazy(x) => x.nrows(),
        }
    }

    #[inline]
    pub(crate) fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Distances::Dense { n, d } => d[i * n + j],
            Distances::Lazy(x) => euclidean(x.row(i), x.row(j)),
        }
    }
}

/// Per-column center and population scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnScale {
    pub mean: f64,
    pub std: f64,
}

/// Centers each column and divides by its population standard deviation.
/// Columns with zero variance become all zeros.
pub fn standardize(x: &Matrix) -> Result<(Matrix, Vec<ColumnScale>), AnalyticsError> {
    x.require_rows(1)?;
    let n = x.nrows() as f64;
    let scales: Vec<ColumnScale> = (0..x.ncols())
        .map(|j| {
            let col = x.column(j);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            ColumnScale { mean, std: var.sqrt() }
        })
        .collect();
    let mut data = Vec::with_capacity(x.data.len());
    for i in 0..x.nrows() {
        for (j, s) in scales.iter().enumerate() {
            data.push(if s.std > 0.0 { (x.get(i, j) - s.mean) / s.std } else { 0.0 });
        }
    }
    Ok((x.with_data(x.ncols(), data, x.columns.clone()), scales))
}

/// Frame with a `cluster` column (−1 for noise) keyed like `x`.
pub fn labels_frame(
    x: &Matrix,
    labels: &[i64],
    grid: crate::hexgrid::GridFingerprint,
) -> Result<HexFrame, AnalyticsError> {
    if labels.len() != x.nrows() || x.keys.len() != x.nrows() {
        return Err(AnalyticsError::LabelCount {
            labels: labels.len(),
            rows: x.nrows(),
        });
    }
    let mut f = HexFrame::new(grid, vec!["cluster".into()])?;
    for (k, &l) in x.keys.iter().zip(labels) {
        f.insert(k.hex, &k.period, vec![Some(l as f64)])?;
    }
    Ok(f)
}
