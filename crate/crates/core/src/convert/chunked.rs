//! Chunked execution.
//!
//! Output cells are partitioned into square chunks by the position of their
//! centers (half-open intervals anchored at the grid origin). Each chunk is
//! computed from the sources touching its square expanded by a halo, and the
//! per-chunk frames are concatenated in canonical order. Per-cell
//! contributions are accumulated in source order in both paths, so the
//! chunked result equals the one-shot result bit for bit.

use rayon::prelude::*;

use super::centroid::centroid_region;
use super::overlay::{apply_records, overlay_records, OverlaySources, DEFAULT_MIN_COVERAGE};
use super::polyfill::polyfill_region;
use super::{source_values, ConvertError, Source, Strategy};
use crate::geom::{BBox, Point};
use crate::hexgrid::GridSpec;
use crate::ingest::HexFrame;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkSpec {
    /// Chunk side, km.
    pub chunk_width: f64,
    /// Extra margin around each chunk when selecting sources, km. `None`
    /// uses the required minimum for the source and resolution.
    pub halo: Option<f64>,
}

impl ChunkSpec {
    pub fn new(chunk_width: f64) -> Self {
        Self {
            chunk_width,
            halo: None,
        }
    }

    pub fn with_halo(mut self, halo: f64) -> Self {
        self.halo = Some(halo);
        self
    }
}

/// Smallest halo that keeps every contributing source visible to its
/// chunk: the cell circumradius plus the largest source cell diameter.
/// Point and feature sources are selected by location or bounding box, so
/// their diameter term is zero.
pub fn required_halo(source: &Source<'_>, res: u8, g: &GridSpec) -> f64 {
    let diameter = match source {
        Source::Raster(grid) => grid.pixel_diameter(),
        Source::Features { .. } | Source::Points(_) => 0.0,
    };
    g.edge(res) + diameter
}

/// One square of the chunk lattice.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ChunkCell {
    i: i64,
    j: i64,
    width: f64,
    origin: Point,
    halo: f64,
}

impl ChunkCell {
    fn index_of(p: Point, origin: Point, width: f64) -> (i64, i64) {
        (
            ((p.x - origin.x) / width).floor() as i64,
            ((p.y - origin.y) / width).floor() as i64,
        )
    }

    /// Whether a cell centered at `center` belongs to this chunk.
    pub(crate) fn owns(&self, center: Point) -> bool {
        Self::index_of(center, self.origin, self.width) == (self.i, self.j)
    }

    /// Closed square covering the chunk.
    pub(crate) fn rect(&self) -> BBox {
        BBox::new(
            self.origin.x + self.i as f64 * self.width,
            self.origin.y + self.j as f64 * self.width,
            self.origin.x + (self.i + 1) as f64 * self.width,
            self.origin.y + (self.j + 1) as f64 * self.width,
        )
    }

    pub(crate) fn expanded(&self) -> BBox {
        self.rect().expand(self.halo)
    }
}

fn convert_chunk(
    source: &Source<'_>,
    res: u8,
    g: &GridSpec,
    strategy: Strategy,
    var: &str,
    chunk: &ChunkCell,
) -> Result<HexFrame, ConvertError> {
    match strategy {
        Strategy::Centroid(agg) => Ok(centroid_region(source, res, g, agg, var, Some(chunk))?.0),
        Strategy::Polyfill => polyfill_region(source, res, g, var, Some(chunk)),
        Strategy::Overlay(sem) => {
            let sources = OverlaySources::try_from(source)?;
            let records = overlay_records(&sources, res, g, Some(chunk))?;
            let values = source_values(source, sem)?;
            apply_records(g.fingerprint(res), &records, &values, sem, var, DEFAULT_MIN_COVERAGE)
        }
    }
}

/// Runs `strategy` chunk by chunk; chunks run in parallel and are merged in
/// canonical row order.
pub fn chunked_convert(
    source: &Source<'_>,
    res: u8,
    g: &GridSpec,
    strategy: Strategy,
    spec: &ChunkSpec,
    var: &str,
) -> Result<HexFrame, ConvertError> {
    g.check_res(res)?;
    if !(spec.chunk_width > 0.0) || !spec.chunk_width.is_finite() {
        return Err(ConvertError::InvalidChunk(format!(
            "chunk width must be positive, got {}",
            spec.chunk_width
        )));
    }
    let required = required_halo(source, res, g);
    let halo = spec.halo.unwrap_or(required);
    if !(halo >= required) {
        return Err(ConvertError::HaloTooSmall { halo, required });
    }
    // validate values up front so chunk-level errors cannot mask them
    if let Strategy::Overlay(sem) = strategy {
        source_values(source, sem)?;
    }
    let Some(extent) = source.bbox() else {
        return Err(ConvertError::EmptySource);
    };
    let extent = extent.expand(g.edge(res));
    let (i0, j0) = ChunkCell::index_of(Point::new(extent.min_x, extent.min_y), g.origin, spec.chunk_width);
    let (i1, j1) = ChunkCell::index_of(Point::new(extent.max_x, extent.max_y), g.origin, spec.chunk_width);
    let chunks: Vec<ChunkCell> = (j0..=j1)
        .flat_map(|j| {
            (i0..=i1).map(move |i| ChunkCell {
                i,
                j,
                width: spec.chunk_width,
                origin: g.origin,
                halo,
            })
        })
        .collect();

    let parts: Vec<HexFrame> = chunks
        .par_iter()
        .map(|c| convert_chunk(source, res, g, strategy, var, c))
        .collect::<Result<_, _>>()?;

    let mut iter = parts.into_iter();
    let mut merged = iter.next().ok_or(ConvertError::EmptySource)?;
    for part in iter {
        for (k, v) in part.rows() {
            merged.insert(k.hex, &k.period, v.to_vec())?;
        }
    }
    if let Strategy::Centroid(_) = strategy {
        if merged.is_empty() {
            return Err(ConvertError::EmptySource);
        }
    }
    Ok(merged)
}
