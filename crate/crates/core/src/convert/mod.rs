//! Source-to-hex conversion.
//!
//! Three strategies are available:
//! * centroid aggregation: each source point (or pixel/feature centroid) is
//!   binned into the cell nearest to it;
//! * polyfill assignment: a polygon's value goes to every cell whose center
//!   it contains;
//! * area-weighted overlay: sources are intersected with cell boundaries and
//!   the fragments drive intensive, extensive or categorical aggregation.
//!
//! All strategies can run chunk by chunk ([`chunked_convert`]); the result
//! is bit-identical to the one-shot computation.

mod centroid;
mod chunked;
mod overlay;
mod polyfill;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geom::{BBox, Point, Polygon, RasterGrid};
use crate::hexgrid::{GridError, GridFingerprint, GridSpec};
use crate::ingest::{Cell, FeatureSet, HexFrame, IngestError, PropValue, Table};

pub use centroid::centroid_aggregate;
pub use chunked::{chunked_convert, required_halo, ChunkSpec};
pub use overlay::{
    apply_overlay, apply_overlay_with, build_overlay_map, source_checksum, OverlayMap, OverlayRecord,
    OverlaySources, SourceValues, DEFAULT_MIN_COVERAGE,
};
pub use polyfill::polyfill_assign;

#[derive(Debug, Error)]
pub enum ConvertError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("source has no usable values")]
    EmptySource,
    #[error("unknown aggregation {0:?} (expected mean, sum, count, min or max)")]
    UnknownAggregation(String),
    #[error("unknown semantics {0:?} (expected intensive, extensive or categorical)")]
    UnknownSemantics(String),
    #[error("feature {feature} has no field {field:?}")]
    MissingField { feature: usize, field: String },
    #[error("feature {feature}: field {field:?} value {value:?} is not numeric")]
    NonNumericField { feature: usize, field: String, value: String },
    #[error("grid mismatch: map built for [{expected}], requested [{found}]")]
    GridMismatch { expected: GridFingerprint, found: GridFingerprint },
    #[error("source geometry checksum {found} does not match overlay map checksum {expected}")]
    ChecksumMismatch { expected: String, found: String },
    #[error("expected {expected} source values, got {found}")]
    ValueCount { expected: usize, found: usize },
    #[error("{0}")]
    TypeMismatch(String),
    #[error("halo {halo} km is below the required minimum {required} km")]
    HaloTooSmall { halo: f64, required: f64 },
    #[error("invalid chunk spec: {0}")]
    InvalidChunk(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("malformed overlay map line {line}: {message}")]
    MapFormat { line: usize, message: String },
}

/// Per-hex reduction for centroid aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Mean,
    Sum,
    Count,
    Min,
    Max,
}

impl FromStr for Aggregation {
    type Err = ConvertError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Self::Mean),
            "sum" => Ok(Self::Sum),
            "count" => Ok(Self::Count),
            "min" => Ok(Self::Min),
            "max" => Ok(Self::Max),
            other => Err(ConvertError::UnknownAggregation(other.to_string())),
        }
    }
}

/// How a variable behaves under change of support.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Semantics {
    /// Per-area quantity; area-weighted mean.
    Intensive,
    /// Total quantity; allocated by the share of the source inside each hex.
    Extensive,
    /// Class label; the label covering the most area wins.
    Categorical,
}

impl FromStr for Semantics {
    type Err = ConvertError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "intensive" => Ok(Self::Intensive),
            "extensive" => Ok(Self::Extensive),
            "categorical" => Ok(Self::Categorical),
            other => Err(ConvertError::UnknownSemantics(other.to_string())),
        }
    }
}

impl fmt::Display for Semantics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Intensive => "intensive",
            Self::Extensive => "extensive",
            Self::Categorical => "categorical",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Centroid(Aggregation),
    Polyfill,
    Overlay(Semantics),
}

/// A located sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourcePoint {
    pub location: Point,
    pub value: Option<f64>,
}

/// Borrowed input for a conversion.
#[derive(Debug, Clone, Copy)]
pub enum Source<'a> {
    Raster(&'a RasterGrid),
    /// Features with the property holding the value to convert.
    Features { set: &'a FeatureSet, field: &'a str },
    Points(&'a [SourcePoint]),
}

impl Source<'_> {
    pub(crate) fn bbox(&self) -> Option<BBox> {
        match self {
            Source::Raster(g) => Some(g.bbox()),
            Source::Features { set, .. } => set.bbox(),
            Source::Points(pts) => {
                let locs: Vec<Point> = pts.iter().map(|p| p.location).collect();
                BBox::of_points(&locs)
            }
        }
    }
}

/// Builds point samples from three columns of a table.
pub fn points_from_table(table: &Table, x: &str, y: &str, value: &str) -> Result<Vec<SourcePoint>, ConvertError> {
    let col = |name: &str| {
        table
            .column_index(name)
            .ok_or_else(|| ConvertError::Ingest(IngestError::MissingColumn(name.to_string())))
    };
    let (xi, yi, vi) = (col(x)?, col(y)?, col(value)?);
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let coord = |c: &Cell, name: &str| {
                c.as_f64().ok_or_else(|| {
                    ConvertError::TypeMismatch(format!("row {}: coordinate column {name:?} is not numeric", i + 1))
                })
            };
            let value = match &row[vi] {
                Cell::Number(v) => Some(*v),
                Cell::Missing => None,
                Cell::Text(t) => {
                    return Err(ConvertError::TypeMismatch(format!(
                        "row {}: value {t:?} is not numeric",
                        i + 1
                    )))
                }
            };
            Ok(SourcePoint {
                location: Point::new(coord(&row[xi], x)?, coord(&row[yi], y)?),
                value,
            })
        })
        .collect()
}

/// Numeric value of `field` on feature `index`; `None` when null.
pub(crate) fn feature_number(set: &FeatureSet, index: usize, field: &str) -> Result<Option<f64>, ConvertError> {
    match set.features[index].properties.get(field) {
        None => Err(ConvertError::MissingField {
            feature: index,
            field: field.to_string(),
        }),
        Some(PropValue::Missing) => Ok(None),
        Some(PropValue::Number(v)) => Ok(Some(*v)),
        Some(PropValue::Text(t)) => match t.trim().parse::<f64>() {
            Ok(v) => Ok(Some(v)),
            Err(_) => Err(ConvertError::NonNumericField {
                feature: index,
                field: field.to_string(),
                value: t.clone(),
            }),
        },
    }
}

pub(crate) fn feature_label(set: &FeatureSet, index: usize, field: &str) -> Result<Option<String>, ConvertError> {
    match set.features[index].properties.get(field) {
        None => Err(ConvertError::MissingField {
            feature: index,
            field: field.to_string(),
        }),
        Some(v) => Ok(v.label()),
    }
}

/// Source values for `apply_overlay`, taken from a raster or a feature field.
pub fn source_values(source: &Source<'_>, semantics: Semantics) -> Result<SourceValues, ConvertError> {
    match (source, semantics) {
        (Source::Raster(g), Semantics::Categorical) => Ok(SourceValues::Labels(
            (0..g.len()).map(|i| g.value_at_index(i).map(|v| v.to_string())).collect(),
        )),
        (Source::Raster(g), _) => Ok(SourceValues::Numeric((0..g.len()).map(|i| g.value_at_index(i)).collect())),
        (Source::Features { set, field }, Semantics::Categorical) => Ok(SourceValues::Labels(
            (0..set.len()).map(|i| feature_label(set, i, field)).collect::<Result<_, _>>()?,
        )),
        (Source::Features { set, field }, _) => Ok(SourceValues::Numeric(
            (0..set.len()).map(|i| feature_number(set, i, field)).collect::<Result<_, _>>()?,
        )),
        (Source::Points(_), _) => Err(ConvertError::Unsupported(
            "overlay needs areal sources (raster or polygons), not points".into(),
        )),
    }
}

/// One-shot conversion with the given strategy.
pub fn convert(source: &Source<'_>, res: u8, g: &GridSpec, strategy: Strategy, var: &str) -> Result<HexFrame, ConvertError> {
    match strategy {
        Strategy::Centroid(agg) => centroid_aggregate(source, res, g, agg, var),
        Strategy::Polyfill => polyfill_assign(source, res, g, var),
        Strategy::Overlay(sem) => {
            let sources = OverlaySources::try_from(source)?;
            let map = build_overlay_map(&sources, res, g)?;
            apply_overlay(&map, &source_values(source, sem)?, sem, var)
        }
    }
}

/// A polygon source in index order: raster pixels row-major or features in
/// file order.
pub(crate) fn pixel_square(grid: &RasterGrid, index: usize) -> Polygon {
    let (row, col) = (index / grid.ncols, index % grid.ncols);
    crate::geom::pixel_polygon(grid, row, col).expect("index within grid")
}
