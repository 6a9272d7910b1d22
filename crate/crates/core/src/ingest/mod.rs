//! Readers and writers for the on-disk formats: ESRI ASCII grids, a
//! GeoJSON polygon subset, delimited tables and the HexFrame CSV.

mod ascii;
mod geojson;
mod hexframe;
mod table;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geom::GeomError;
use crate::hexgrid::{GridError, GridFingerprint};

pub use ascii::{parse_ascii_grid, read_ascii_grid, write_ascii_grid, ascii_grid_string};
pub use geojson::{parse_geojson_polygons, read_geojson_polygons, Feature, FeatureSet, PropValue};
pub use hexframe::{is_valid_period, read_hexframe, read_hexframe_expecting, write_hexframe, HexFrame, RowKey};
pub use table::{parse_csv, read_csv, Cell, Column, ColumnKind, Schema, Table};

pub(crate) use table::{is_missing_token, parse_number, parse_records, quote_field};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("input is empty")]
    Empty,
    #[error("missing header key {0:?}")]
    MissingHeader(&'static str),
    #[error("line {line}: {message}")]
    Header { line: usize, message: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged { line: usize, expected: usize, found: usize },
    #[error("line {line}: column {column:?} value {value:?} is not a number")]
    NotNumeric { line: usize, column: String, value: String },
    #[error("line {line}: unterminated or malformed quoted field")]
    UnterminatedQuote { line: usize },
    #[error("duplicate column {0:?}")]
    DuplicateColumn(String),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("feature {index}: {message}")]
    Feature { index: usize, message: String },
    #[error("line {line}: duplicate key ({hex_id}, {period})")]
    DuplicateKey { line: usize, hex_id: String, period: String },
    #[error("grid fingerprint mismatch: expected [{expected}], found [{found}]")]
    GridMismatch { expected: GridFingerprint, found: GridFingerprint },
    #[error("line {line}: {source}")]
    Grid {
        line: usize,
        #[source]
        source: GridError,
    },
    #[error("line {line}: invalid period {period:?}")]
    Period { line: usize, period: String },
    #[error("cell {hex_id} has resolution {found}, frame resolution is {expected}")]
    Resolution { hex_id: String, expected: u8, found: u8 },
    #[error("row has {found} values, frame has {expected} variables")]
    Width { expected: usize, found: usize },
    #[error(transparent)]
    Geom(#[from] GeomError),
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), IngestError> {
    std::fs::write(path, text).map_err(|e| IngestError::io(path, e))
}
