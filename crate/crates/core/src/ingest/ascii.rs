//! ESRI ASCII grid codec.

use std::fmt::Write as _;
use std::path::Path;

use super::IngestError;
use crate::geom::RasterGrid;

const HEADER_KEYS: [&str; 6] = ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"];

/// Parses an ASCII grid. Header keys are case-insensitive and may come in
/// any order; `NODATA_value` defaults to -9999 when absent.
pub fn parse_ascii_grid(text: &str) -> Result<RasterGrid, IngestError> {
    let mut header: [Option<f64>; 6] = [None; 6];
    let mut lines = text.lines().enumerate().peekable();
    while let Some((idx, line)) = lines.peek().copied() {
        let mut toks = line.split_whitespace();
        let Some(key) = toks.next() else {
            lines.next();
            continue;
        };
        let lower = key.to_ascii_lowercase();
        let Some(slot) = HEADER_KEYS.iter().position(|k| *k == lower) else {
            break;
        };
        let value = toks
            .next()
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| IngestError::Header {
                line: idx + 1,
                message: format!("header {key} needs one numeric value"),
            })?;
        if toks.next().is_some() {
            return Err(IngestError::Header {
                line: idx + 1,
                message: format!("header {key} has trailing tokens"),
            });
        }
        if header[slot].replace(value).is_some() {
            return Err(IngestError::Header {
                line: idx + 1,
                message: format!("header {key} repeated"),
            });
        }
        lines.next();
    }
    let get = |i: usize| header[i].ok_or(IngestError::MissingHeader(HEADER_KEYS[i]));
    let as_count = |i: usize, v: f64| {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(IngestError::Header {
                line: 0,
                message: format!("{} must be a positive integer, got {v}", HEADER_KEYS[i]),
            })
        }
    };
    let ncols = as_count(0, get(0)?)?;
    let nrows = as_count(1, get(1)?)?;
    let xll = get(2)?;
    let yll = get(3)?;
    let cellsize = get(4)?;
    let nodata = header[5].unwrap_or(-9999.0);

    let mut values = Vec::with_capacity(ncols * nrows);
    let mut rows_read = 0;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if rows_read == nrows {
            return Err(IngestError::Header {
                line: idx + 1,
                message: format!("more than {nrows} data rows"),
            });
        }
        let start = values.len();
        for tok in line.split_whitespace() {
            let v = tok.parse::<f64>().map_err(|_| IngestError::NotNumeric {
                line: idx + 1,
                column: format!("col {}", values.len() - start),
                value: tok.to_string(),
            })?;
            values.push(v);
        }
        if values.len() - start != ncols {
            return Err(IngestError::Ragged {
                line: idx + 1,
                expected: ncols,
                found: values.len() - start,
            });
        }
        rows_read += 1;
    }
    if rows_read != nrows {
        return Err(IngestError::Header {
            line: 0,
            message: format!("expected {nrows} data rows, found {rows_read}"),
        });
    }
    Ok(RasterGrid::new(ncols, nrows, xll, yll, cellsize, nodata, values)?)
}

pub fn read_ascii_grid(path: impl AsRef<Path>) -> Result<RasterGrid, IngestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    parse_ascii_grid(&text)
}

pub fn ascii_grid_string(grid: &RasterGrid) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "ncols {}", grid.ncols);
    let _ = writeln!(out, "nrows {}", grid.nrows);
    let _ = writeln!(out, "xllcorner {}", grid.xll);
    let _ = writeln!(out, "yllcorner {}", grid.yll);
    let _ = writeln!(out, "cellsize {}", grid.cellsize);
    let _ = writeln!(out, "NODATA_value {}", grid.nodata);
    for row in grid.values.chunks(grid.ncols) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_ascii_grid(path: impl AsRef<Path>, grid: &RasterGrid) -> Result<(), IngestError> {
    super::write_text(path.as_ref(), &ascii_grid_string(grid))
}
