use std::collections::BTreeMap;

use super::chunked::ChunkCell;
use super::{feature_number, Aggregation, ConvertError, Source};
use crate::geom::Point;
use crate::hexgrid::{cell_center, point_to_cell, GridSpec, HexId};
use crate::ingest::HexFrame;

#[derive(Default)]
struct Acc {
    sum: f64,
    count: usize,
    min: f64,
    max: f64,
}

impl Acc {
    fn push(&mut self, v: f64) {
        if self.count == 0 {
            self.min = v;
            self.max = v;
        } else {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
        self.sum += v;
        self.count += 1;
    }

    fn finish(&self, agg: Aggregation) -> f64 {
        match agg {
            Aggregation::Mean => self.sum / self.count as f64,
            Aggregation::Sum => self.sum,
            Aggregation::Count => self.count as f64,
            Aggregation::Min => self.min,
            Aggregation::Max => self.max,
        }
    }
}

/// Valued points of `source` in source order, restricted to `chunk`'s
/// expanded window when given. Missing values are skipped.
fn valued_points(source: &Source<'_>, chunk: Option<&ChunkCell>) -> Result<Vec<(Point, f64)>, ConvertError> {
    let window = chunk.map(ChunkCell::expanded);
    let mut out = Vec::new();
    match source {
        Source::Raster(grid) => {
            let (rows, cols) = match &window {
                Some(w) => match grid.window(w) {
                    Some(rc) => rc,
                    None => return Ok(out),
                },
                None => (0..grid.nrows, 0..grid.ncols),
            };
            for row in rows {
                for col in cols.clone() {
                    if let Some(v) = grid.value(row, col) {
                        out.push((grid.pixel_center(row, col), v));
                    }
                }
            }
        }
        Source::Features { set, field } => {
            for (i, f) in set.features.iter().enumerate() {
                let Some(v) = feature_number(set, i, field)? else {
                    continue;
                };
                let c = f.centroid();
                if window.as_ref().is_none_or(|w| w.contains(c)) {
                    out.push((c, v));
                }
            }
        }
        Source::Points(pts) => {
            for p in pts.iter() {
                if let Some(v) = p.value {
                    if window.as_ref().is_none_or(|w| w.contains(p.location)) {
                        out.push((p.location, v));
                    }
                }
            }
        }
    }
    Ok(out)
}

pub(crate) fn centroid_region(
    source: &Source<'_>,
    res: u8,
    g: &GridSpec,
    agg: Aggregation,
    var: &str,
    chunk: Option<&ChunkCell>,
) -> Result<(HexFrame, usize), ConvertError> {
    g.check_res(res)?;
    let points = valued_points(source, chunk)?;
    let mut acc: BTreeMap<HexId, Acc> = BTreeMap::new();
    for (p, v) in &points {
        let h = point_to_cell(*p, res, g)?;
        if let Some(c) = chunk {
            if !c.owns(cell_center(&h, g)?) {
                continue;
            }
        }
        acc.entry(h).or_default().push(*v);
    }
    let mut frame = HexFrame::new(g.fingerprint(res), vec![var.to_string()])?;
    for (h, a) in acc {
        frame.insert(h, "-", vec![Some(a.finish(agg))])?;
    }
    Ok((frame, points.len()))
}

/// Bins every valued point of `source` into its nearest cell and reduces
/// per cell. Raster pixels contribute their centers, features their
/// area-weighted centroids. Cells without points are absent.
pub fn centroid_aggregate(
    source: &Source<'_>,
    res: u8,
    g: &GridSpec,
    agg: Aggregation,
    var: &str,
) -> Result<HexFrame, ConvertError> {
    let (frame, n) = centroid_region(source, res, g, agg, var, None)?;
    if n == 0 {
        return Err(ConvertError::EmptySource);
    }
    Ok(frame)
}
