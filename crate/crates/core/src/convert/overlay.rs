//! Reusable overlay maps: every (source, hex) fragment with its area and its
//! share of both the source and the hex.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::chunked::ChunkCell;
use super::{pixel_square, ConvertError, Semantics, Source};
use crate::geom::{intersection_area, BBox, Polygon, RasterGrid, SLIVER_AREA};
use crate::hexgrid::{cell_boundary, cell_center, cells_in_bbox, format_f64, GridFingerprint, GridSpec, HexId};
use crate::ingest::{parse_number, FeatureSet, HexFrame, IngestError};

/// Cells whose included source area covers less than this share are dropped.
pub const DEFAULT_MIN_COVERAGE: f64 = 1e-9;

/// Areal sources for an overlay, indexed row-major (raster) or in file
/// order (features).
#[derive(Debug, Clone, Copy)]
pub enum OverlaySources<'a> {
    Raster(&'a RasterGrid),
    Features(&'a FeatureSet),
}

impl<'a> TryFrom<&Source<'a>> for OverlaySources<'a> {
    type Error = ConvertError;

    fn try_from(source: &Source<'a>) -> Result<Self, Self::Error> {
        match source {
            Source::Raster(g) => Ok(OverlaySources::Raster(g)),
            Source::Features { set, .. } => Ok(OverlaySources::Features(set)),
            Source::Points(_) => Err(ConvertError::Unsupported(
                "overlay needs areal sources (raster or polygons), not points".into(),
            )),
        }
    }
}

impl OverlaySources<'_> {
    pub fn len(&self) -> usize {
        match self {
            OverlaySources::Raster(g) => g.len(),
            OverlaySources::Features(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn parts(&self, index: usize) -> Vec<Polygon> {
        match self {
            OverlaySources::Raster(g) => vec![pixel_square(g, index)],
            OverlaySources::Features(f) => f.features[index].parts.clone(),
        }
    }

    fn area(&self, index: usize) -> f64 {
        match self {
            OverlaySources::Raster(g) => g.cellsize * g.cellsize,
            OverlaySources::Features(f) => f.features[index].area(),
        }
    }

    fn bbox(&self, index: usize) -> BBox {
        match self {
            OverlaySources::Raster(g) => pixel_square(g, index).bbox(),
            OverlaySources::Features(f) => f.features[index].bbox(),
        }
    }

    /// Source indices (ascending) whose footprint touches `window`.
    fn indices_touching(&self, window: Option<&BBox>) -> Vec<usize> {
        match (self, window) {
            (_, None) => (0..self.len()).collect(),
            (OverlaySources::Raster(g), Some(w)) => match g.window(w) {
                Some((rows, cols)) => rows
                    .flat_map(|r| cols.clone().map(move |c| r * g.ncols + c))
                    .collect(),
                None => Vec::new(),
            },
            (OverlaySources::Features(f), Some(w)) => (0..f.len())
                .filter(|&i| f.features[i].bbox().intersects(w))
                .collect(),
        }
    }
}

/// SHA-256 over the source geometry (not the values), hex encoded.
pub fn source_checksum(sources: &OverlaySources<'_>) -> String {
    let mut h = Sha256::new();
    match sources {
        OverlaySources::Raster(g) => {
            h.update(b"raster");
            h.update((g.ncols as u64).to_le_bytes());
            h.update((g.nrows as u64).to_le_bytes());
            for v in [g.xll, g.yll, g.cellsize] {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        OverlaySources::Features(set) => {
            h.update(b"features");
            h.update((set.len() as u64).to_le_bytes());
            for f in &set.features {
                h.update((f.parts.len() as u64).to_le_bytes());
                for p in &f.parts {
                    for ring in std::iter::once(p.exterior()).chain(p.holes().iter().map(Vec::as_slice)) {
                        h.update((ring.len() as u64).to_le_bytes());
                        for pt in ring {
                            h.update(pt.x.to_bits().to_le_bytes());
                            h.update(pt.y.to_bits().to_le_bytes());
                        }
                    }
                }
            }
        }
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlayRecord {
    pub source_index: usize,
    pub hex: HexId,
    pub fragment_area: f64,
    pub frac_of_source: f64,
    pub frac_of_hex: f64,
}

/// Fragments between a set of source geometries and the cells at one
/// resolution, sorted by (source index, canonical hex id). Independent of
/// the values carried by the sources, so one map serves every variable
/// sharing the geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlayMap {
    pub grid: GridFingerprint,
    pub source_checksum: String,
    pub source_count: usize,
    pub records: Vec<OverlayRecord>,
}

pub(crate) fn overlay_records(
    sources: &OverlaySources<'_>,
    res: u8,
    g: &GridSpec,
    chunk: Option<&ChunkCell>,
) -> Result<Vec<OverlayRecord>, ConvertError> {
    g.check_res(res)?;
    let edge = g.edge(res);
    let cell_area = g.cell_area(res);
    let window = chunk.map(ChunkCell::expanded);
    let mut boundaries: BTreeMap<HexId, Option<Vec<crate::geom::Point>>> = BTreeMap::new();
    let mut records = Vec::new();
    for idx in sources.indices_touching(window.as_ref()) {
        let parts = sources.parts(idx);
        let src_area = sources.area(idx);
        for h in cells_in_bbox(&sources.bbox(idx).expand(edge), res, g)? {
            let boundary = match boundaries.get(&h) {
                Some(b) => b.clone(),
                None => {
                    let owned = match chunk {
                        Some(c) => c.owns(cell_center(&h, g)?),
                        None => true,
                    };
                    let b = if owned { Some(cell_boundary(&h, g)?) } else { None };
                    boundaries.insert(h, b.clone());
                    b
                }
            };
            let Some(boundary) = boundary else { continue };
            let fragment: f64 = parts.iter().map(|p| intersection_area(p, &boundary)).sum();
            if fragment < SLIVER_AREA {
                continue;
            }
            records.push(OverlayRecord {
                source_index: idx,
                hex: h,
                fragment_area: fragment,
                frac_of_source: (fragment / src_area).min(1.0),
                frac_of_hex: (fragment / cell_area).min(1.0),
            });
        }
    }
    sort_records(&mut records);
    Ok(records)
}

fn sort_records(records: &mut [OverlayRecord]) {
    records.sort_by(|a, b| a.source_index.cmp(&b.source_index).then_with(|| a.hex.canonical_cmp(&b.hex)));
}

/// Intersects every source with the cells it touches at `res`.
pub fn build_overlay_map(sources: &OverlaySources<'_>, res: u8, g: &GridSpec) -> Result<OverlayMap, ConvertError> {
    Ok(OverlayMap {
        grid: g.fingerprint(res),
        source_checksum: source_checksum(sources),
        source_count: sources.len(),
        records: overlay_records(sources, res, g, None)?,
    })
}

/// Per-source values: numbers for intensive/extensive, labels for
/// categorical. `None` marks missing.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceValues {
    Numeric(Vec<Option<f64>>),
    Labels(Vec<Option<String>>),
}

impl SourceValues {
    fn len(&self) -> usize {
        match self {
            SourceValues::Numeric(v) => v.len(),
            SourceValues::Labels(v) => v.len(),
        }
    }
}

pub(crate) fn apply_records(
    grid: GridFingerprint,
    records: &[OverlayRecord],
    values: &SourceValues,
    sem: Semantics,
    var: &str,
    min_coverage: f64,
) -> Result<HexFrame, ConvertError> {
    let coverage_name = format!("coverage_{var}");
    let mut frame = HexFrame::new(grid, vec![var.to_string(), coverage_name])?;
    match (sem, values) {
        (Semantics::Intensive | Semantics::Extensive, SourceValues::Numeric(vals)) => {
            // (Σ area·v, Σ area, Σ v·frac_of_source, Σ frac_of_hex)
            let mut acc: BTreeMap<HexId, (f64, f64, f64, f64)> = BTreeMap::new();
            for r in records {
                let Some(v) = vals[r.source_index] else { continue };
                let e = acc.entry(r.hex).or_insert((0.0, 0.0, 0.0, 0.0));
                e.0 += r.fragment_area * v;
                e.1 += r.fragment_area;
                e.2 += v * r.frac_of_source;
                e.3 += r.frac_of_hex;
            }
            for (h, (weighted, area, allocated, coverage)) in acc {
                if coverage < min_coverage {
                    continue;
                }
                let v = if sem == Semantics::Intensive { weighted / area } else { allocated };
                frame.insert(h, "-", vec![Some(v), Some(coverage)])?;
            }
        }
        (Semantics::Categorical, SourceValues::Labels(labels)) => {
            let mut acc: BTreeMap<HexId, (BTreeMap<&str, f64>, f64)> = BTreeMap::new();
            for r in records {
                let Some(label) = labels[r.source_index].as_deref() else { continue };
                let e = acc.entry(r.hex).or_default();
                *e.0.entry(label).or_insert(0.0) += r.fragment_area;
                e.1 += r.frac_of_hex;
            }
            for (h, (areas, coverage)) in acc {
                if coverage < min_coverage {
                    continue;
                }
                // BTreeMap iterates labels ascending, so strict > keeps the
                // lexicographically smallest label on ties.
                let mut best: Option<(&str, f64)> = None;
                for (label, area) in areas {
                    if best.is_none_or(|(_, a)| area > a) {
                        best = Some((label, area));
                    }
                }
                let (label, _) = best.expect("at least one fragment");
                let code = label.trim().parse::<f64>().map_err(|_| {
                    ConvertError::TypeMismatch(format!(
                        "categorical label {label:?} is not a numeric class code"
                    ))
                })?;
                frame.insert(h, "-", vec![Some(code), Some(coverage)])?;
            }
        }
        (sem, _) => {
            return Err(ConvertError::TypeMismatch(format!(
                "{sem} semantics need {} values",
                if sem == Semantics::Categorical { "label" } else { "numeric" }
            )))
        }
    }
    Ok(frame)
}

/// Converts per-source values to the map's cells. Output columns are `var`
/// and `coverage_<var>` (share of the cell covered by non-missing sources).
pub fn apply_overlay(map: &OverlayMap, values: &SourceValues, sem: Semantics, var: &str) -> Result<HexFrame, ConvertError> {
    apply_overlay_with(map, values, sem, var, DEFAULT_MIN_COVERAGE)
}

/// As [`apply_overlay`] with an explicit minimum coverage.
pub fn apply_overlay_with(
    map: &OverlayMap,
    values: &SourceValues,
    sem: Semantics,
    var: &str,
    min_coverage: f64,
) -> Result<HexFrame, ConvertError> {
    if values.len() != map.source_count {
        return Err(ConvertError::ValueCount {
            expected: map.source_count,
            found: values.len(),
        });
    }
    apply_records(map.grid, &map.records, values, sem, var, min_coverage.max(DEFAULT_MIN_COVERAGE))
}

impl OverlayMap {
    pub fn check_sources(&self, sources: &OverlaySources<'_>) -> Result<(), ConvertError> {
        let found = source_checksum(sources);
        if found != self.source_checksum {
            return Err(ConvertError::ChecksumMismatch {
                expected: self.source_checksum.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.grid.header_line());
        out.push('\n');
        let _ = writeln!(out, "#source checksum={} count={}", self.source_checksum, self.source_count);
        out.push_str("source_index,hex_id,fragment_area,frac_of_source,frac_of_hex\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.source_index,
                r.hex,
                format_f64(r.fragment_area),
                format_f64(r.frac_of_source),
                format_f64(r.frac_of_hex)
            );
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<OverlayMap, ConvertError> {
        let bad = |line: usize, message: &str| ConvertError::MapFormat {
            line,
            message: message.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (_, grid_line) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
        let grid = GridFingerprint::parse_header(grid_line)
            .map_err(|source| ConvertError::Ingest(IngestError::Grid { line: 1, source }))?;
        let (_, src_line) = lines.next().ok_or_else(|| bad(2, "missing #source line"))?;
        let mut checksum = None;
        let mut count = None;
        for tok in src_line
            .strip_prefix("#source")
            .ok_or_else(|| bad(2, "missing #source line"))?
            .split_whitespace()
        {
            match tok.split_once('=') {
                Some(("checksum", v)) => checksum = Some(v.to_string()),
                Some(("count", v)) => count = Some(v.parse::<usize>().map_err(|_| bad(2, "bad count"))?),
                _ => return Err(bad(2, "unknown #source field")),
            }
        }
        let (_, header) = lines.next().ok_or_else(|| bad(3, "missing header"))?;
        if header != "source_index,hex_id,fragment_area,frac_of_source,frac_of_hex" {
            return Err(bad(3, "unexpected column header"));
        }
        let source_count = count.ok_or_else(|| bad(2, "missing count"))?;
        let mut records = Vec::new();
        for (i, line) in lines {
            let n = i + 1;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad(n, "expected 5 fields"));
            }
            let num = |s: &str| parse_number(s).ok_or_else(|| bad(n, "non-numeric field"));
            let source_index: usize = f[0].parse().map_err(|_| bad(n, "bad source_index"))?;
            if source_index >= source_count {
                return Err(bad(n, "source_index out of range"));
            }
            let hex: HexId = f[1].parse().map_err(|_| bad(n, "bad hex_id"))?;
            if hex.res != grid.res {
                return Err(bad(n, "hex resolution differs from grid header"));
            }
            records.push(OverlayRecord {
                source_index,
                hex,
                fragment_area: num(f[2])?,
                frac_of_source: num(f[3])?,
                frac_of_hex: num(f[4])?,
            });
        }
        let sorted = records.windows(2).all(|w| {
            (w[0].source_index, 0).cmp(&(w[1].source_index, 0)).then_with(|| w[0].hex.canonical_cmp(&w[1].hex))
                == std::cmp::Ordering::Less
        });
        if !sorted {
            return Err(bad(0, "records not in canonical (source_index, hex_id) order"));
        }
        Ok(OverlayMap {
            grid,
            source_checksum: checksum.ok_or_else(|| bad(2, "missing checksum"))?,
            source_count,
            records,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ConvertError> {
        crate::ingest::write_text(path.as_ref(), &self.to_csv_string())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<OverlayMap, ConvertError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        Self::parse_csv(&text)
    }
}
