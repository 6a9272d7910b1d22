//! Hex to zone crosswalks and zone-level aggregation, so exposure frames can
//! be joined to records geocoded at point, hex or zone granularity. Lookups
//! return identifiers only, never coordinates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::convert::{build_overlay_map, ConvertError, OverlaySources};
use crate::geom::Point;
use crate::hexgrid::{format_f64, point_to_cell, GridError, GridFingerprint, GridSpec, HexId};
use crate::ingest::{is_missing_token, parse_number, parse_records, quote_field, FeatureSet, HexFrame, IngestError};

#[derive(Debug, Error)]
pub enum LinkageError {
    #[error(transparent)]
    Convert(#[from] ConvertError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("zone {0:?} appears more than once")]
    DuplicateZone(String),
    #[error("zone feature {0} has no id")]
    MissingZoneId(usize),
    #[error("frame and crosswalk share no hexes")]
    NoOverlap,
    #[error("unknown zone {0:?}")]
    UnknownZone(String),
    #[error("invalid period range: {0}")]
    Range(String),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrosswalkMode {
    /// One record per intersecting zone, weighted by its share of the hex.
    Fractional,
    /// One record per hex for the zone covering most of it, weight 1.
    Dominant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrosswalkRecord {
    pub hex: HexId,
    pub zone_id: String,
    pub frac_of_hex: f64,
}

/// Records sorted by (canonical hex id, zone id).
#[derive(Debug, Clone, PartialEq)]
pub struct Crosswalk {
    pub grid: GridFingerprint,
    pub records: Vec<CrosswalkRecord>,
}

/// Overlays zone polygons with the cells at `res`. Zone ids come from the
/// `id_field` property.
pub fn build_crosswalk(
    zones: &FeatureSet,
    id_field: &str,
    res: u8,
    g: &GridSpec,
    mode: CrosswalkMode,
) -> Result<Crosswalk, LinkageError> {
    let mut ids = Vec::with_capacity(zones.len());
    let mut seen = BTreeSet::new();
    for (i, f) in zones.features.iter().enumerate() {
        let id = f
            .properties
            .get(id_field)
            .and_then(|v| v.label())
            .ok_or(LinkageError::MissingZoneId(i))?;
        if !seen.insert(id.clone()) {
            return Err(LinkageError::DuplicateZone(id));
        }
        ids.push(id);
    }
    let map = build_overlay_map(&OverlaySources::Features(zones), res, g)?;
    let mut per_hex: BTreeMap<HexId, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in &map.records {
        *per_hex.entry(r.hex).or_default().entry(ids[r.source_index].as_str()).or_default() += r.frac_of_hex;
    }
    let mut records = Vec::new();
    for (hex, zones) in per_hex {
        match mode {
            CrosswalkMode::Fractional => records.extend(zones.into_iter().map(|(z, f)| CrosswalkRecord {
                hex,
                zone_id: z.to_string(),
                frac_of_hex: f.min(1.0),
            })),
            CrosswalkMode::Dominant => {
                let mut best: Option<(&str, f64)> = None;
                for (z, f) in zones {
                    if best.is_none_or(|(_, b)| f > b) {
                        best = Some((z, f));
                    }
                }
                let (z, _) = best.expect("hex has a zone");
                records.push(CrosswalkRecord {
                    hex,
                    zone_id: z.to_string(),
                    frac_of_hex: 1.0,
                });
            }
        }
    }
    records.sort_by(|a, b| a.hex.canonical_cmp(&b.hex).then_with(|| a.zone_id.cmp(&b.zone_id)));
    Ok(Crosswalk { grid: map.grid, records })
}

impl Crosswalk {
    pub fn to_csv_string(&self) -> String {
        let mut out = self.grid.header_line();
        out.push_str("\nhex_id,zone_id,frac_of_hex\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{}", r.hex, quote_field(&r.zone_id), format_f64(r.frac_of_hex));
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self, LinkageError> {
        let (first, rest) = text.split_once('\n').ok_or(IngestError::MissingHeader("#grid"))?;
        let grid = GridFingerprint::parse_header(first.trim_end())
            .map_err(|source| IngestError::Grid { line: 1, source })?;
        let mut recs = parse_records(rest, 2)?.into_iter();
        let header = recs.next().ok_or(IngestError::Empty)?;
        let names: Vec<&str> = header.fields.iter().map(|f| f.text.as_str()).collect();
        if names != ["hex_id", "zone_id", "frac_of_hex"] {
            return Err(LinkageError::Format {
                line: header.line,
                message: "expected header hex_id,zone_id,frac_of_hex".into(),
            });
        }
        let mut records = Vec::new();
        for rec in recs {
            let bad = |message: &str| LinkageError::Format {
                line: rec.line,
                message: message.into(),
            };
            if rec.fields.len() != 3 {
                return Err(bad("expected 3 fields"));
            }
            let hex: HexId = rec.fields[0].text.parse().map_err(|_| bad("bad hex_id"))?;
            if hex.res != grid.res {
                return Err(bad("hex resolution differs from grid header"));
            }
            if is_missing_token(&rec.fields[1]) {
                return Err(bad("missing zone_id"));
            }
            let frac = parse_number(&rec.fields[2].text).ok_or_else(|| bad("non-numeric frac_of_hex"))?;
            if !(frac > 0.0 && frac <= 1.0 + 1e-9) {
                return Err(bad("frac_of_hex outside (0, 1]"));
            }
            records.push(CrosswalkRecord {
                hex,
                zone_id: rec.fields[1].text.clone(),
                frac_of_hex: frac,
            });
        }
        let sorted = records
            .windows(2)
            .all(|w| w[0].hex.canonical_cmp(&w[1].hex).then_with(|| w[0].zone_id.cmp(&w[1].zone_id)).is_lt());
        if !sorted {
            return Err(LinkageError::Format {
                line: 0,
                message: "records not sorted by (hex_id, zone_id)".into(),
            });
        }
        Ok(Self { grid, records })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), LinkageError> {
        crate::ingest::write_text(path.as_ref(), &self.to_csv_string())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, LinkageError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        Self::parse_csv(&text)
    }

    /// Σ frac_of_hex per hex.
    pub fn coverage(&self) -> BTreeMap<HexId, f64> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            *out.entry(r.hex).or_insert(0.0) += r.frac_of_hex;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZoneStats {
    pub mean: bool,
    pub std: bool,
}

impl Default for ZoneStats {
    fn default() -> Self {
        Self { mean: true, std: true }
    }
}

/// Zone-level values keyed by (zone id, period); columns `mean_<var>` and
/// `std_<var>`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneTable {
    pub columns: Vec<String>,
    pub rows: BTreeMap<(String, String), Vec<Option<f64>>>,
}

/// Weighted mean Σw·v/Σw and weighted population standard deviation per
/// zone and period, with w = frac_of_hex. Hexes missing a variable drop out
/// of that variable's sums.
pub fn aggregate_to_zone(
    frame: &HexFrame,
    xwalk: &Crosswalk,
    variables: &[&str],
    stats: ZoneStats,
) -> Result<ZoneTable, LinkageError> {
    frame.check_grid(&xwalk.grid)?;
    let vars: Vec<String> = if variables.is_empty() {
        frame.variables().to_vec()
    } else {
        variables.iter().map(|v| v.to_string()).collect()
    };
    let idx = vars
        .iter()
        .map(|v| frame.column_index(v).ok_or_else(|| IngestError::MissingColumn(v.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut by_hex: BTreeMap<HexId, Vec<(&str, f64)>> = BTreeMap::new();
    for r in &xwalk.records {
        by_hex.entry(r.hex).or_default().push((r.zone_id.as_str(), r.frac_of_hex));
    }
    // (zone, period) -> per variable list of (weight, value)
    let mut groups: BTreeMap<(String, String), Vec<Vec<(f64, f64)>>> = BTreeMap::new();
    let mut overlap = false;
    for (k, values) in frame.rows() {
        let Some(zones) = by_hex.get(&k.hex) else { continue };
        overlap = true;
        for &(zone, w) in zones {
            let g = groups
                .entry((zone.to_string(), k.period.clone()))
                .or_insert_with(|| vec![Vec::new(); vars.len()]);
            for (slot, &i) in g.iter_mut().zip(&idx) {
                if let Some(v) = values[i] {
                    slot.push((w, v));
                }
            }
        }
    }
    if !overlap {
        return Err(LinkageError::NoOverlap);
    }
    let mut columns = Vec::new();
    for v in &vars {
        if stats.mean {
            columns.push(format!("mean_{v}"));
        }
        if stats.std {
            columns.push(format!("std_{v}"));
        }
    }
    let rows = groups
        .into_iter()
        .map(|(key, per_var)| {
            let mut row = Vec::with_capacity(columns.len());
            for pairs in per_var {
                let (mean, std) = weighted_mean_std(&pairs);
                if stats.mean {
                    row.push(mean);
                }
                if stats.std {
                    row.push(std);
                }
            }
            (key, row)
        })
        .collect();
    Ok(ZoneTable { columns, rows })
}

fn weighted_mean_std(pairs: &[(f64, f64)]) -> (Option<f64>, Option<f64>) {
    let sw: f64 = pairs.iter().map(|(w, _)| w).sum();
    if !(sw > 0.0) {
        return (None, None);
    }
    let mean = pairs.iter().map(|(w, v)| w * v).sum::<f64>() / sw;
    let var = pairs.iter().map(|(w, v)| w * (v - mean) * (v - mean)).sum::<f64>() / sw;
    (Some(mean), Some(var.sqrt()))
}

impl ZoneTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("zone_id,period");
        for c in &self.columns {
            out.push(',');
            out.push_str(&quote_field(c));
        }
        out.push('\n');
        for ((zone, period), vals) in &self.rows {
            out.push_str(&quote_field(zone));
            out.push(',');
            out.push_str(period);
            for v in vals {
                out.push(',');
                match v {
                    Some(x) => out.push_str(&format_f64(*x)),
                    None => out.push_str("NA"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self, LinkageError> {
        let mut recs = parse_records(text, 1)?.into_iter();
        let header = recs.next().ok_or(IngestError::Empty)?;
        let names: Vec<String> = header.fields.iter().map(|f| f.text.clone()).collect();
        if names.len() < 2 || names[0] != "zone_id" || names[1] != "period" {
            return Err(LinkageError::Format {
                line: 1,
                message: "expected header zone_id,period,...".into(),
            });
        }
        let columns = names[2..].to_vec();
        let mut rows = BTreeMap::new();
        for rec in recs {
            let bad = |message: String| LinkageError::Format { line: rec.line, message };
            if rec.fields.len() != names.len() {
                return Err(bad(format!("expected {} fields, found {}", names.len(), rec.fields.len())));
            }
            let vals = rec.fields[2..]
                .iter()
                .map(|f| {
                    if is_missing_token(f) {
                        Ok(None)
                    } else {
                        parse_number(&f.text).map(Some).ok_or_else(|| bad(format!("non-numeric value {:?}", f.text)))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            let key = (rec.fields[0].text.clone(), rec.fields[1].text.clone());
            if rows.insert(key, vals).is_some() {
                return Err(bad("duplicate (zone_id, period)".into()));
            }
        }
        Ok(Self { columns, rows })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), LinkageError> {
        crate::ingest::write_text(path.as_ref(), &self.to_csv_string())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, LinkageError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        Self::parse_csv(&text)
    }
}

/// How a record was geocoded.
#[derive(Debug, Clone, PartialEq)]
pub enum LocateKey {
    Point(Point),
    Hex(HexId),
    Zone(String),
}

/// Inclusive period bounds as `YYYY` or `YYYY-MM-DD`. Static (`-`) rows
/// are always in range.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PeriodRange {
    pub start: Option<String>,
    pub end: Option<String>,
}

fn period_span(p: &str) -> Option<(String, String)> {
    match p.len() {
        4 => Some((format!("{p}-01-01"), format!("{p}-12-31"))),
        10 => Some((p.to_string(), p.to_string())),
        _ => None,
    }
}

impl PeriodRange {
    fn bounds(&self) -> Result<(Option<String>, Option<String>), LinkageError> {
        let check = |p: &Option<String>, first: bool| -> Result<Option<String>, LinkageError> {
            match p {
                None => Ok(None),
                Some(p) => {
                    let (a, b) = period_span(p)
                        .filter(|_| crate::ingest::is_valid_period(p) && p != "-")
                        .ok_or_else(|| LinkageError::Range(format!("bad period {p:?}")))?;
                    Ok(Some(if first { a } else { b }))
                }
            }
        };
        let (s, e) = (check(&self.start, true)?, check(&self.end, false)?);
        if let (Some(s), Some(e)) = (&s, &e) {
            if s > e {
                return Err(LinkageError::Range(format!("start {s} is after end {e}")));
            }
        }
        Ok((s, e))
    }

    fn contains(bounds: &(Option<String>, Option<String>), period: &str) -> bool {
        let Some((a, b)) = period_span(period) else { return true };
        bounds.0.as_ref().is_none_or(|s| a >= *s) && bounds.1.as_ref().is_none_or(|e| b <= *e)
    }
}

/// One row of a located series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    /// Hex id or zone id.
    pub id: String,
    pub period: String,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub columns: Vec<String>,
    pub rows: Vec<SeriesRow>,
}

/// Exposure rows for a geocoded record. Points resolve to their cell on the
/// frame's own grid; zone keys read the zone table.
pub fn locate(
    key: &LocateKey,
    frame: &HexFrame,
    zones: Option<&ZoneTable>,
    range: &PeriodRange,
) -> Result<Series, LinkageError> {
    let bounds = range.bounds()?;
    let hex = match key {
        LocateKey::Point(p) => Some(point_to_cell(*p, frame.grid().res, &frame.grid().grid())?),
        LocateKey::Hex(h) => Some(*h),
        LocateKey::Zone(_) => None,
    };
    if let Some(h) = hex {
        let rows = frame
            .rows()
            .filter(|(k, _)| k.hex == h && PeriodRange::contains(&bounds, &k.period))
            .map(|(k, v)| SeriesRow {
                id: h.to_string(),
                period: k.period.clone(),
                values: v.to_vec(),
            })
            .collect();
        return Ok(Series {
            columns: frame.variables().to_vec(),
            rows,
        });
    }
    let LocateKey::Zone(zone) = key else { unreachable!() };
    let table = zones.ok_or_else(|| LinkageError::UnknownZone(zone.clone()))?;
    if !table.rows.keys().any(|(z, _)| z == zone) {
        return Err(LinkageError::UnknownZone(zone.clone()));
    }
    let rows = table
        .rows
        .iter()
        .filter(|((z, p), _)| z == zone && PeriodRange::contains(&bounds, p))
        .map(|((z, p), v)| SeriesRow {
            id: z.clone(),
            period: p.clone(),
            values: v.clone(),
        })
        .collect();
    Ok(Series {
        columns: table.columns.clone(),
        rows,
    })
}
