//! File-based dataset registry: a JSON-lines manifest with one provenance
//! record per dataset.

use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("dataset id {0:?} is already registered")]
    DuplicateId(String),
    #[error("record is invalid: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("manifest is locked by another writer ({0})")]
    Locked(PathBuf),
    #[error("malformed query {text:?}: {message}")]
    Query { text: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CatalogError + '_ {
    move |source| CatalogError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataType {
    Raster,
    Vector,
    Tabular,
    Model,
    IngestionCode,
}

impl DataType {
    /// Types stored as data files, which must carry a checksum.
    pub fn is_file_backed(self) -> bool {
        !matches!(self, DataType::IngestionCode)
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataType::Raster => "raster",
            DataType::Vector => "vector",
            DataType::Tabular => "tabular",
            DataType::Model => "model",
            DataType::IngestionCode => "ingestion-code",
        })
    }
}

impl FromStr for DataType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raster" => Ok(DataType::Raster),
            "vector" => Ok(DataType::Vector),
            "tabular" => Ok(DataType::Tabular),
            "model" => Ok(DataType::Model),
            "ingestion-code" => Ok(DataType::IngestionCode),
            other => Err(format!("unknown data type {other:?}")),
        }
    }
}

/// Start and end ISO dates, or `-` when the dataset has no time axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TemporalRepr", into = "TemporalRepr")]
pub enum TemporalExtent {
    None,
    Range { start: String, end: String },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TemporalRepr {
    Dash(String),
    Range([String; 2]),
}

impl TryFrom<TemporalRepr> for TemporalExtent {
    type Error = String;

    fn try_from(r: TemporalRepr) -> Result<Self, Self::Error> {
        match r {
            TemporalRepr::Dash(s) if s == "-" => Ok(TemporalExtent::None),
            TemporalRepr::Dash(s) => Err(format!("temporal_extent must be \"-\" or [start, end], got {s:?}")),
            TemporalRepr::Range([start, end]) => Ok(TemporalExtent::Range { start, end }),
        }
    }
}

impl From<TemporalExtent> for TemporalRepr {
    fn from(t: TemporalExtent) -> Self {
        match t {
            TemporalExtent::None => TemporalRepr::Dash("-".into()),
            TemporalExtent::Range { start, end } => TemporalRepr::Range([start, end]),
        }
    }
}

impl TemporalExtent {
    fn dates(&self) -> Option<Result<(NaiveDate, NaiveDate), String>> {
        match self {
            TemporalExtent::None => None,
            TemporalExtent::Range { start, end } => Some((|| {
                let s = parse_date(start)?;
                let e = parse_date(end)?;
                Ok((s, e))
            })()),
        }
    }
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| format!("{s:?} is not a YYYY-MM-DD date"))
}

/// One manifest line. Field order is the serialized order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    pub name: String,
    pub data_type: DataType,
    pub format: String,
    /// min_x, min_y, max_x, max_y in km.
    pub spatial_extent: [f64; 4],
    pub temporal_extent: TemporalExtent,
    pub native_resolution: String,
    pub source_url: String,
    pub license: String,
    pub ingestion_code_ref: String,
    pub checksum: String,
    pub created: String,
}

pub fn now_timestamp() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// SHA-256 of a file, hex encoded.
pub fn checksum_file(path: impl AsRef<Path>) -> Result<String, CatalogError> {
    let path = path.as_ref();
    let mut file = fs::File::open(path).map_err(io_err(path))?;
    let mut h = Sha256::new();
    io::copy(&mut file, &mut h).map_err(io_err(path))?;
    Ok(hex::encode(h.finalize()))
}

fn is_slug(s: &str) -> bool {
    !s.is_empty()
        && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-' || b == b'_')
        && !s.starts_with('-')
}

/// Every broken invariant of `record`, as readable messages. When
/// `data_file` is given its checksum is recomputed and compared.
pub fn validate(record: &DatasetRecord, data_file: Option<&Path>) -> Vec<String> {
    let mut v = Vec::new();
    if !is_slug(&record.id) {
        v.push(format!("id {:?} is not a slug (lowercase letters, digits, '-', '_')", record.id));
    }
    for (name, value) in [
        ("name", &record.name),
        ("format", &record.format),
        ("native_resolution", &record.native_resolution),
        ("source_url", &record.source_url),
        ("license", &record.license),
    ] {
        if value.trim().is_empty() {
            v.push(format!("{name} empty"));
        }
    }
    let [x0, y0, x1, y1] = record.spatial_extent;
    if record.spatial_extent.iter().any(|c| !c.is_finite()) {
        v.push("spatial_extent has non-finite values".into());
    } else {
        if x0 > x1 {
            v.push(format!("spatial_extent min_x {x0} > max_x {x1}"));
        }
        if y0 > y1 {
            v.push(format!("spatial_extent min_y {y0} > max_y {y1}"));
        }
    }
    match record.temporal_extent.dates() {
        Some(Err(e)) => v.push(format!("temporal_extent: {e}")),
        Some(Ok((s, e))) if s > e => v.push(format!("temporal_extent start {s} is after end {e}")),
        _ => {}
    }
    let well_formed = record.checksum.len() == 64 && record.checksum.bytes().all(|b| b.is_ascii_hexdigit());
    if record.data_type.is_file_backed() && record.checksum.is_empty() {
        v.push("checksum empty".into());
    } else if !record.checksum.is_empty() && !well_formed {
        v.push(format!("checksum {:?} is not a SHA-256 hex digest", record.checksum));
    }
    if let Some(path) = data_file {
        match checksum_file(path) {
            Ok(actual) if !actual.eq_ignore_ascii_case(&record.checksum) => v.push(format!(
                "checksum mismatch: recorded {}, file has {actual}",
                if record.checksum.is_empty() { "(none)" } else { &record.checksum }
            )),
            Ok(_) => {}
            Err(e) => v.push(format!("cannot checksum data file: {e}")),
        }
    }
    if DateTime::parse_from_rfc3339(&record.created).is_err() {
        v.push(format!("created {:?} is not an RFC 3339 timestamp", record.created));
    }
    v
}

/// Parses manifest text; blank lines are ignored.
pub fn parse_manifest(text: &str) -> Result<Vec<DatasetRecord>, CatalogError> {
    let mut out: Vec<DatasetRecord> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(line).map_err(|e| CatalogError::Manifest {
            line: i + 1,
            message: e.to_string(),
        })?;
        if out.iter().any(|r| r.id == rec.id) {
            return Err(CatalogError::Manifest {
                line: i + 1,
                message: format!("duplicate id {:?}", rec.id),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn manifest_string(records: &[DatasetRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Records in a manifest file; a missing file is an empty catalog.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>, CatalogError> {
    let path = path.as_ref();
    match fs::read_to_string(path) {
        Ok(text) => parse_manifest(&text),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(io_err(path)(e)),
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

struct WriterLock(PathBuf);

impl WriterLock {
    fn acquire(manifest: &Path) -> Result<Self, CatalogError> {
        let path = sibling(manifest, ".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(WriterLock(path)),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(CatalogError::Locked(path)),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for WriterLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Appends a validated record and atomically replaces the manifest.
pub fn register(record: &DatasetRecord, manifest: impl AsRef<Path>) -> Result<String, CatalogError> {
    register_with_hook(record, manifest, |_| Ok(()))
}

/// [`register`] with a hook run after the new manifest is written to its
/// temporary file and before it replaces the old one. A hook error aborts
/// the registration and leaves the old manifest untouched.
pub fn register_with_hook(
    record: &DatasetRecord,
    manifest: impl AsRef<Path>,
    before_rename: impl FnOnce(&Path) -> io::Result<()>,
) -> Result<String, CatalogError> {
    let manifest = manifest.as_ref();
    let violations = validate(record, None);
    if !violations.is_empty() {
        return Err(CatalogError::Invalid(violations));
    }
    let _lock = WriterLock::acquire(manifest)?;
    let mut records = read_manifest(manifest)?;
    if records.iter().any(|r| r.id == record.id) {
        return Err(CatalogError::DuplicateId(record.id.clone()));
    }
    records.push(record.clone());
    let tmp = sibling(manifest, ".tmp");
    let result = (|| {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(manifest_string(&records).as_bytes()).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        before_rename(&tmp).map_err(io_err(&tmp))?;
        fs::rename(&tmp, manifest).map_err(io_err(manifest))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map(|_| record.id.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Equals { field: String, value: String },
    Contains { field: String, value: String },
    BboxIntersects([f64; 4]),
    PeriodOverlaps { start: NaiveDate, end: NaiveDate },
}

const TEXT_FIELDS: [&str; 11] = [
    "id",
    "name",
    "data_type",
    "format",
    "native_resolution",
    "source_url",
    "license",
    "ingestion_code_ref",
    "checksum",
    "created",
    "temporal_extent",
];

fn field_text(r: &DatasetRecord, field: &str) -> String {
    match field {
        "id" => r.id.clone(),
        "name" => r.name.clone(),
        "data_type" => r.data_type.to_string(),
        "format" => r.format.clone(),
        "native_resolution" => r.native_resolution.clone(),
        "source_url" => r.source_url.clone(),
        "license" => r.license.clone(),
        "ingestion_code_ref" => r.ingestion_code_ref.clone(),
        "checksum" => r.checksum.clone(),
        "created" => r.created.clone(),
        "temporal_extent" => match &r.temporal_extent {
            TemporalExtent::None => "-".into(),
            TemporalExtent::Range { start, end } => format!("{start}/{end}"),
        },
        _ => unreachable!("field names are checked when parsing"),
    }
}

fn period_bounds(text: &str) -> Result<(NaiveDate, NaiveDate), String> {
    let one = |s: &str, end: bool| -> Result<NaiveDate, String> {
        if let Ok(year) = s.parse::<i32>() {
            if s.len() == 4 {
                let date = if end { NaiveDate::from_ymd_opt(year, 12, 31) } else { NaiveDate::from_ymd_opt(year, 1, 1) };
                return date.ok_or_else(|| format!("bad year {s}"));
            }
        }
        parse_date(s)
    };
    let (a, b) = text.split_once('/').unwrap_or((text, text));
    let (s, e) = (one(a.trim(), false)?, one(b.trim(), true)?);
    if s > e {
        return Err("period start after end".into());
    }
    Ok((s, e))
}

impl Predicate {
    /// `field=value`, `field~substring`, `bbox=x0,y0,x1,y1`, or
    /// `period=YYYY[-MM-DD][/YYYY[-MM-DD]]`.
    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let err = |message: String| CatalogError::Query {
            text: text.to_string(),
            message,
        };
        let (field, op, value) = match text.find(['=', '~']) {
            Some(i) => (text[..i].trim(), &text[i..i + 1], text[i + 1..].trim()),
            None => return Err(err("expected field=value or field~value".into())),
        };
        match (field, op) {
            ("bbox", "=") => {
                let v: Vec<f64> = value
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| err("bbox needs four numbers".into()))?;
                let b: [f64; 4] = v.try_into().map_err(|_| err("bbox needs four numbers".into()))?;
                Ok(Predicate::BboxIntersects(b))
            }
            ("period", "=") => {
                let (start, end) = period_bounds(value).map_err(err)?;
                Ok(Predicate::PeriodOverlaps { start, end })
            }
            (f, _) if !TEXT_FIELDS.contains(&f) => Err(err(format!("unknown field {f:?}"))),
            (f, "=") => Ok(Predicate::Equals {
                field: f.into(),
                value: value.into(),
            }),
            (f, _) => Ok(Predicate::Contains {
                field: f.into(),
                value: value.into(),
            }),
        }
    }

    pub fn matches(&self, r: &DatasetRecord) -> bool {
        match self {
            Predicate::Equals { field, value } => field_text(r, field) == *value,
            Predicate::Contains { field, value } => field_text(r, field).contains(value.as_str()),
            Predicate::BboxIntersects([x0, y0, x1, y1]) => {
                let [a0, b0, a1, b1] = r.spatial_extent;
                a0 <= *x1 && *x0 <= a1 && b0 <= *y1 && *y0 <= b1
            }
            Predicate::PeriodOverlaps { start, end } => match r.temporal_extent.dates() {
                Some(Ok((s, e))) => s <= *end && *start <= e,
                _ => false,
            },
        }
    }
}

/// Records matching every predicate, in manifest order.
pub fn query(manifest: impl AsRef<Path>, filter: &[Predicate]) -> Result<Vec<DatasetRecord>, CatalogError> {
    Ok(read_manifest(manifest)?
        .into_iter()
        .filter(|r| filter.iter().all(|p| p.matches(r)))
        .collect())
}
