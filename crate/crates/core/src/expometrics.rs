//! Exposure metrics over hex frames: mixture scores, air-quality classes,
//! attainment, population masking and radar-chart scaling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::ingest::{read_csv, Cell, ColumnKind, HexFrame, IngestError, Schema, Table};

#[derive(Debug, Error)]
pub enum ExpoError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("no chemicals given")]
    Empty,
    #[error("{concentrations} concentrations but {limits} limits")]
    LengthMismatch { concentrations: usize, limits: usize },
    #[error("chemical {index}: exposure limit must be positive, got {limit}")]
    NonPositiveLimit { index: usize, limit: f64 },
    #[error("chemical {index}: concentration must be non-negative and finite, got {value}")]
    BadConcentration { index: usize, value: f64 },
    #[error("no exposure limit for chemical {0:?}")]
    MissingLimit(String),
    #[error("limits table line {line}: {message}")]
    Limits { line: usize, message: String },
    #[error("malformed filter {text:?}: {message}")]
    Predicate { text: String, message: String },
    #[error("value must be non-negative, got {0}")]
    Negative(f64),
    #[error("no column {0:?}")]
    MissingColumn(String),
    #[error("radar input needs at least one cluster and one feature with equal row lengths")]
    RadarShape,
}

/// One chemical's contribution to a mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Chemical {
    pub cas: String,
    pub concentration: f64,
    pub limit: f64,
}

/// Sum of concentration / limit over the mixture. Scores above 1 exceed
/// the limit for the mixture even when every single ratio is below 1.
pub fn ceem(chemicals: &[Chemical]) -> Result<f64, ExpoError> {
    let c: Vec<f64> = chemicals.iter().map(|c| c.concentration).collect();
    let l: Vec<f64> = chemicals.iter().map(|c| c.limit).collect();
    ceem_ratios(&c, &l)
}

/// [`ceem`] over parallel slices.
pub fn ceem_ratios(concentrations: &[f64], limits: &[f64]) -> Result<f64, ExpoError> {
    if concentrations.len() != limits.len() {
        return Err(ExpoError::LengthMismatch {
            concentrations: concentrations.len(),
            limits: limits.len(),
        });
    }
    if concentrations.is_empty() {
        return Err(ExpoError::Empty);
    }
    let mut score = 0.0;
    for (i, (&c, &l)) in concentrations.iter().zip(limits).enumerate() {
        if !(l > 0.0) || !l.is_finite() {
            return Err(ExpoError::NonPositiveLimit { index: i, limit: l });
        }
        if !(c >= 0.0) || !c.is_finite() {
            return Err(ExpoError::BadConcentration { index: i, value: c });
        }
        score += c / l;
    }
    Ok(score)
}

/// Converts an annual average of hourly concentrations to an annual
/// average of daily concentrations. Over a complete year both are the same
/// mean, so this is the identity.
pub fn hourly_to_daily_average(annual_hourly_mean: f64) -> f64 {
    annual_hourly_mean
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitRow {
    pub cas: String,
    pub limit: f64,
    pub group: Option<String>,
    pub sites: Vec<String>,
}

/// Exposure limits keyed by CAS id. CSV columns `cas,limit,group,sites`;
/// `sites` holds semicolon-separated tags and may be omitted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Limits {
    rows: BTreeMap<String, LimitRow>,
}

impl Limits {
    pub fn from_rows(rows: impl IntoIterator<Item = LimitRow>) -> Result<Self, ExpoError> {
        let mut out = BTreeMap::new();
        for (i, r) in rows.into_iter().enumerate() {
            if !(r.limit > 0.0) || !r.limit.is_finite() {
                return Err(ExpoError::NonPositiveLimit { index: i, limit: r.limit });
            }
            let cas = r.cas.clone();
            if out.insert(cas.clone(), r).is_some() {
                return Err(ExpoError::Limits {
                    line: i + 2,
                    message: format!("duplicate cas {cas:?}"),
                });
            }
        }
        Ok(Self { rows: out })
    }

    pub fn schema() -> Schema {
        Schema::new(&[("cas", ColumnKind::Text), ("limit", ColumnKind::Number), ("group", ColumnKind::Text)])
    }

    pub fn from_table(table: &Table) -> Result<Self, ExpoError> {
        let col = |n: &str| table.column_index(n).ok_or_else(|| ExpoError::MissingColumn(n.to_string()));
        let (ci, li, gi) = (col("cas")?, col("limit")?, col("group")?);
        let si = table.column_index("sites");
        let mut rows = Vec::new();
        for (i, row) in table.rows.iter().enumerate() {
            let line = i + 2;
            let cas = match &row[ci] {
                Cell::Text(s) if !s.trim().is_empty() => s.trim().to_string(),
                _ => return Err(ExpoError::Limits { line, message: "missing cas".into() }),
            };
            let limit = row[li]
                .as_f64()
                .ok_or_else(|| ExpoError::Limits { line, message: "missing limit".into() })?;
            let group = row[gi].as_text().map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
            let sites = si
                .and_then(|s| row[s].as_text())
                .map(|s| {
                    s.split(';')
                        .map(|t| t.trim().to_lowercase())
                        .filter(|t| !t.is_empty())
                        .collect()
                })
                .unwrap_or_default();
            rows.push(LimitRow { cas, limit, group, sites });
        }
        Self::from_rows(rows)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ExpoError> {
        Self::from_table(&read_csv(path, &Self::schema())?)
    }

    pub fn get(&self, cas: &str) -> Option<&LimitRow> {
        self.rows.get(cas)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LimitRow> {
        self.rows.values()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Clause {
    GroupIn(BTreeSet<String>),
    SiteHas(String),
}

/// Conjunction of clauses over a chemical's group and site tags:
/// `group in {1,2A}`, `group = 1`, `site has lung`, `site = lung`, joined
/// with `and`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CarcinogenFilter {
    clauses: Vec<Clause>,
}

impl CarcinogenFilter {
    pub fn parse(text: &str) -> Result<Self, ExpoError> {
        let err = |message: &str| ExpoError::Predicate {
            text: text.to_string(),
            message: message.to_string(),
        };
        if text.trim().is_empty() {
            return Err(err("empty filter"));
        }
        let mut clauses = Vec::new();
        for part in text.split(" and ") {
            let part = part.trim();
            let end = part
                .find(|c: char| c.is_whitespace() || c == '=')
                .ok_or_else(|| err("expected `<field> <op> <value>`"))?;
            let (field, rest) = (&part[..end], part[end..].trim_start());
            let (op, value) = if let Some(v) = rest.strip_prefix('=') {
                ("=", v.trim())
            } else {
                let (op, v) = rest.split_once(char::is_whitespace).ok_or_else(|| err("missing value"))?;
                (op, v.trim())
            };
            if value.is_empty() {
                return Err(err("missing value"));
            }
            let clause = match (field, op) {
                ("group", "=") => Clause::GroupIn(BTreeSet::from([value.to_string()])),
                ("group", "in") => {
                    let inner = value
                        .strip_prefix('{')
                        .and_then(|v| v.strip_suffix('}'))
                        .ok_or_else(|| err("expected `{...}` after `in`"))?;
                    let set: BTreeSet<String> = inner
                        .split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect();
                    if set.is_empty() {
                        return Err(err("empty group set"));
                    }
                    Clause::GroupIn(set)
                }
                ("site" | "sites", "has" | "=") => Clause::SiteHas(value.to_lowercase()),
                _ => return Err(err(&format!("unsupported clause {part:?}"))),
            };
            clauses.push(clause);
        }
        Ok(Self { clauses })
    }

    pub fn matches(&self, row: &LimitRow) -> bool {
        self.clauses.iter().all(|c| match c {
            Clause::GroupIn(set) => row.group.as_ref().is_some_and(|g| set.contains(g)),
            Clause::SiteHas(site) => row.sites.iter().any(|s| s == site),
        })
    }
}

/// CAS ids of the chemicals in `chems` matching the filter text.
pub fn filter_carcinogens(chems: &Table, filter: &str) -> Result<BTreeSet<String>, ExpoError> {
    let filter = CarcinogenFilter::parse(filter)?;
    let limits = Limits::from_table(chems)?;
    Ok(limits.iter().filter(|r| filter.matches(r)).map(|r| r.cas.clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CeemSummary {
    /// Chemical columns that entered the score.
    pub chemicals: Vec<String>,
    /// Chemical columns removed by the filter.
    pub filtered_out: Vec<String>,
    /// Input rows with no value for any kept chemical.
    pub rows_without_values: usize,
}

/// Mixture score per (hex, period) row. Every column except `coverage_*`
/// is taken as a chemical keyed by CAS id. Missing concentrations are left
/// out of the sum; `ceem_n` counts the chemicals that contributed.
pub fn ceem_map(
    frame: &HexFrame,
    limits: &Limits,
    filter: Option<&CarcinogenFilter>,
) -> Result<(HexFrame, CeemSummary), ExpoError> {
    let mut summary = CeemSummary::default();
    let mut kept: Vec<(usize, f64)> = Vec::new();
    for (i, name) in frame.variables().iter().enumerate() {
        if name.starts_with("coverage_") {
            continue;
        }
        let row = limits.get(name).ok_or_else(|| ExpoError::MissingLimit(name.clone()))?;
        if filter.is_none_or(|f| f.matches(row)) {
            kept.push((i, row.limit));
            summary.chemicals.push(name.clone());
        } else {
            summary.filtered_out.push(name.clone());
        }
    }
    let mut out = HexFrame::new(*frame.grid(), vec!["ceem".into(), "ceem_n".into()])?;
    for (key, values) in frame.rows() {
        let mut c = Vec::new();
        let mut l = Vec::new();
        for &(i, limit) in &kept {
            if let Some(v) = values[i] {
                c.push(v);
                l.push(limit);
            }
        }
        if c.is_empty() {
            summary.rows_without_values += 1;
            continue;
        }
        let score = ceem_ratios(&c, &l)?;
        out.insert(key.hex, &key.period, vec![Some(score), Some(c.len() as f64)])?;
    }
    Ok((out, summary))
}

/// Air-quality category; ordered from best to worst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AqiClass {
    Good,
    Moderate,
    Unhealthy,
    VeryUnhealthyOrHazardous,
}

impl AqiClass {
    pub const ALL: [AqiClass; 4] = [
        AqiClass::Good,
        AqiClass::Moderate,
        AqiClass::Unhealthy,
        AqiClass::VeryUnhealthyOrHazardous,
    ];

    /// 1-based ordinal, used when classes are stored in a frame.
    pub fn code(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get((code as usize).checked_sub(1)?).copied()
    }
}

impl fmt::Display for AqiClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AqiClass::Good => "Good",
            AqiClass::Moderate => "Moderate",
            AqiClass::Unhealthy => "Unhealthy",
            AqiClass::VeryUnhealthyOrHazardous => "VeryUnhealthyOrHazardous",
        })
    }
}

fn non_negative(v: f64) -> Result<f64, ExpoError> {
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(ExpoError::Negative(v))
    }
}

/// Upper bounds are inclusive: 50 is Good, 100 Moderate, 200 Unhealthy.
pub fn classify_aqi(v: f64) -> Result<AqiClass, ExpoError> {
    let v = non_negative(v)?;
    Ok(if v <= 50.0 {
        AqiClass::Good
    } else if v <= 100.0 {
        AqiClass::Moderate
    } else if v <= 200.0 {
        AqiClass::Unhealthy
    } else {
        AqiClass::VeryUnhealthyOrHazardous
    })
}

/// Co-exposure class pair (smoke-attributable, total).
pub fn bivariate(smoke: f64, total: f64) -> Result<(AqiClass, AqiClass), ExpoError> {
    Ok((classify_aqi(smoke)?, classify_aqi(total)?))
}

/// Annual PM2.5 standard, µg/m³.
pub const PM25_ANNUAL_STANDARD: f64 = 12.0;

pub fn attainment(annual_mean: f64, standard: f64) -> Result<bool, ExpoError> {
    Ok(non_negative(annual_mean)? <= standard)
}

/// Keeps rows whose hex has `pop_column` ≥ `threshold` in `pop`. The
/// population row for the same period is used when present, otherwise the
/// static (`-`) row. Hexes absent from `pop` are dropped.
pub fn population_mask(
    frame: &HexFrame,
    pop: &HexFrame,
    pop_column: &str,
    threshold: f64,
) -> Result<HexFrame, ExpoError> {
    pop.check_grid(frame.grid())?;
    if pop.column_index(pop_column).is_none() {
        return Err(ExpoError::MissingColumn(pop_column.to_string()));
    }
    let mut out = frame.clone();
    out.retain(|k, _| {
        let v = pop
            .value(&k.hex, &k.period, pop_column)
            .or_else(|| pop.value(&k.hex, "-", pop_column));
        v.is_some_and(|p| p >= threshold)
    });
    Ok(out)
}

/// Rescales each feature (column) across clusters (rows) to 0..10. A
/// feature with one value everywhere maps to 5.
pub fn radar_normalize(summary: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ExpoError> {
    let d = summary.first().map(Vec::len).ok_or(ExpoError::RadarShape)?;
    if d == 0 || summary.iter().any(|r| r.len() != d) {
        return Err(ExpoError::RadarShape);
    }
    let mut out = summary.to_vec();
    for j in 0..d {
        let (lo, hi) = summary
            .iter()
            .map(|r| r[j])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        for row in out.iter_mut() {
            row[j] = if hi > lo { 10.0 * (row[j] - lo) / (hi - lo) } else { 5.0 };
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassifyMode {
    /// `<col>_class`: AQI class code 1..4.
    Aqi,
    /// `bivariate_class`: 4·(smoke code − 1) + total code, 1..16.
    Bivariate,
    /// `<col>_attain`: 1 when within the standard, else 0.
    Attainment(f64),
}

/// Appends a class column to a frame. Missing inputs give missing classes.
pub fn classify_frame(frame: &HexFrame, columns: &[&str], mode: ClassifyMode) -> Result<HexFrame, ExpoError> {
    let idx = columns
        .iter()
        .map(|c| frame.column_index(c).ok_or_else(|| ExpoError::MissingColumn(c.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let needed = if mode == ClassifyMode::Bivariate { 2 } else { 1 };
    if idx.len() != needed {
        return Err(ExpoError::MissingColumn(format!("{needed} column(s) required, got {}", idx.len())));
    }
    let mut codes = BTreeMap::new();
    for (k, v) in frame.rows() {
        let code = match mode {
            ClassifyMode::Aqi => v[idx[0]].map(classify_aqi).transpose()?.map(|c| f64::from(c.code())),
            ClassifyMode::Bivariate => match (v[idx[0]], v[idx[1]]) {
                (Some(a), Some(b)) => {
                    let (ca, cb) = bivariate(a, b)?;
                    Some(f64::from(4 * (ca.code() - 1) + cb.code()))
                }
                _ => None,
            },
            ClassifyMode::Attainment(std) => v[idx[0]]
                .map(|x| attainment(x, std))
                .transpose()?
                .map(|ok| if ok { 1.0 } else { 0.0 }),
        };
        codes.insert(k.clone(), code);
    }
    let name = match mode {
        ClassifyMode::Aqi => format!("{}_class", columns[0]),
        ClassifyMode::Bivariate => "bivariate_class".to_string(),
        ClassifyMode::Attainment(_) => format!("{}_attain", columns[0]),
    };
    let mut out = frame.clone();
    out.add_column(&name, |k| codes[k])?;
    Ok(out)
}
