//! The hexified dataset: rows keyed by `(hex_id, period)` with named numeric
//! columns, persisted as CSV preceded by a `#grid` comment line.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::{is_missing_token, parse_number, parse_records, quote_field, IngestError};
use crate::hexgrid::{format_f64, GridFingerprint, HexId};

/// Row key ordered by the canonical hex text, then period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowKey {
    pub hex: HexId,
    pub period: String,
}

impl Ord for RowKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.hex
            .canonical_cmp(&other.hex)
            .then_with(|| self.period.cmp(&other.period))
    }
}

impl PartialOrd for RowKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// `-` for static data, a 4-digit year, or an ISO `YYYY-MM-DD` date.
pub fn is_valid_period(p: &str) -> bool {
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    match p.len() {
        1 => p == "-",
        4 => digits(p),
        10 => {
            let b = p.as_bytes();
            b[4] == b'-'
                && b[7] == b'-'
                && digits(&p[0..4])
                && digits(&p[5..7])
                && digits(&p[8..10])
                && (1..=12).contains(&p[5..7].parse::<u32>().unwrap_or(0))
                && (1..=31).contains(&p[8..10].parse::<u32>().unwrap_or(0))
        }
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HexFrame {
    grid: GridFingerprint,
    variables: Vec<String>,
    rows: BTreeMap<RowKey, Vec<Option<f64>>>,
}

impl HexFrame {
    pub fn new(grid: GridFingerprint, variables: Vec<String>) -> Result<Self, IngestError> {
        let mut seen = BTreeSet::new();
        for v in &variables {
            if v == "hex_id" || v == "period" || v.is_empty() || !seen.insert(v.as_str()) {
                return Err(IngestError::DuplicateColumn(v.clone()));
            }
        }
        Ok(Self {
            grid,
            variables,
            rows: BTreeMap::new(),
        })
    }

    pub fn grid(&self) -> &GridFingerprint {
        &self.grid
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn check_row(&self, hex: &HexId, period: &str, values: &[Option<f64>]) -> Result<(), IngestError> {
        if hex.res != self.grid.res {
            return Err(IngestError::Resolution {
                hex_id: hex.to_string(),
                expected: self.grid.res,
                found: hex.res,
            });
        }
        if !is_valid_period(period) {
            return Err(IngestError::Period {
                line: 0,
                period: period.to_string(),
            });
        }
        if values.len() != self.variables.len() {
            return Err(IngestError::Width {
                expected: self.variables.len(),
                found: values.len(),
            });
        }
        Ok(())
    }

    /// Adds a row; an existing `(hex, period)` key is an error.
    pub fn insert(&mut self, hex: HexId, period: &str, values: Vec<Option<f64>>) -> Result<(), IngestError> {
        self.check_row(&hex, period, &values)?;
        let key = RowKey {
            hex,
            period: period.to_string(),
        };
        if self.rows.contains_key(&key) {
            return Err(IngestError::DuplicateKey {
                line: 0,
                hex_id: hex.to_string(),
                period: period.to_string(),
            });
        }
        self.rows.insert(key, values);
        Ok(())
    }

    /// Adds or replaces a row.
    pub fn upsert(&mut self, hex: HexId, period: &str, values: Vec<Option<f64>>) -> Result<(), IngestError> {
        self.check_row(&hex, period, &values)?;
        self.rows.insert(
            RowKey {
                hex,
                period: period.to_string(),
            },
            values,
        );
        Ok(())
    }

    pub fn get(&self, hex: &HexId, period: &str) -> Option<&[Option<f64>]> {
        self.rows
            .get(&RowKey {
                hex: *hex,
                period: period.to_string(),
            })
            .map(Vec::as_slice)
    }

    pub fn value(&self, hex: &HexId, period: &str, column: &str) -> Option<f64> {
        let idx = self.column_index(column)?;
        self.get(hex, period)?[idx]
    }

    /// Rows in canonical order.
    pub fn rows(&self) -> impl Iterator<Item = (&RowKey, &[Option<f64>])> {
        self.rows.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn periods(&self) -> BTreeSet<String> {
        self.rows.keys().map(|k| k.period.clone()).collect()
    }

    pub fn hexes(&self) -> BTreeSet<HexId> {
        self.rows.keys().map(|k| k.hex).collect()
    }

    /// Keeps the rows for which `keep` returns true.
    pub fn retain(&mut self, mut keep: impl FnMut(&RowKey, &[Option<f64>]) -> bool) {
        self.rows.retain(|k, v| keep(k, v));
    }

    /// Relabels every row with `period`. Fails if that merges two rows.
    pub fn set_period(&mut self, period: &str) -> Result<(), IngestError> {
        if !is_valid_period(period) {
            return Err(IngestError::Period {
                line: 0,
                period: period.to_string(),
            });
        }
        let mut rows = BTreeMap::new();
        for (k, v) in std::mem::take(&mut self.rows) {
            let key = RowKey {
                hex: k.hex,
                period: period.to_string(),
            };
            if rows.insert(key, v).is_some() {
                return Err(IngestError::DuplicateKey {
                    line: 0,
                    hex_id: k.hex.to_string(),
                    period: period.to_string(),
                });
            }
        }
        self.rows = rows;
        Ok(())
    }

    /// New frame with only the named columns, in the order given.
    pub fn select(&self, columns: &[&str]) -> Result<HexFrame, IngestError> {
        let idx = columns
            .iter()
            .map(|c| self.column_index(c).ok_or_else(|| IngestError::MissingColumn(c.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = HexFrame::new(self.grid, columns.iter().map(|c| c.to_string()).collect())?;
        for (k, v) in &self.rows {
            out.rows.insert(k.clone(), idx.iter().map(|&i| v[i]).collect());
        }
        Ok(out)
    }

    /// Rows restricted to one period.
    pub fn filter_period(&self, period: &str) -> HexFrame {
        let mut out = self.clone();
        out.rows.retain(|k, _| k.period == period);
        out
    }

    /// Appends a column filled by `f(key)`.
    pub fn add_column(
        &mut self,
        name: &str,
        mut f: impl FnMut(&RowKey) -> Option<f64>,
    ) -> Result<(), IngestError> {
        if name == "hex_id" || name == "period" || self.column_index(name).is_some() {
            return Err(IngestError::DuplicateColumn(name.to_string()));
        }
        self.variables.push(name.to_string());
        for (k, v) in self.rows.iter_mut() {
            v.push(f(k));
        }
        Ok(())
    }

    /// One static row per hex with a column `<var>@<period>` for every
    /// (variable, period) pair; builds per-hex temporal vectors.
    pub fn pivot_periods(&self) -> Result<HexFrame, IngestError> {
        let periods: Vec<String> = self.periods().into_iter().collect();
        let mut names = Vec::new();
        for v in &self.variables {
            for p in &periods {
                names.push(format!("{v}@{p}"));
            }
        }
        let mut out = HexFrame::new(self.grid, names)?;
        let width = self.variables.len() * periods.len();
        let pos: BTreeMap<&str, usize> = periods.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
        let mut acc: BTreeMap<HexId, Vec<Option<f64>>> = BTreeMap::new();
        for (k, vals) in &self.rows {
            let row = acc.entry(k.hex).or_insert_with(|| vec![None; width]);
            let pi = pos[k.period.as_str()];
            for (vi, v) in vals.iter().enumerate() {
                row[vi * periods.len() + pi] = *v;
            }
        }
        for (hex, row) in acc {
            out.insert(hex, "-", row)?;
        }
        Ok(out)
    }

    pub fn check_grid(&self, expected: &GridFingerprint) -> Result<(), IngestError> {
        if self.grid != *expected {
            return Err(IngestError::GridMismatch {
                expected: *expected,
                found: self.grid,
            });
        }
        Ok(())
    }

    /// Canonical CSV serialization.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(64 + self.rows.len() * (16 + 24 * self.variables.len()));
        out.push_str(&self.grid.header_line());
        out.push('\n');
        out.push_str("hex_id,period");
        for v in &self.variables {
            out.push(',');
            out.push_str(&quote_field(v));
        }
        out.push('\n');
        for (k, vals) in &self.rows {
            out.push_str(&k.hex.to_string());
            out.push(',');
            out.push_str(&k.period);
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

    pub fn parse_csv(text: &str) -> Result<HexFrame, IngestError> {
        let mut grid = None;
        let mut offset = 0;
        let mut line_no = 0;
        for line in text.split_inclusive('\n') {
            if !line.starts_with('#') {
                break;
            }
            line_no += 1;
            offset += line.len();
            let trimmed = line.trim_end();
            if trimmed.starts_with("#grid") {
                grid = Some(
                    GridFingerprint::parse_header(trimmed)
                        .map_err(|source| IngestError::Grid { line: line_no, source })?,
                );
            }
        }
        let grid = grid.ok_or(IngestError::MissingHeader("#grid"))?;
        let mut records = parse_records(&text[offset..], line_no + 1)?.into_iter();
        let header = records.next().ok_or(IngestError::Empty)?;
        let names: Vec<&str> = header.fields.iter().map(|f| f.text.as_str()).collect();
        if names.len() < 2 || names[0] != "hex_id" || names[1] != "period" {
            return Err(IngestError::Header {
                line: header.line,
                message: "first columns must be hex_id,period".into(),
            });
        }
        let mut frame = HexFrame::new(grid, names[2..].iter().map(|s| s.to_string()).collect())?;
        for rec in records {
            if rec.fields.len() != names.len() {
                return Err(IngestError::Ragged {
                    line: rec.line,
                    expected: names.len(),
                    found: rec.fields.len(),
                });
            }
            let hex: HexId = rec.fields[0]
                .text
                .parse()
                .map_err(|source| IngestError::Grid { line: rec.line, source })?;
            let period = rec.fields[1].text.as_str();
            if !is_valid_period(period) {
                return Err(IngestError::Period {
                    line: rec.line,
                    period: period.to_string(),
                });
            }
            let mut values = Vec::with_capacity(names.len() - 2);
            for (f, name) in rec.fields[2..].iter().zip(&names[2..]) {
                if is_missing_token(f) {
                    values.push(None);
                } else {
                    values.push(Some(parse_number(&f.text).ok_or_else(|| IngestError::NotNumeric {
                        line: rec.line,
                        column: name.to_string(),
                        value: f.text.clone(),
                    })?));
                }
            }
            match frame.insert(hex, period, values) {
                Err(IngestError::DuplicateKey { hex_id, period, .. }) => {
                    return Err(IngestError::DuplicateKey {
                        line: rec.line,
                        hex_id,
                        period,
                    })
                }
                Err(IngestError::Resolution { hex_id, expected, found }) => {
                    return Err(IngestError::Header {
                        line: rec.line,
                        message: format!("{hex_id} has resolution {found}, grid header says {expected}"),
                    })
                }
                other => other?,
            }
        }
        Ok(frame)
    }
}

pub fn write_hexframe(path: impl AsRef<Path>, frame: &HexFrame) -> Result<(), IngestError> {
    super::write_text(path.as_ref(), &frame.to_csv_string())
}

pub fn read_hexframe(path: impl AsRef<Path>) -> Result<HexFrame, IngestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    HexFrame::parse_csv(&text)
}

/// Reads a frame and checks it lives on `expected`.
pub fn read_hexframe_expecting(path: impl AsRef<Path>, expected: &GridFingerprint) -> Result<HexFrame, IngestError> {
    let frame = read_hexframe(path)?;
    frame.check_grid(expected)?;
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hexgrid::GridSpec;
    use proptest::prelude::*;

    fn fp() -> GridFingerprint {
        GridSpec::default().fingerprint(8)
    }

    fn sample() -> HexFrame {
        let mut f = HexFrame::new(fp(), vec!["pm25".into(), "ec".into()]).unwrap();
        f.insert(HexId::new(8, 10, -3), "2018", vec![Some(7.25), None]).unwrap();
        f.insert(HexId::new(8, 9, -3), "2018", vec![Some(1.0 / 3.0), Some(-0.0)]).unwrap();
        f.insert(HexId::new(8, 9, -3), "2017-06-01", vec![Some(1e-300), Some(2.0)]).unwrap();
        f
    }

    #[test]
    fn round_trip_is_exact_and_byte_stable() {
        let f = sample();
        let text = f.to_csv_string();
        let back = HexFrame::parse_csv(&text).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_csv_string(), text);
    }

    #[test]
    fn rows_sorted_by_text() {
        let text = sample().to_csv_string();
        let ids: Vec<&str> = text.lines().skip(2).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(ids, vec!["H8:10:-3", "H8:9:-3", "H8:9:-3"]);
    }

    #[test]
    fn duplicate_key_rejected() {
        let mut f = sample();
        assert!(matches!(
            f.insert(HexId::new(8, 10, -3), "2018", vec![None, None]),
            Err(IngestError::DuplicateKey { .. })
        ));
        let text = format!("{}\nhex_id,period,v\nH8:1:1,-,1\nH8:1:1,-,2\n", fp().header_line());
        assert!(matches!(HexFrame::parse_csv(&text), Err(IngestError::DuplicateKey { line: 4, .. })));
    }

    #[test]
    fn static_period_round_trips() {
        let mut f = HexFrame::new(fp(), vec!["pop".into()]).unwrap();
        f.insert(HexId::new(8, 0, 0), "-", vec![Some(12.0)]).unwrap();
        assert_eq!(HexFrame::parse_csv(&f.to_csv_string()).unwrap(), f);
    }

    #[test]
    fn fingerprint_checked() {
        let f = sample();
        let other = GridSpec::default().fingerprint(7);
        assert!(matches!(f.check_grid(&other), Err(IngestError::GridMismatch { .. })));
    }

    #[test]
    fn rejects_mixed_resolution_and_bad_period() {
        let mut f = HexFrame::new(fp(), vec!["v".into()]).unwrap();
        assert!(f.insert(HexId::new(7, 0, 0), "-", vec![None]).is_err());
        assert!(f.insert(HexId::new(8, 0, 0), "18", vec![None]).is_err());
        assert!(f.insert(HexId::new(8, 0, 0), "2018-13-01", vec![None]).is_err());
        assert!(HexFrame::parse_csv("hex_id,period\n").is_err());
    }

    #[test]
    fn pivot_builds_temporal_vectors() {
        let mut f = HexFrame::new(fp(), vec!["ec".into()]).unwrap();
        let h = HexId::new(8, 1, 1);
        f.insert(h, "2006", vec![Some(1.0)]).unwrap();
        f.insert(h, "2007", vec![Some(2.0)]).unwrap();
        f.insert(HexId::new(8, 2, 1), "2007", vec![Some(5.0)]).unwrap();
        let p = f.pivot_periods().unwrap();
        assert_eq!(p.variables(), ["ec@2006", "ec@2007"]);
        assert_eq!(p.get(&h, "-").unwrap(), [Some(1.0), Some(2.0)]);
        assert_eq!(p.get(&HexId::new(8, 2, 1), "-").unwrap(), [None, Some(5.0)]);
    }

    proptest! {
        #[test]
        fn arbitrary_values_round_trip(vals in proptest::collection::vec(proptest::option::of(any::<f64>().prop_filter("finite", |v| v.is_finite())), 1..40)) {
            let mut f = HexFrame::new(fp(), vec!["x".into()]).unwrap();
            for (i, v) in vals.iter().enumerate() {
                f.insert(HexId::new(8, i as i64 - 20, 3), "-", vec![*v]).unwrap();
            }
            let text = f.to_csv_string();
            let back = HexFrame::parse_csv(&text).unwrap();
            prop_assert_eq!(back.to_csv_string(), text);
            for (k, v) in f.rows() {
                let b = back.get(&k.hex, &k.period).unwrap();
                prop_assert_eq!(b[0].map(f64::to_bits), v[0].map(f64::to_bits));
            }
        }
    }
}
