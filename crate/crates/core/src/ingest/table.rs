//! Delimited tables with declared column kinds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Text,
    Number,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Number(f64),
    Missing,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }
}

/// Declared column kinds. Columns not listed use `default_kind`.
#[derive(Debug, Clone)]
pub struct Schema {
    kinds: BTreeMap<String, ColumnKind>,
    default_kind: ColumnKind,
}

impl Schema {
    pub fn new(columns: &[(&str, ColumnKind)]) -> Self {
        Self {
            kinds: columns.iter().map(|(n, k)| (n.to_string(), *k)).collect(),
            default_kind: ColumnKind::Text,
        }
    }

    pub fn with_default(mut self, kind: ColumnKind) -> Self {
        self.default_kind = kind;
        self
    }

    fn kind_of(&self, name: &str) -> ColumnKind {
        self.kinds.get(name).copied().unwrap_or(self.default_kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<Column>) -> Result<Self, IngestError> {
        let mut seen = std::collections::BTreeSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(IngestError::DuplicateColumn(c.name.clone()));
            }
        }
        Ok(Self {
            columns,
            rows: Vec::new(),
        })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn push_row(&mut self, row: Vec<Cell>) -> Result<(), IngestError> {
        if row.len() != self.columns.len() {
            return Err(IngestError::Ragged {
                line: self.rows.len() + 2,
                expected: self.columns.len(),
                found: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.columns.iter().map(|c| quote_field(&c.name)).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Text(s) => quote_field(s),
                    Cell::Number(v) => crate::hexgrid::format_f64(*v),
                    Cell::Missing => "NA".to_string(),
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

pub(crate) fn quote_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) || s == "NA" || s.is_empty() {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One parsed record with the 1-based line number it started on.
pub(crate) struct Record {
    pub line: usize,
    pub fields: Vec<RawField>,
}

pub(crate) struct RawField {
    pub text: String,
    pub quoted: bool,
}

/// Minimal RFC-4180 reader: comma separated, quoted fields with doubled
/// quotes, CRLF or LF line ends. A blank line is a record with one empty
/// field.
pub(crate) fn parse_records(text: &str, first_line: usize) -> Result<Vec<Record>, IngestError> {
    let mut records = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line = first_line;
    while chars.peek().is_some() {
        let start_line = line;
        let mut fields = Vec::new();
        let mut field = String::new();
        let mut quoted = false;
        loop {
            match chars.next() {
                None => {
                    fields.push(RawField { text: std::mem::take(&mut field), quoted });
                    break;
                }
                Some('"') if field.is_empty() && !quoted => {
                    quoted = true;
                    loop {
                        match chars.next() {
                            None => return Err(IngestError::UnterminatedQuote { line: start_line }),
                            Some('"') if chars.peek() == Some(&'"') => {
                                chars.next();
                                field.push('"');
                            }
                            Some('"') => break,
                            Some(c) => {
                                if c == '\n' {
                                    line += 1;
                                }
                                field.push(c);
                            }
                        }
                    }
                    match chars.peek() {
                        None | Some(',') | Some('\n') | Some('\r') => {}
                        Some(_) => return Err(IngestError::UnterminatedQuote { line: start_line }),
                    }
                }
                Some(',') => {
                    fields.push(RawField { text: std::mem::take(&mut field), quoted });
                    quoted = false;
                }
                Some('\r') if chars.peek() == Some(&'\n') => {}
                Some('\n') => {
                    fields.push(RawField { text: std::mem::take(&mut field), quoted });
                    line += 1;
                    break;
                }
                Some(c) => field.push(c),
            }
        }
        records.push(Record { line: start_line, fields });
    }
    Ok(records)
}

pub(crate) fn is_missing_token(f: &RawField) -> bool {
    !f.quoted && (f.text.is_empty() || f.text == "NA")
}

pub(crate) fn parse_number(s: &str) -> Option<f64> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    t.parse::<f64>().ok()
}

/// Parses CSV text with a header row.
pub fn parse_csv(text: &str, schema: &Schema) -> Result<Table, IngestError> {
    let mut records = parse_records(text, 1)?.into_iter();
    let header = records.next().ok_or(IngestError::Empty)?;
    let columns: Vec<Column> = header
        .fields
        .iter()
        .map(|f| Column {
            name: f.text.trim().to_string(),
            kind: schema.kind_of(f.text.trim()),
        })
        .collect();
    for declared in schema.kinds.keys() {
        if !columns.iter().any(|c| &c.name == declared) {
            return Err(IngestError::MissingColumn(declared.clone()));
        }
    }
    let mut table = Table::new(columns)?;
    for rec in records {
        if rec.fields.len() != table.columns.len() {
            return Err(IngestError::Ragged {
                line: rec.line,
                expected: table.columns.len(),
                found: rec.fields.len(),
            });
        }
        let mut row = Vec::with_capacity(rec.fields.len());
        for (f, col) in rec.fields.iter().zip(&table.columns) {
            if is_missing_token(f) {
                row.push(Cell::Missing);
                continue;
            }
            row.push(match col.kind {
                ColumnKind::Text => Cell::Text(f.text.clone()),
                ColumnKind::Number => match parse_number(&f.text) {
                    Some(v) => Cell::Number(v),
                    None => {
                        return Err(IngestError::NotNumeric {
                            line: rec.line,
                            column: col.name.clone(),
                            value: f.text.clone(),
                        })
                    }
                },
            });
        }
        table.rows.push(row);
    }
    Ok(table)
}

pub fn read_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Table, IngestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    parse_csv(&text, schema)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn typed_columns() {
        let schema = Schema::new(&[("a", ColumnKind::Number), ("b", ColumnKind::Text)]);
        let t = parse_csv("a,b\n1,x\n2,y", &schema).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.rows[1], vec![Cell::Number(2.0), Cell::Text("y".into())]);
    }

    #[test]
    fn blank_line_is_a_missing_value() {
        let schema = Schema::new(&[("a", ColumnKind::Number)]);
        let t = parse_csv("a\n\n", &schema).unwrap();
        assert_eq!(t.rows, vec![vec![Cell::Missing]]);
    }

    #[test]
    fn ragged_row_rejected_with_line() {
        let schema = Schema::new(&[("a", ColumnKind::Number)]);
        let err = parse_csv("a\n1,2", &schema).unwrap_err();
        assert!(matches!(err, IngestError::Ragged { line: 2, expected: 1, found: 2 }));
    }

    #[test]
    fn non_numeric_rejected() {
        let schema = Schema::new(&[("a", ColumnKind::Number)]);
        let err = parse_csv("a\n1\nabc\n", &schema).unwrap_err();
        assert!(matches!(err, IngestError::NotNumeric { line: 3, .. }));
    }

    #[test]
    fn quoting_and_missing_markers() {
        let schema = Schema::new(&[("n", ColumnKind::Number)]);
        let t = parse_csv("s,n\n\"a,\"\"b\"\"\",NA\n\"NA\",3\r\n,\n", &schema).unwrap();
        assert_eq!(t.rows[0], vec![Cell::Text("a,\"b\"".into()), Cell::Missing]);
        assert_eq!(t.rows[1], vec![Cell::Text("NA".into()), Cell::Number(3.0)]);
        assert_eq!(t.rows[2], vec![Cell::Missing, Cell::Missing]);
    }

    #[test]
    fn unterminated_quote() {
        let err = parse_csv("a\n\"abc\n", &Schema::new(&[])).unwrap_err();
        assert!(matches!(err, IngestError::UnterminatedQuote { line: 2 }));
    }

    #[test]
    fn declared_column_must_exist() {
        let schema = Schema::new(&[("z", ColumnKind::Number)]);
        assert!(matches!(parse_csv("a\n1\n", &schema), Err(IngestError::MissingColumn(_))));
    }

    #[test]
    fn duplicate_header_rejected() {
        assert!(matches!(parse_csv("a,a\n1,2\n", &Schema::new(&[])), Err(IngestError::DuplicateColumn(_))));
    }

    #[test]
    fn csv_writer_round_trips() {
        let schema = Schema::new(&[("n", ColumnKind::Number)]);
        let t = parse_csv("s,n\n\"x,y\",1.5\nplain,NA\n\"\",2\n", &schema).unwrap();
        let again = parse_csv(&t.to_csv_string(), &schema).unwrap();
        assert_eq!(t, again);
    }
}
