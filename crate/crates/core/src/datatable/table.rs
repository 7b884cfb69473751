use std::collections::HashSet;
use std::fs;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use chrono::{Datelike, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Quantitative,
    Nominal,
    Temporal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    name: String,
    raw: Vec<String>,
    kind: ColumnType,
    /// Parsed values; empty for nominal columns.
    values: Vec<f64>,
    label: bool,
}

pub fn is_blank(cell: &str) -> bool {
    cell.trim().is_empty()
}

pub fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Temporal heuristic: a 4-digit integer in `[1000, 2999]` (a year) or an
/// ISO-8601 date / date-time. Returns fractional years.
pub fn parse_temporal(cell: &str) -> Option<f64> {
    let s = cell.trim();
    if s.len() == 4 && s.bytes().all(|b| b.is_ascii_digit()) {
        let year: i32 = s.parse().ok()?;
        return (1000..=2999).contains(&year).then_some(year as f64);
    }
    let date = NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .or_else(|| {
            NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
                .ok()
                .map(|dt| dt.date())
        })?;
    let days = if date.leap_year() { 366.0 } else { 365.0 };
    Some(date.year() as f64 + date.ordinal0() as f64 / days)
}

/// Pure function of the raw cells.
pub fn infer_type(raw: &[String]) -> ColumnType {
    if raw.is_empty() || raw.iter().any(|c| is_blank(c)) {
        return ColumnType::Nominal;
    }
    if raw.iter().all(|c| parse_temporal(c).is_some()) {
        return ColumnType::Temporal;
    }
    if raw.iter().all(|c| parse_number(c).is_some()) {
        return ColumnType::Quantitative;
    }
    ColumnType::Nominal
}

impl Column {
    pub fn new(name: impl Into<String>, raw: Vec<String>) -> Self {
        let kind = infer_type(&raw);
        let values = match kind {
            ColumnType::Quantitative => raw.iter().filter_map(|c| parse_number(c)).collect(),
            ColumnType::Temporal => raw.iter().filter_map(|c| parse_temporal(c)).collect(),
            ColumnType::Nominal => Vec::new(),
        };
        Self {
            name: name.into(),
            raw,
            kind,
            values,
            label: false,
        }
    }

    pub fn with_label(mut self, label: bool) -> Self {
        self.label = label;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn raw(&self) -> &[String] {
        &self.raw
    }

    pub fn kind(&self) -> ColumnType {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_label(&self) -> bool {
        self.label
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Number of distinct non-blank raw cells.
    pub fn cardinality(&self) -> usize {
        self.raw
            .iter()
            .filter(|c| !is_blank(c))
            .map(|c| c.trim())
            .collect::<HashSet<_>>()
            .len()
    }

    pub fn missing_count(&self) -> usize {
        self.raw.iter().filter(|c| is_blank(c)).count()
    }

    /// Every cell that parses as a number, whatever the inferred type.
    pub fn numeric_cells(&self) -> Vec<f64> {
        match self.kind {
            ColumnType::Temporal => self.values.clone(),
            _ => self.raw.iter().filter_map(|c| parse_number(c)).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Name given to the table; defaults to the file stem.
    pub name: Option<String>,
    /// Columns flagged as labels (excluded from matrices).
    pub label_columns: Vec<String>,
}

/// Immutable columnar table. Columns are shared, so edits copy only the
/// column they touch.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    name: String,
    columns: Vec<Arc<Column>>,
    rows: usize,
}

impl DataTable {
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Result<Self> {
        let rows = columns.first().map_or(0, Column::len);
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.clone()) {
                return Err(Error::DuplicateHeader(c.name.clone()));
            }
            if c.len() != rows {
                return Err(Error::ShapeMismatch(format!(
                    "column `{}` has {} cells, expected {rows}",
                    c.name,
                    c.len()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            columns: columns.into_iter().map(Arc::new).collect(),
            rows,
        })
    }

    pub fn from_records(
        name: impl Into<String>,
        header: &[String],
        records: &[Vec<String>],
        options: &LoadOptions,
    ) -> Result<Self> {
        if header.is_empty() {
            return Err(Error::EmptyTable);
        }
        let mut seen = HashSet::new();
        for h in header {
            if !seen.insert(h.as_str()) {
                return Err(Error::DuplicateHeader(h.clone()));
            }
        }
        let mut cells: Vec<Vec<String>> = vec![Vec::with_capacity(records.len()); header.len()];
        for (i, rec) in records.iter().enumerate() {
            if rec.len() != header.len() {
                return Err(Error::RaggedRows {
                    row: i + 1,
                    expected: header.len(),
                    found: rec.len(),
                });
            }
            for (col, cell) in cells.iter_mut().zip(rec) {
                col.push(cell.clone());
            }
        }
        if records.is_empty() {
            return Err(Error::EmptyTable);
        }
        let columns = header
            .iter()
            .zip(cells)
            .map(|(h, raw)| Column::new(h.clone(), raw).with_label(options.label_columns.contains(h)))
            .collect();
        Self::new(name, columns)
    }

    pub fn parse_csv<R: Read>(reader: R, name: &str, options: &LoadOptions) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut rows = rdr.records();
        let header: Vec<String> = match rows.next() {
            Some(r) => r?.iter().map(str::to_string).collect(),
            None => return Err(Error::EmptyTable),
        };
        let records = rows
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect::<Vec<_>>()))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let name = options.name.clone().unwrap_or_else(|| name.to_string());
        Self::from_records(name, &header, &records, options)
    }

    pub fn load_csv(path: &Path, options: &LoadOptions) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse_csv(file, &stem, options)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for r in 0..self.rows {
            w.write_record(self.columns.iter().map(|c| c.raw[r].as_str()))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::io("<memory>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv input was utf-8"))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> impl ExactSizeIterator<Item = &Column> {
        self.columns.iter().map(|c| c.as_ref())
    }

    pub fn column_at(&self, idx: usize) -> &Column {
        &self.columns[idx]
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.as_ref())
            .ok_or_else(|| Error::NoSuchColumn(name.to_string()))
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::NoSuchColumn(name.to_string()))
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    #[cfg(test)]
    pub(crate) fn shares_column(&self, other: &DataTable, idx: usize) -> bool {
        Arc::ptr_eq(&self.columns[idx], &other.columns[idx])
    }

    /// Returns a copy with one cell replaced; the touched column's type is
    /// re-inferred. `self` is unchanged.
    pub fn set_cell(&self, column: &str, row: usize, text: &str) -> Result<DataTable> {
        let idx = self.column_index(column)?;
        if row >= self.rows {
            return Err(Error::RowOutOfRange {
                row,
                rows: self.rows,
            });
        }
        let old = &self.columns[idx];
        let mut raw = old.raw.clone();
        raw[row] = text.to_string();
        let replaced = Column::new(old.name.clone(), raw).with_label(old.label);
        let mut columns = self.columns.clone();
        columns[idx] = Arc::new(replaced);
        Ok(DataTable {
            name: self.name.clone(),
            columns,
            rows: self.rows,
        })
    }

    /// Returns a copy with the columns reordered: column `i` of the result is
    /// column `order[i]` of `self`.
    pub fn permute_columns(&self, order: &[usize]) -> Result<DataTable> {
        let mut seen = vec![false; self.width()];
        if order.len() != self.width() {
            return Err(Error::BadParameters("permutation length".into()));
        }
        for &i in order {
            if i >= self.width() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::BadParameters("not a permutation".into()));
            }
        }
        Ok(DataTable {
            name: self.name.clone(),
            columns: order.iter().map(|&i| self.columns[i].clone()).collect(),
            rows: self.rows,
        })
    }

    /// Returns a copy with one extra row appended.
    pub fn append_row(&self, cells: &[String]) -> Result<DataTable> {
        if cells.len() != self.width() {
            return Err(Error::RaggedRows {
                row: self.rows + 1,
                expected: self.width(),
                found: cells.len(),
            });
        }
        let columns = self
            .columns
            .iter()
            .zip(cells)
            .map(|(c, cell)| {
                let mut raw = c.raw.clone();
                raw.push(cell.clone());
                Arc::new(Column::new(c.name.clone(), raw).with_label(c.label))
            })
            .collect();
        Ok(DataTable {
            name: self.name.clone(),
            columns,
            rows: self.rows + 1,
        })
    }

    /// Returns a copy keeping only the named columns, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<DataTable> {
        let columns = names
            .iter()
            .map(|n| self.column_index(n).map(|i| self.columns[i].clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(DataTable {
            name: self.name.clone(),
            columns,
            rows: self.rows,
        })
    }
}
