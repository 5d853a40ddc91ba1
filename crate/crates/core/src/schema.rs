//! Tabular schema, records, discretization and CSV ingestion.
//!
//! Numerical cells are stored as raw reals and discretized on demand with
//! [`bin_index`]; every marginal query works on bins. The schema is always
//! read from a standalone JSON document and never inferred from data, since it
//! is the only information that may be shared with a generator for free.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Kind and domain of a single column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ColumnKind {
    Categorical { domain: Vec<String> },
    Numerical {
        min: f64,
        max: f64,
        #[serde(rename = "bins")]
        bin_count: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn categorical(name: impl Into<String>, domain: &[&str]) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Categorical { domain: domain.iter().map(|s| s.to_string()).collect() },
        }
    }

    pub fn numerical(name: impl Into<String>, min: f64, max: f64, bin_count: usize) -> Self {
        ColumnSpec { name: name.into(), kind: ColumnKind::Numerical { min, max, bin_count } }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, ColumnKind::Categorical { .. })
    }

    /// Number of bins (categorical: domain size).
    pub fn size(&self) -> usize {
        match &self.kind {
            ColumnKind::Categorical { domain } => domain.len(),
            ColumnKind::Numerical { bin_count, .. } => *bin_count,
        }
    }

    /// Closed-open value interval `[lo, hi)` covered by a numerical bin.
    pub fn bin_bounds(&self, bin: usize) -> Option<(f64, f64)> {
        match self.kind {
            ColumnKind::Numerical { min, max, bin_count } => {
                let width = (max - min) / bin_count as f64;
                let lo = min + width * bin as f64;
                let hi = if bin + 1 == bin_count { max } else { min + width * (bin + 1) as f64 };
                Some((lo, hi))
            }
            ColumnKind::Categorical { .. } => None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::InvalidSchema("empty column name".into()));
        }
        match &self.kind {
            ColumnKind::Categorical { domain } => {
                let distinct: HashSet<&String> = domain.iter().collect();
                if distinct.len() != domain.len() {
                    return Err(Error::InvalidSchema(format!("column `{}` has repeated domain values", self.name)));
                }
                if domain.len() < 2 {
                    return Err(Error::InvalidSchema(format!("column `{}` needs at least 2 domain values", self.name)));
                }
            }
            ColumnKind::Numerical { min, max, bin_count } => {
                if !min.is_finite() || !max.is_finite() || min >= max {
                    return Err(Error::InvalidSchema(format!("column `{}` needs finite min < max", self.name)));
                }
                if *bin_count == 0 {
                    return Err(Error::InvalidSchema(format!("column `{}` needs bins >= 1", self.name)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub name: String,
    pub columns: Vec<ColumnSpec>,
}

impl TableSchema {
    pub fn new(name: impl Into<String>, columns: Vec<ColumnSpec>) -> Result<Self> {
        let schema = TableSchema { name: name.into(), columns };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: TableSchema =
            serde_json::from_str(text).map_err(|e| Error::InvalidSchema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::InvalidSchema("schema has no columns".into()));
        }
        let mut seen = HashSet::new();
        for col in &self.columns {
            col.validate()?;
            if !seen.insert(col.name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate column `{}`", col.name)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Hex SHA-256 of the canonical JSON form; identifies the schema in caches.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("schema serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Checks arity, categorical index range and numerical range.
    pub fn validate_record(&self, record: &Record) -> std::result::Result<(), String> {
        if record.values.len() != self.columns.len() {
            return Err(format!("arity {} != {}", record.values.len(), self.columns.len()));
        }
        for (col, cell) in self.columns.iter().zip(&record.values) {
            match (&col.kind, cell) {
                (ColumnKind::Categorical { domain }, Cell::Cat(i)) => {
                    if (*i as usize) >= domain.len() {
                        return Err(format!("index {} out of range for `{}`", i, col.name));
                    }
                }
                (ColumnKind::Numerical { min, max, .. }, Cell::Num(v)) => {
                    if !(v >= min && v <= max) {
                        return Err(format!("value {} outside [{}, {}] for `{}`", v, min, max, col.name));
                    }
                }
                _ => return Err(format!("cell kind mismatch for `{}`", col.name)),
            }
        }
        Ok(())
    }

    /// Binned coordinates of a record.
    pub fn bins_of(&self, record: &Record) -> Vec<usize> {
        self.columns.iter().zip(&record.values).map(|(c, v)| bin_index(c, v)).collect()
    }
}

/// One table cell: a categorical domain index or a raw real.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Cat(u32),
    Num(f64),
}

impl Cell {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Cat(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub values: Vec<Cell>,
}

impl Record {
    pub fn new(values: Vec<Cell>) -> Self {
        Record { values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Private,
    Synthetic,
    Public,
    Generated,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Provenance::Private => "private",
            Provenance::Synthetic => "synthetic",
            Provenance::Public => "public",
            Provenance::Generated => "generated",
        };
        f.write_str(s)
    }
}

/// How out-of-range numerical values are handled at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClampPolicy {
    Clamp,
    Reject,
}

impl ClampPolicy {
    /// Generated data is untrusted and clamped; private data errors are schema mistakes.
    pub fn default_for(provenance: Provenance) -> Self {
        match provenance {
            Provenance::Private => ClampPolicy::Reject,
            _ => ClampPolicy::Clamp,
        }
    }
}

/// Immutable, schema-validated collection of records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Arc<TableSchema>,
    rows: Vec<Record>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(schema: Arc<TableSchema>, rows: Vec<Record>, provenance: Provenance) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            schema
                .validate_record(row)
                .map_err(|reason| Error::MalformedRow { row: i + 1, reason })?;
        }
        Ok(Dataset { schema, rows, provenance })
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<TableSchema> {
        &self.schema
    }

    pub fn rows(&self) -> &[Record] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Same rows under a different provenance tag.
    pub fn retag(self, provenance: Provenance) -> Self {
        Dataset { provenance, ..self }
    }

    pub fn into_rows(self) -> Vec<Record> {
        self.rows
    }

    /// Writes the dataset as CSV with a header in schema order.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file)
    }

    pub fn write_csv_to<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(self.schema.columns.iter().map(|c| c.name.as_str()))?;
        for row in &self.rows {
            writer.write_record(row.values.iter().zip(&self.schema.columns).map(|(cell, col)| format_cell(col, cell)))?;
        }
        writer.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Renders a cell the way it appears in CSV and JSONL files.
pub fn format_cell(col: &ColumnSpec, cell: &Cell) -> String {
    match (&col.kind, cell) {
        (ColumnKind::Categorical { domain }, Cell::Cat(i)) => domain[*i as usize].clone(),
        (_, Cell::Num(v)) => format!("{v}"),
        (_, Cell::Cat(i)) => i.to_string(),
    }
}

/// Parses one textual cell, applying the clamp policy to numerical values.
pub fn parse_cell(col: &ColumnSpec, text: &str, policy: ClampPolicy, row: usize) -> Result<Cell> {
    match &col.kind {
        ColumnKind::Categorical { domain } => domain
            .iter()
            .position(|d| d == text)
            .map(|i| Cell::Cat(i as u32))
            .ok_or_else(|| Error::UnknownCategoricalValue {
                column: col.name.clone(),
                value: text.to_string(),
                row,
            }),
        ColumnKind::Numerical { min, max, .. } => {
            let v: f64 = text.trim().parse().map_err(|_| Error::MalformedRow {
                row,
                reason: format!("`{}` is not a number in column `{}`", text, col.name),
            })?;
            numeric_cell(col, *min, *max, v, policy, row)
        }
    }
}

pub(crate) fn numeric_cell(col: &ColumnSpec, min: f64, max: f64, v: f64, policy: ClampPolicy, row: usize) -> Result<Cell> {
    if !v.is_finite() {
        return Err(Error::MalformedRow { row, reason: format!("non-finite value in column `{}`", col.name) });
    }
    if v < min || v > max {
        return match policy {
            ClampPolicy::Clamp => Ok(Cell::Num(v.clamp(min, max))),
            ClampPolicy::Reject => Err(Error::MalformedRow {
                row,
                reason: format!("value {} outside [{}, {}] in column `{}`", v, min, max, col.name),
            }),
        };
    }
    Ok(Cell::Num(v))
}

/// Reads a CSV file whose header is a permutation of the schema's column names.
///
/// Row numbers in errors are 1-based data rows (the header is not counted).
pub fn load_dataset(
    path: impl AsRef<Path>,
    schema: Arc<TableSchema>,
    clamp_policy: ClampPolicy,
    provenance: Provenance,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, schema, clamp_policy, provenance)
}

pub fn read_dataset<R: std::io::Read>(
    input: R,
    schema: Arc<TableSchema>,
    clamp_policy: ClampPolicy,
    provenance: Provenance,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let header = reader.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::EmptyFile);
    }
    let positions: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
    if positions.len() != header.len() {
        return Err(Error::MalformedRow { row: 0, reason: "duplicate header name".into() });
    }
    let mut source_index = Vec::with_capacity(schema.len());
    for col in &schema.columns {
        match positions.get(col.name.as_str()) {
            Some(&i) => source_index.push(i),
            None => return Err(Error::MissingColumn(col.name.clone())),
        }
    }
    if header.len() != schema.len() {
        let extra: Vec<&str> = header.iter().filter(|h| schema.column_index(h).is_none()).collect();
        return Err(Error::MalformedRow { row: 0, reason: format!("unexpected columns {extra:?}") });
    }

    let mut rows = Vec::new();
    for (i, result) in reader.records().enumerate() {
        let row_no = i + 1;
        let raw = result.map_err(|e| Error::MalformedRow { row: row_no, reason: e.to_string() })?;
        if raw.len() != header.len() {
            return Err(Error::MalformedRow {
                row: row_no,
                reason: format!("expected {} fields, found {}", header.len(), raw.len()),
            });
        }
        let values = schema
            .columns
            .iter()
            .zip(&source_index)
            .map(|(col, &src)| parse_cell(col, &raw[src], clamp_policy, row_no))
            .collect::<Result<Vec<_>>>()?;
        rows.push(Record { values });
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }
    Dataset::new(schema, rows, provenance)
}

/// Bin of a valid cell: the domain index for categoricals, the equal-width
/// bin for numericals with `max` closing the last bin.
pub fn bin_index(col: &ColumnSpec, value: &Cell) -> usize {
    match (&col.kind, value) {
        (ColumnKind::Categorical { .. }, Cell::Cat(i)) => *i as usize,
        (ColumnKind::Numerical { min, max, bin_count }, Cell::Num(v)) => {
            let width = (max - min) / *bin_count as f64;
            let b = ((v - min) / width).floor();
            if b <= 0.0 {
                0
            } else {
                (b as usize).min(bin_count - 1)
            }
        }
        _ => panic!("cell kind does not match column `{}`", col.name),
    }
}

/// Per-column binned sizes and their product.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainSize {
    pub sizes: Vec<usize>,
    pub total: u128,
}

pub const DEFAULT_DOMAIN_CAP: u128 = 1_000_000_000_000;

pub fn domain_size(schema: &TableSchema, cap: u128) -> Result<DomainSize> {
    let sizes: Vec<usize> = schema.columns.iter().map(ColumnSpec::size).collect();
    let mut total: u128 = 1;
    for &s in &sizes {
        total = total.checked_mul(s as u128).filter(|t| *t <= cap).ok_or(Error::OverflowGuard { cap })?;
    }
    Ok(DomainSize { sizes, total })
}
