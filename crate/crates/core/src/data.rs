//! Categorical schema and integer-coded datasets.
//!
//! Cells hold category codes `1..=d_j`; code `0` marks a missing cell. On disk
//! the data is a headed CSV with the token `NA` (any case) for missing cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Code used for a missing cell.
pub const MISSING: u32 = 0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalSchema {
    cardinalities: Vec<u32>,
}

impl CategoricalSchema {
    pub fn new(cardinalities: Vec<u32>) -> Result<Self> {
        if cardinalities.is_empty() {
            return Err(Error::Invalid("schema needs at least one variable".into()));
        }
        if let Some((j, d)) = cardinalities.iter().enumerate().find(|(_, d)| **d < 2) {
            return Err(Error::Invalid(format!(
                "variable {} has {} categories; at least 2 are required",
                j + 1,
                d
            )));
        }
        Ok(Self { cardinalities })
    }

    /// All variables binary.
    pub fn binary(p: usize) -> Self {
        Self {
            cardinalities: vec![2; p.max(1)],
        }
    }

    pub fn p(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn cardinalities(&self) -> &[u32] {
        &self.cardinalities
    }

    pub fn cardinality(&self, j: usize) -> u32 {
        self.cardinalities[j]
    }

    /// Number of cells of the full contingency table, saturating at `u128::MAX`.
    pub fn table_size(&self) -> u128 {
        self.cardinalities
            .iter()
            .fold(1u128, |acc, d| acc.saturating_mul(*d as u128))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    schema: CategoricalSchema,
    names: Vec<String>,
    n: usize,
    cells: Vec<u32>,
}

impl Dataset {
    /// Builds a dataset from row-major cells, validating codes against the schema.
    pub fn new(schema: CategoricalSchema, names: Vec<String>, cells: Vec<u32>) -> Result<Self> {
        let p = schema.p();
        if names.len() != p {
            return Err(Error::Invalid(format!(
                "{} column names for {} variables",
                names.len(),
                p
            )));
        }
        if cells.is_empty() || cells.len() % p != 0 {
            return Err(Error::Invalid(format!(
                "cell count {} is not a positive multiple of p = {}",
                cells.len(),
                p
            )));
        }
        for (idx, &c) in cells.iter().enumerate() {
            let j = idx % p;
            if c > schema.cardinality(j) {
                return Err(Error::Parse {
                    row: idx / p + 1,
                    column: names[j].clone(),
                    message: format!("code {} exceeds d = {}", c, schema.cardinality(j)),
                });
            }
        }
        let n = cells.len() / p;
        Ok(Self {
            schema,
            names,
            n,
            cells,
        })
    }

    /// Dataset with generated column names `V1..Vp`.
    pub fn from_rows(schema: CategoricalSchema, rows: &[Vec<u32>]) -> Result<Self> {
        let p = schema.p();
        if let Some(bad) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::Invalid(format!("row {} has wrong length", bad + 1)));
        }
        let names = (1..=p).map(|j| format!("V{j}")).collect();
        Self::new(schema, names, rows.concat())
    }

    pub fn schema(&self) -> &CategoricalSchema {
        &self.schema
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.schema.p()
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.cells[i * self.p() + j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        let p = self.p();
        &self.cells[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.cells.chunks(self.p())
    }

    pub fn cells(&self) -> &[u32] {
        &self.cells
    }

    /// Observation indicator `r_ij`.
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.get(i, j) != MISSING
    }

    pub fn missing_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c == MISSING).count()
    }

    pub fn is_complete(&self) -> bool {
        self.missing_count() == 0
    }

    /// Returns a copy with cell `(i, j)` replaced. Codes are re-validated.
    pub fn with_cells(&self, cells: Vec<u32>) -> Result<Self> {
        Self::new(self.schema.clone(), self.names.clone(), cells)
    }

    /// Canonical CSV: header, comma separated, `NA` for missing cells.
    pub fn to_csv(&self) -> String {
        let mut out = self.names.join(",");
        out.push('\n');
        for row in self.rows() {
            let line: Vec<String> = row
                .iter()
                .map(|&c| {
                    if c == MISSING {
                        "NA".to_string()
                    } else {
                        c.to_string()
                    }
                })
                .collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Parses a headed CSV of positive integer codes and `NA` tokens.
///
/// Without a schema, `d_j` is the largest code observed in column `j`.
pub fn parse_dataset(text: &str, schema: Option<&CategoricalSchema>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let names: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let p = names.len();
    if p == 0 || (p == 1 && names[0].is_empty()) {
        return Err(Error::Invalid("CSV header is empty".into()));
    }
    if let Some(s) = schema {
        if s.p() != p {
            return Err(Error::Invalid(format!(
                "schema declares {} variables but the header has {}",
                s.p(),
                p
            )));
        }
    }

    let mut cells = Vec::new();
    let mut max_code = vec![0u32; p];
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != p {
            return Err(Error::Parse {
                row,
                column: names.get(record.len().min(p - 1)).cloned().unwrap_or_default(),
                message: format!("expected {} fields, found {}", p, record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let code = if field.eq_ignore_ascii_case("NA") {
                MISSING
            } else {
                match field.parse::<u32>() {
                    Ok(v) if v >= 1 => v,
                    _ => {
                        return Err(Error::Parse {
                            row,
                            column: names[j].clone(),
                            message: format!("'{field}' is not a positive integer or NA"),
                        })
                    }
                }
            };
            if let Some(s) = schema {
                if code > s.cardinality(j) {
                    return Err(Error::Parse {
                        row,
                        column: names[j].clone(),
                        message: format!("code {} exceeds declared d = {}", code, s.cardinality(j)),
                    });
                }
            }
            max_code[j] = max_code[j].max(code);
            cells.push(code);
        }
    }
    if cells.is_empty() {
        return Err(Error::Invalid("CSV contains no data rows".into()));
    }

    let schema = match schema {
        Some(s) => s.clone(),
        None => {
            if let Some(j) = max_code.iter().position(|&d| d < 2) {
                return Err(Error::Invalid(format!(
                    "column {} inferred d = {} < 2",
                    names[j], max_code[j]
                )));
            }
            CategoricalSchema::new(max_code)?
        }
    };
    Dataset::new(schema, names, cells)
}
