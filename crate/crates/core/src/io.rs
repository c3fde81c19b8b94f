//! CSV ingestion with row/column diagnostics.
//!
//! Files are UTF-8, comma separated, with a header row. The response column
//! must hold 0/1; covariates default to every other column (minus an
//! optional group column) in header order. The intercept is added on load
//! and must not appear in the file.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::datagen::format_value;
use crate::error::{Error, Result};
use crate::glm::{Dataset, INTERCEPT};

/// A CSV file held as raw strings, parsed lazily per column.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub origin: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn read_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| {
            Error::Schema(format!("{}: cannot open: {e}", path.display()))
        })?;
        Self::read(file, &path.display().to_string())
    }

    pub fn read<R: Read>(input: R, origin: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let columns: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Schema(format!("{origin}: bad header: {e}")))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if columns.is_empty() || columns.iter().all(String::is_empty) {
            return Err(Error::Schema(format!("{origin}: missing header row")));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = columns.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(Error::Schema(format!("{origin}: duplicate column `{dup}`")));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Schema(format!("{origin}: row {}: {e}", i + 1)))?;
            rows.push(rec.iter().map(|v| v.trim().to_string()).collect());
        }
        if rows.is_empty() {
            return Err(Error::Schema(format!("{origin}: no data rows")));
        }
        Ok(Self {
            origin: origin.to_string(),
            columns,
            rows,
        })
    }

    fn column_index(&self, name: &str) -> Result<usize> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| {
            Error::Schema(format!(
                "{}: missing column `{name}` (have: {})",
                self.origin,
                self.columns.join(", ")
            ))
        })
    }

    fn numeric(&self, row: usize, col: usize) -> Result<f64> {
        let raw = &self.rows[row][col];
        let where_ = || format!("{}: row {}, column `{}`", self.origin, row + 1, self.columns[col]);
        let v: f64 = raw
            .parse()
            .map_err(|_| Error::Schema(format!("{}: `{raw}` is not a number", where_())))?;
        if !v.is_finite() {
            return Err(Error::Schema(format!("{}: non-finite value `{raw}`", where_())));
        }
        Ok(v)
    }

    /// Splits rows by the string value of `column`, keyed in sorted order.
    pub fn split_by(&self, column: &str) -> Result<BTreeMap<String, RawTable>> {
        let g = self.column_index(column)?;
        let mut out: BTreeMap<String, RawTable> = BTreeMap::new();
        for row in &self.rows {
            out.entry(row[g].clone())
                .or_insert_with(|| RawTable {
                    origin: format!("{}[{column}={}]", self.origin, row[g]),
                    columns: self.columns.clone(),
                    rows: Vec::new(),
                })
                .rows
                .push(row.clone());
        }
        Ok(out)
    }
}

/// Which columns play which role.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schema {
    pub response: String,
    /// Explicit covariates; `None` means every remaining column.
    pub covariates: Option<Vec<String>>,
    pub group: Option<String>,
}

impl Schema {
    pub fn new(response: impl Into<String>) -> Self {
        Self {
            response: response.into(),
            covariates: None,
            group: None,
        }
    }

    pub fn covariate_names(&self, table: &RawTable) -> Vec<String> {
        match &self.covariates {
            Some(c) => c.clone(),
            None => table
                .columns
                .iter()
                .filter(|c| **c != self.response && Some(*c) != self.group.as_ref())
                .cloned()
                .collect(),
        }
    }
}

pub fn to_dataset(table: &RawTable, schema: &Schema) -> Result<Dataset> {
    if table.columns.iter().any(|c| c == INTERCEPT) {
        return Err(Error::Schema(format!(
            "{}: the intercept is added automatically; remove column `{INTERCEPT}`",
            table.origin
        )));
    }
    let y_col = table.column_index(&schema.response)?;
    let names = schema.covariate_names(table);
    if let Some(bad) = names.iter().find(|n| **n == schema.response) {
        return Err(Error::Schema(format!("response `{bad}` cannot also be a covariate")));
    }
    let cols: Vec<usize> = names.iter().map(|n| table.column_index(n)).collect::<Result<_>>()?;
    let n = table.rows.len();
    let mut x = DMatrix::zeros(n, cols.len());
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let v = table.numeric(i, y_col)?;
        if v != 0.0 && v != 1.0 {
            return Err(Error::Schema(format!(
                "{}: row {}, column `{}`: response must be 0 or 1, found `{}`",
                table.origin,
                i + 1,
                schema.response,
                table.rows[i][y_col]
            )));
        }
        y.push(v);
        for (j, &c) in cols.iter().enumerate() {
            x[(i, j)] = table.numeric(i, c)?;
        }
    }
    if n <= cols.len() {
        return Err(Error::Schema(format!(
            "{}: {n} rows is too few for {} coefficients",
            table.origin,
            cols.len() + 1
        )));
    }
    Dataset::from_covariates(&x, y, names)
}

pub fn read_dataset(path: &Path, schema: &Schema) -> Result<Dataset> {
    to_dataset(&RawTable::read_path(path)?, schema)
}

/// Writes covariates then the response, at full precision.
pub fn write_dataset<W: Write>(out: W, data: &Dataset, response: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = data.covariate_names().iter().map(String::as_str).collect();
    header.push(response);
    w.write_record(&header)?;
    let x = data.covariates();
    for (i, yi) in data.y().iter().enumerate() {
        let mut rec: Vec<String> = x.row(i).iter().map(|v| format_value(*v)).collect();
        rec.push(format_value(*yi));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
