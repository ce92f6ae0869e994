//! Dense row-major decision matrix: one row per evaluated object, one column
//! per indicator.

use std::io::{Read, Write};

use thiserror::Error;

use crate::schema::FeatureSchema;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("matrix shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value at row `{row}`, column `{column}`")]
    NonFinite { row: String, column: String },
    #[error("column `{0}` is not declared in the schema")]
    UnknownColumn(String),
    #[error("schema indicator `{0}` has no column in the matrix")]
    MissingColumn(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {line}: cannot parse `{value}` as a number")]
    Parse { line: usize, value: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionMatrix {
    row_ids: Vec<String>,
    columns: Vec<String>,
    data: Vec<f64>,
}

impl DecisionMatrix {
    /// Builds a matrix from rows. Every row must have `columns.len()` finite cells.
    pub fn from_rows(row_ids: Vec<String>, columns: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, MatrixError> {
        if row_ids.len() != rows.len() {
            return Err(MatrixError::Shape(format!("{} row ids for {} rows", row_ids.len(), rows.len())));
        }
        let m = columns.len();
        let mut data = Vec::with_capacity(rows.len() * m);
        for (id, row) in row_ids.iter().zip(&rows) {
            if row.len() != m {
                return Err(MatrixError::Shape(format!("row `{id}` has {} cells, expected {m}", row.len())));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(MatrixError::NonFinite { row: id.clone(), column: columns[j].clone() });
                }
            }
            data.extend_from_slice(row);
        }
        Ok(DecisionMatrix { row_ids, columns, data })
    }

    /// Rows named `0..n` in order.
    pub fn from_unnamed_rows(columns: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, MatrixError> {
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::from_rows(ids, columns, rows)
    }

    pub(crate) fn from_columns(row_ids: Vec<String>, columns: Vec<String>, cols: &[Vec<f64>]) -> Self {
        let n = row_ids.len();
        let m = columns.len();
        let mut data = vec![0.0; n * m];
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                data[i * m + j] = v;
            }
        }
        DecisionMatrix { row_ids, columns, data }
    }

    pub fn nrows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.ncols();
        &self.data[i * m..(i + 1) * m]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows()).map(|i| self.get(i, j)).collect()
    }

    pub fn column_vecs(&self) -> Vec<Vec<f64>> {
        (0..self.ncols()).map(|j| self.column(j)).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.ncols().max(1)).take(self.nrows())
    }

    /// New matrix with the given columns, in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> DecisionMatrix {
        let cols: Vec<Vec<f64>> = idx.iter().map(|&j| self.column(j)).collect();
        let names = idx.iter().map(|&j| self.columns[j].clone()).collect();
        DecisionMatrix::from_columns(self.row_ids.clone(), names, &cols)
    }

    /// Appends one row in place.
    pub fn push_row(&mut self, id: impl Into<String>, row: &[f64]) -> Result<(), MatrixError> {
        let id = id.into();
        if row.len() != self.ncols() {
            return Err(MatrixError::Shape(format!("row `{id}` has {} cells, expected {}", row.len(), self.ncols())));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(MatrixError::NonFinite { row: id, column: self.columns[j].clone() });
        }
        self.data.extend_from_slice(row);
        self.row_ids.push(id);
        Ok(())
    }

    /// Reorders columns to the schema's declaration order. Every column must
    /// be a schema indicator and every indicator must be present.
    pub fn conform_to(&self, schema: &FeatureSchema) -> Result<DecisionMatrix, MatrixError> {
        for c in &self.columns {
            if schema.get(c).is_none() {
                return Err(MatrixError::UnknownColumn(c.clone()));
            }
        }
        let idx = schema
            .names()
            .map(|n| self.columns.iter().position(|c| c == n).ok_or_else(|| MatrixError::MissingColumn(n.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.select_columns(&idx))
    }

    /// Reads CSV with a header row; the first column holds row ids.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, MatrixError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 2 {
            return Err(MatrixError::Shape("need a row-id column and at least one indicator".into()));
        }
        let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            ids.push(rec.get(0).unwrap_or_default().to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|_| MatrixError::Parse { line: line + 2, value: v.into() }))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Self::from_rows(ids, columns, rows)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), MatrixError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["row_id".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (i, id) in self.row_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
