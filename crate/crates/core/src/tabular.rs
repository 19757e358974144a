//! Numeric tables and Pearson correlation.
//!
//! Tables are dense f64 matrices with named columns, stored column
//! major. CSV is the only on-disk format: UTF-8, comma separated,
//! header row mandatory, every cell a finite number. Writing uses the
//! shortest round-tripping float representation, so save followed by
//! load reproduces finite values exactly.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Named columns of equal length. Invariants: column names unique and
/// non-empty, at least one data row.
#[derive(Debug, Clone)]
pub struct DataTable {
    name: String,
    columns: Vec<String>,
    index: HashMap<String, usize>,
    /// data[j] is column j, length n_rows.
    data: Vec<Vec<f64>>,
    n_rows: usize,
}

impl DataTable {
    /// Builds a table from parallel column vectors.
    pub fn from_columns(
        name: impl Into<String>,
        columns: Vec<String>,
        data: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let name = name.into();
        if columns.len() != data.len() {
            return Err(Error::Csv {
                path: name,
                detail: format!(
                    "{} column names for {} data columns",
                    columns.len(),
                    data.len()
                ),
            });
        }
        let mut index = HashMap::new();
        for (j, col) in columns.iter().enumerate() {
            if col.is_empty() {
                return Err(Error::Csv {
                    path: name,
                    detail: format!("empty column name at position {}", j + 1),
                });
            }
            if index.insert(col.clone(), j).is_some() {
                return Err(Error::Csv {
                    path: name,
                    detail: format!("duplicate column name '{col}'"),
                });
            }
        }
        let n_rows = data.first().map_or(0, Vec::len);
        if n_rows == 0 {
            return Err(Error::Csv {
                path: name,
                detail: "table has no data rows".into(),
            });
        }
        for (j, col) in data.iter().enumerate() {
            if col.len() != n_rows {
                return Err(Error::Csv {
                    path: name,
                    detail: format!(
                        "column '{}' has {} rows, expected {}",
                        columns[j],
                        col.len(),
                        n_rows
                    ),
                });
            }
        }
        Ok(DataTable {
            name,
            columns,
            index,
            data,
            n_rows,
        })
    }

    /// Reads a CSV file. The table name is the file stem.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let shown = path.display().to_string();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(&shown, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| shown.clone());
        Self::parse_csv(name, &shown, &raw)
    }

    fn parse_csv(name: String, shown: &str, raw: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(raw.as_bytes());
        let headers = reader.headers().map_err(|e| Error::Csv {
            path: shown.to_string(),
            detail: e.to_string(),
        })?;
        if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
            return Err(Error::Csv {
                path: shown.to_string(),
                detail: "missing header row".into(),
            });
        }
        let columns: Vec<String> = headers.iter().map(str::to_string).collect();
        let c = columns.len();
        let mut data: Vec<Vec<f64>> = vec![Vec::new(); c];
        for (i, record) in reader.records().enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| Error::Csv {
                path: shown.to_string(),
                detail: format!("row {row}: {e}"),
            })?;
            if record.len() != c {
                return Err(Error::Csv {
                    path: shown.to_string(),
                    detail: format!(
                        "row {row} has {} fields, expected {c}",
                        record.len()
                    ),
                });
            }
            for (j, field) in record.iter().enumerate() {
                let parsed = field.trim().parse::<f64>().ok().filter(|v| v.is_finite());
                match parsed {
                    Some(v) => data[j].push(v),
                    None => {
                        return Err(Error::NonNumericCell {
                            path: shown.to_string(),
                            row,
                            column: columns[j].clone(),
                            value: field.to_string(),
                        })
                    }
                }
            }
        }
        if data[0].is_empty() {
            return Err(Error::Csv {
                path: shown.to_string(),
                detail: "no data rows after the header".into(),
            });
        }
        Self::from_columns(name, columns, data)
    }

    /// Writes the table as CSV with full-precision floats.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let shown = path.display().to_string();
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Csv {
            path: shown.clone(),
            detail: e.to_string(),
        })?;
        writer
            .write_record(&self.columns)
            .and_then(|_| {
                for i in 0..self.n_rows {
                    let row: Vec<String> =
                        (0..self.columns.len()).map(|j| self.data[j][i].to_string()).collect();
                    writer.write_record(&row)?;
                }
                writer.flush().map_err(csv::Error::from)
            })
            .map_err(|e| Error::Csv {
                path: shown,
                detail: e.to_string(),
            })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownVariable {
            name: name.to_string(),
        })
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.data[self.column_index(name)?])
    }

    pub fn column_at(&self, j: usize) -> &[f64] {
        &self.data[j]
    }

    /// Projects onto the named columns, in the order given.
    pub fn select(&self, names: &[String]) -> Result<DataTable> {
        let mut data = Vec::with_capacity(names.len());
        for name in names {
            data.push(self.data[self.column_index(name)?].clone());
        }
        DataTable::from_columns(self.name.clone(), names.to_vec(), data)
    }

    /// Returns a copy with columns renamed positionally.
    pub fn with_columns(&self, columns: Vec<String>) -> Result<DataTable> {
        DataTable::from_columns(self.name.clone(), columns, self.data.clone())
    }

    /// Returns a copy under a different table name.
    pub fn with_name(&self, name: impl Into<String>) -> DataTable {
        let mut t = self.clone();
        t.name = name.into();
        t
    }
}

/// Pearson correlation matrix over a table's columns. Symmetric with
/// unit diagonal; off-diagonal entries clamped to [-1, 1].
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    variables: Vec<String>,
    index: HashMap<String, usize>,
    values: DMatrix<f64>,
}

impl CorrelationMatrix {
    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn by_name(&self, a: &str, b: &str) -> Result<f64> {
        let i = self.var_index(a)?;
        let j = self.var_index(b)?;
        Ok(self.values[(i, j)])
    }

    pub fn var_index(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownVariable {
            name: name.to_string(),
        })
    }

    /// Correlation submatrix for the given variable indices, in order.
    pub fn submatrix(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.values[(idx[r], idx[c])])
    }
}

/// Two-pass Pearson correlation of every column pair. Errors on fewer
/// than two rows and on zero-variance columns.
pub fn correlation_matrix(table: &DataTable) -> Result<CorrelationMatrix> {
    let n = table.n_rows();
    let c = table.n_cols();
    if n < 2 {
        return Err(Error::InsufficientRows {
            what: "correlation",
            needed: 2,
            available: n,
        });
    }
    let mut centered: Vec<Vec<f64>> = Vec::with_capacity(c);
    let mut norms: Vec<f64> = Vec::with_capacity(c);
    for j in 0..c {
        let col = table.column_at(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let dev: Vec<f64> = col.iter().map(|v| v - mean).collect();
        let ss: f64 = dev.iter().map(|d| d * d).sum();
        if ss == 0.0 {
            return Err(Error::ConstantColumn {
                name: table.columns()[j].clone(),
            });
        }
        centered.push(dev);
        norms.push(ss.sqrt());
    }
    let mut values = DMatrix::from_element(c, c, 0.0);
    for i in 0..c {
        values[(i, i)] = 1.0;
        for j in (i + 1)..c {
            let dot: f64 = centered[i]
                .iter()
                .zip(&centered[j])
                .map(|(a, b)| a * b)
                .sum();
            let r = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            values[(i, j)] = r;
            values[(j, i)] = r;
        }
    }
    Ok(CorrelationMatrix {
        variables: table.columns().to_vec(),
        index: table
            .columns()
            .iter()
            .enumerate()
            .map(|(j, s)| (s.clone(), j))
            .collect(),
        values,
    })
}
