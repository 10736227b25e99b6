//! Labeled observation matrices and their CSV representation.
//!
//! CSV layout: the first column is an integer class label in `1..=K`, the
//! remaining `p` columns are numeric features. A header row is allowed and is
//! recognised by a first field that does not parse as a number.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SfdaError};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    observations: DMatrix<f64>,
    labels: Vec<usize>,
    k: usize,
}

impl LabeledDataset {
    /// Validates and wraps `observations` (n × p, one row per observation)
    /// with labels in `1..=k`.
    pub fn new(observations: DMatrix<f64>, labels: Vec<usize>, k: usize) -> Result<Self> {
        let n = observations.nrows();
        if labels.len() != n {
            return Err(SfdaError::DimensionMismatch(format!(
                "{} labels for {} observations",
                labels.len(),
                n
            )));
        }
        if k < 1 {
            return Err(SfdaError::InvalidParameter(
                "class count must be positive".into(),
            ));
        }
        for (row, &label) in labels.iter().enumerate() {
            if label < 1 || label > k {
                return Err(SfdaError::InvalidLabel {
                    row,
                    label: label as i64,
                    k,
                });
            }
        }
        let mut counts = vec![0usize; k];
        for &label in &labels {
            counts[label - 1] += 1;
        }
        if let Some(missing) = counts.iter().position(|&c| c == 0) {
            return Err(SfdaError::EmptyClass { class: missing + 1 });
        }
        for col in 0..observations.ncols() {
            for row in 0..n {
                if !observations[(row, col)].is_finite() {
                    return Err(SfdaError::NonFinite { row, col });
                }
            }
        }
        Ok(LabeledDataset {
            observations,
            labels,
            k,
        })
    }

    /// Like [`LabeledDataset::new`] with `k` taken as the largest label.
    pub fn from_labels(observations: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().copied().max().unwrap_or(0);
        Self::new(observations, labels, k)
    }

    pub fn n(&self) -> usize {
        self.observations.nrows()
    }

    pub fn p(&self) -> usize {
        self.observations.ncols()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn observations(&self) -> &DMatrix<f64> {
        &self.observations
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.observations.row(i).transpose()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.k];
        for &label in &self.labels {
            counts[label - 1] += 1;
        }
        counts
    }

    /// Rows at `indices`, keeping the class count `k`.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let obs = self.observations.select_rows(indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(obs, labels, self.k)
    }

    /// Adds `shift` to every observation.
    pub fn shifted(&self, shift: &DVector<f64>) -> Result<Self> {
        if shift.len() != self.p() {
            return Err(SfdaError::DimensionMismatch(format!(
                "shift has length {}, data has {} features",
                shift.len(),
                self.p()
            )));
        }
        let mut obs = self.observations.clone();
        for mut row in obs.row_iter_mut() {
            row += shift.transpose();
        }
        Ok(LabeledDataset {
            observations: obs,
            labels: self.labels.clone(),
            k: self.k,
        })
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let (labels, rows) = read_labeled_rows(reader)?;
        let p = rows.first().map(|r| r.len()).unwrap_or(0);
        let n = rows.len();
        let obs = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Self::from_labels(obs, labels)
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["label".to_string()];
        header.extend((1..=self.p()).map(|j| format!("x{j}")));
        wtr.write_record(&header)?;
        let mut record = Vec::with_capacity(self.p() + 1);
        for i in 0..self.n() {
            record.clear();
            record.push(self.labels[i].to_string());
            record.extend(self.observations.row(i).iter().map(|v| v.to_string()));
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Reads `label, v1, v2, ...` rows. All rows must have the same width.
pub(crate) fn read_labeled_rows<R: Read>(reader: R) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.is_empty() || (record.len() == 1 && record[0].is_empty()) {
            continue;
        }
        let first = &record[0];
        if line == 0 && first.parse::<f64>().is_err() {
            continue;
        }
        let label: i64 = first.parse::<i64>().map_err(|_| {
            SfdaError::Parse(format!(
                "line {}: label {first:?} is not an integer",
                line + 1
            ))
        })?;
        if label < 1 {
            return Err(SfdaError::InvalidLabel {
                row: labels.len(),
                label,
                k: 0,
            });
        }
        let values = record
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    SfdaError::Parse(format!("line {}: {f:?} is not a number", line + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first_row) = rows.first() {
            if first_row.len() != values.len() {
                return Err(SfdaError::Parse(format!(
                    "line {}: expected {} features, found {}",
                    line + 1,
                    first_row.len(),
                    values.len()
                )));
            }
        }
        labels.push(label as usize);
        rows.push(values);
    }
    Ok((labels, rows))
}

/// Reads rows in the labeled layout and drops the label column.
pub fn read_feature_rows<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let (_, rows) = read_labeled_rows(reader)?;
    let p = rows.first().map(|r| r.len()).unwrap_or(0);
    Ok(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
}
