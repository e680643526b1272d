//! The finite population `U`: an immutable `N × d` feature matrix plus an optional response.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{mirror_lower, rank_one_lower};

/// Row-major dense dataset. Rows are the data points `x_i`; the intercept column, when
/// the model has one, is an ordinary column of ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_rows: usize,
    n_cols: usize,
    features: Vec<f64>,
    response: Option<Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset from row-major features. Fails on empty shapes, length
    /// mismatches and non-finite entries.
    pub fn new(features: Vec<f64>, n_cols: usize, response: Option<Vec<f64>>) -> Result<Self> {
        if n_cols == 0 {
            return Err(Error::invalid("dataset needs at least one column"));
        }
        if features.is_empty() || features.len() % n_cols != 0 {
            return Err(Error::invalid(format!(
                "feature buffer of length {} is not a positive multiple of {n_cols} columns",
                features.len()
            )));
        }
        let n_rows = features.len() / n_cols;
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite feature at row {}, column {}",
                pos / n_cols,
                pos % n_cols
            )));
        }
        if let Some(y) = &response {
            if y.len() != n_rows {
                return Err(Error::invalid(format!(
                    "response has {} entries but there are {n_rows} rows",
                    y.len()
                )));
            }
            if let Some(pos) = y.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("non-finite response at row {pos}")));
            }
        }
        Ok(Self { n_rows, n_cols, features, response })
    }

    pub fn from_rows(rows: &[Vec<f64>], response: Option<Vec<f64>>) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != n_cols) {
            return Err(Error::invalid(format!("row {bad} has a different length than row 0")));
        }
        Self::new(rows.concat(), n_cols, response)
    }

    /// Mean estimation as a regression on a constant: one intercept column and the
    /// observations as response, so `f(θ; x_i) = (x_i − θ)²/2`.
    pub fn for_mean(values: &[f64]) -> Result<Self> {
        Self::new(vec![1.0; values.len()], 1, Some(values.to_vec()))
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_cols..(i + 1) * self.n_cols]
    }

    /// Row-major `N × d` feature block.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_cols)
    }

    pub fn response(&self) -> Option<&[f64]> {
        self.response.as_deref()
    }

    #[inline]
    pub fn y(&self, i: usize) -> Option<f64> {
        self.response.as_ref().map(|y| y[i])
    }

    /// A copy with every feature multiplied by `c`; the response is unchanged.
    pub fn with_scaled_features(&self, c: f64) -> Result<Self> {
        Self::new(self.features.iter().map(|v| v * c).collect(), self.n_cols, self.response.clone())
    }

    /// A copy restricted to `indices`, in the given order (repeats allowed).
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            if i >= self.n_rows {
                return Err(Error::invalid(format!("row index {i} out of range")));
            }
            features.extend_from_slice(self.row(i));
        }
        let response = self.response.as_ref().map(|y| indices.iter().map(|&i| y[i]).collect());
        Self::new(features, self.n_cols, response)
    }

    /// `XᵀX`.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.n_cols, self.n_cols);
        for x in self.rows() {
            rank_one_lower(&mut g, x, 1.0);
        }
        mirror_lower(&mut g);
        g
    }

    /// Reads a headerless CSV. When `with_response` is set the last column is the response.
    pub fn from_csv_reader<R: Read>(reader: R, with_response: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut features = Vec::new();
        let mut response = with_response.then(Vec::new);
        let mut width = None;
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let values = record
                .iter()
                .map(|field| {
                    field.parse::<f64>().map_err(|e| Error::Parse {
                        line: line + 1,
                        msg: format!("{field:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            match width {
                None => width = Some(values.len()),
                Some(w) if w != values.len() => {
                    return Err(Error::Parse {
                        line: line + 1,
                        msg: format!("expected {w} fields, found {}", values.len()),
                    })
                }
                _ => {}
            }
            match &mut response {
                Some(y) => {
                    let (x, last) = values.split_at(values.len() - 1);
                    features.extend_from_slice(x);
                    y.push(last[0]);
                }
                None => features.extend_from_slice(&values),
            }
        }
        let width = width.ok_or_else(|| Error::invalid("CSV input has no rows"))?;
        let n_cols = if with_response { width - 1 } else { width };
        Self::new(features, n_cols, response)
    }

    pub fn read_csv(path: impl AsRef<Path>, with_response: bool) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file), with_response)
    }

    /// Writes one headerless CSV line per row, response last when present.
    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        let mut line: Vec<String> = Vec::with_capacity(self.n_cols + 1);
        for (i, x) in self.rows().enumerate() {
            line.clear();
            line.extend(x.iter().map(f64::to_string));
            if let Some(y) = self.y(i) {
                line.push(y.to_string());
            }
            wtr.write_record(&line)?;
        }
        wtr.flush()?;
        Ok(())
    }
}
