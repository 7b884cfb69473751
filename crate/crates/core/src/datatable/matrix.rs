use serde::{Deserialize, Serialize};

use super::table::{ColumnType, DataTable};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    #[default]
    MinMax,
    ZScore,
    /// Values are used as given (synthetic data).
    Identity,
}

/// Per-attribute affine normalization `(x - offset) / scale`.
///
/// For min-max the offset is the minimum and the scale the range; for
/// z-score the mean and the standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub kind: NormKind,
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(d: usize) -> Self {
        Self {
            kind: NormKind::Identity,
            offset: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn width(&self) -> usize {
        self.offset.len()
    }

    pub fn normalize_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check(row.len())?;
        Ok(row
            .iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(x, (o, s))| (x - o) / s)
            .collect())
    }

    pub fn denormalize_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check(row.len())?;
        Ok(row
            .iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(x, (o, s))| x * s + o)
            .collect())
    }

    pub fn normalize(&self, raw: &Tensor) -> Result<Tensor> {
        self.check(raw.cols())?;
        let d = raw.cols();
        let values = raw
            .values()
            .iter()
            .enumerate()
            .map(|(k, x)| (x - self.offset[k % d]) / self.scale[k % d])
            .collect();
        Tensor::matrix(raw.rows(), d, values)
    }

    pub fn denormalize(&self, normed: &Tensor) -> Result<Tensor> {
        self.check(normed.cols())?;
        let d = normed.cols();
        let values = normed
            .values()
            .iter()
            .enumerate()
            .map(|(k, x)| x * self.scale[k % d] + self.offset[k % d])
            .collect();
        Tensor::matrix(normed.rows(), d, values)
    }

    fn check(&self, width: usize) -> Result<()> {
        if width != self.width() {
            return Err(Error::WidthMismatch {
                expected: self.width(),
                found: width,
            });
        }
        Ok(())
    }
}

/// `n × d` normalized attribute matrix with the parameters to undo it.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub data: Tensor,
    pub attributes: Vec<String>,
    pub norm: Normalization,
}

impl Matrix {
    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    pub fn width(&self) -> usize {
        self.data.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.data.row_slice(i)
    }

    /// Rows in original (raw) units.
    pub fn raw(&self) -> Result<Tensor> {
        self.norm.denormalize(&self.data)
    }

    pub fn raw_row(&self, i: usize) -> Result<Vec<f64>> {
        self.norm.denormalize_row(self.row(i))
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a == name)
    }

    /// Fit normalization on `raw` and apply it.
    pub fn fit(raw: &Tensor, attributes: Vec<String>, kind: NormKind) -> Result<Self> {
        let (n, d) = (raw.rows(), raw.cols());
        if n == 0 {
            return Err(Error::EmptyTable);
        }
        let mut offset = Vec::with_capacity(d);
        let mut scale = Vec::with_capacity(d);
        for j in 0..d {
            let col: Vec<f64> = (0..n).map(|i| raw.get(i, j)).collect();
            let (o, s) = match kind {
                NormKind::Identity => (0.0, 1.0),
                NormKind::MinMax => {
                    let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    // constant column maps to 0
                    let range = if hi > lo { hi - lo } else { 1.0 };
                    (lo, range)
                }
                NormKind::ZScore => {
                    let mean = col.iter().sum::<f64>() / n as f64;
                    let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
                    if var <= 0.0 {
                        return Err(Error::ZeroVariance(attributes[j].clone()));
                    }
                    (mean, var.sqrt())
                }
            };
            offset.push(o);
            scale.push(s);
        }
        let norm = Normalization { kind, offset, scale };
        let data = norm.normalize(raw)?;
        Ok(Self {
            data,
            attributes,
            norm,
        })
    }
}

/// Build a normalized matrix from quantitative columns.
///
/// With `selection = None`, every quantitative non-label column is used.
pub fn to_matrix(table: &DataTable, selection: Option<&[&str]>, kind: NormKind) -> Result<Matrix> {
    let names: Vec<String> = match selection {
        Some(sel) => sel.iter().map(|s| s.to_string()).collect(),
        None => table
            .columns()
            .filter(|c| !c.is_label() && c.kind() == ColumnType::Quantitative)
            .map(|c| c.name().to_string())
            .collect(),
    };
    if names.is_empty() {
        return Err(Error::EmptyTable);
    }
    let mut cols = Vec::with_capacity(names.len());
    for name in &names {
        let c = table.column(name)?;
        if c.kind() != ColumnType::Quantitative {
            return Err(Error::NonQuantitativeColumn(name.clone()));
        }
        cols.push(c.values());
    }
    let n = table.rows();
    let d = names.len();
    let mut values = Vec::with_capacity(n * d);
    for i in 0..n {
        for c in &cols {
            values.push(c[i]);
        }
    }
    let raw = Tensor::matrix(n, d, values)?;
    Matrix::fit(&raw, names, kind)
}
