//! Point clouds stored row-major, plus CSV ingestion.

use std::path::Path;

use crate::error::{Error, Result};

/// `n` points in `R^d`, stored row-major in one buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    dim: usize,
    data: Vec<f64>,
}

impl Sample {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("sample dimension must be positive"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::arg(format!(
                "buffer of length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("sample contains non-finite values"));
        }
        Ok(Self { dim, data })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).ok_or_else(|| Error::arg("empty point list"))?;
        let mut data = Vec::with_capacity(points.len() * dim);
        for p in points {
            crate::error::check_dim(dim, p.len())?;
            data.extend_from_slice(p);
        }
        Self::new(dim, data)
    }

    pub fn from_1d(values: Vec<f64>) -> Result<Self> {
        Self::new(1, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.points().map(|p| p[j]).collect()
    }

    /// Per-coordinate standard deviation with the `n - 1` divisor.
    pub fn std_dev(&self) -> Vec<f64> {
        let n = self.len() as f64;
        (0..self.dim)
            .map(|j| {
                let mean = self.points().map(|p| p[j]).sum::<f64>() / n;
                let ss: f64 = self.points().map(|p| (p[j] - mean).powi(2)).sum();
                (ss / (n - 1.0).max(1.0)).sqrt()
            })
            .collect()
    }

    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        (0..self.dim)
            .map(|j| {
                self.points().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    (lo.min(p[j]), hi.max(p[j]))
                })
            })
            .collect()
    }

    /// Every coordinate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn translated(&self, shift: &[f64]) -> Self {
        let data = self
            .points()
            .flat_map(|p| p.iter().zip(shift).map(|(a, b)| a + b))
            .collect();
        Self { dim: self.dim, data }
    }

    /// Coordinates permuted: new coordinate `k` is old coordinate `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let data = self.points().flat_map(|p| perm.iter().map(move |&j| p[j])).collect();
        Self { dim: self.dim, data }
    }

    /// Points in the order given by `order` (indices into `self`).
    pub fn reordered(&self, order: &[usize]) -> Self {
        let data = order.iter().flat_map(|&i| self.point(i).iter().copied()).collect();
        Self { dim: self.dim, data }
    }

    /// Sorted by the first coordinate.
    pub fn sorted_by_first(&self) -> Self {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_unstable_by(|&a, &b| self.point(a)[0].total_cmp(&self.point(b)[0]));
        self.reordered(&order)
    }

    /// Reads one point per row. A first row that does not parse as numbers is
    /// taken as a header.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(file).map_err(|e| match e {
            Error::Csv { source, .. } => Error::csv(path, source),
            other => other,
        })
    }

    pub fn read_csv_from<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut dim = 0;
        let mut data = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::csv("<input>", e))?;
            let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
            let values = match parsed {
                Ok(v) => v,
                Err(_) if row == 0 => continue,
                Err(e) => return Err(Error::arg(format!("row {}: {e}", row + 1))),
            };
            if dim == 0 {
                dim = values.len();
            } else if values.len() != dim {
                return Err(Error::arg(format!(
                    "row {} has {} columns, expected {dim}",
                    row + 1,
                    values.len()
                )));
            }
            data.extend(values);
        }
        if data.is_empty() {
            return Err(Error::arg("no data rows"));
        }
        Self::new(dim, data)
    }
}
