//! Dataset ingestion, column centering, and model-structure types.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// How a set of candidate structures is organized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Structures are prefixes {1..p} of the predictor ordering.
    Nested,
    /// Structures are arbitrary subsets of {1..q}.
    AllSubsets,
}

/// A subset of predictor indices (1-based, sorted, duplicate-free).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelStructure {
    pub gamma: Vec<usize>,
    pub scheme: Scheme,
}

impl ModelStructure {
    pub fn new(mut gamma: Vec<usize>, scheme: Scheme) -> Result<Self> {
        gamma.sort_unstable();
        gamma.dedup();
        if gamma.first().is_some_and(|&g| g == 0) {
            return Err(Error::Validation("predictor indices are 1-based".into()));
        }
        if scheme == Scheme::Nested && gamma.iter().enumerate().any(|(i, &g)| g != i + 1) {
            return Err(Error::Validation(
                "nested structure must be a prefix {1..p}".into(),
            ));
        }
        Ok(Self { gamma, scheme })
    }

    /// Nested structure {1..p}.
    pub fn nested(p: usize) -> Self {
        Self {
            gamma: (1..=p).collect(),
            scheme: Scheme::Nested,
        }
    }

    /// Arbitrary subset (indices 1-based).
    pub fn subset(gamma: Vec<usize>) -> Result<Self> {
        Self::new(gamma, Scheme::AllSubsets)
    }

    pub fn p(&self) -> usize {
        self.gamma.len()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.gamma.binary_search(&j).is_ok()
    }
}

/// Parameters of one fitted Student-t regression model.
/// `nu = f64::INFINITY` encodes the Gaussian limit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TParams {
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub tau: f64,
    pub nu: f64,
}

impl TParams {
    pub fn p(&self) -> usize {
        self.beta.len()
    }
}

/// A regression dataset: response plus centered predictor matrix.
///
/// Predictor columns are centered to zero mean at construction; the original
/// column means are kept so fitted models can predict on raw new data and so
/// the uncentered design can be reconstructed where needed.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: DVector<f64>,
    /// Centered predictor matrix, n x q.
    pub x: DMatrix<f64>,
    /// Original column means (length q).
    pub means: DVector<f64>,
    pub names: Vec<String>,
    pub n: usize,
    pub q: usize,
}

impl Dataset {
    /// Build from a raw (uncentered) design and response.
    pub fn from_raw(x_raw: DMatrix<f64>, y: DVector<f64>, names: Vec<String>) -> Result<Self> {
        let n = x_raw.nrows();
        let q = x_raw.ncols();
        if y.len() != n {
            return Err(Error::Validation(format!(
                "response length {} does not match {} design rows",
                y.len(),
                n
            )));
        }
        if n < 3 {
            return Err(Error::Validation(format!("need at least 3 rows, got {n}")));
        }
        if names.len() != q {
            return Err(Error::Validation("column name count mismatch".into()));
        }
        let mut x = x_raw;
        let mut means = DVector::zeros(q);
        for j in 0..q {
            let m = x.column(j).sum() / n as f64;
            means[j] = m;
            for i in 0..n {
                x[(i, j)] -= m;
            }
        }
        Ok(Self { y, x, means, names, n, q })
    }

    /// Load a CSV with a header row; `target` becomes the response and every
    /// other column a predictor (original order preserved).
    pub fn load(path: impl AsRef<Path>, target: &str) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)?;
        let headers: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let target_idx = headers
            .iter()
            .position(|h| h == target)
            .ok_or_else(|| Error::Validation(format!("target column '{target}' not found")))?;
        let names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != target_idx)
            .map(|(_, h)| h.clone())
            .collect();
        let q = names.len();
        if q == 0 {
            return Err(Error::Validation("no predictor columns".into()));
        }
        let mut ys = Vec::new();
        let mut rows: Vec<f64> = Vec::new();
        for (ri, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != headers.len() {
                return Err(Error::Validation(format!(
                    "row {} has {} fields, expected {}",
                    ri + 2,
                    rec.len(),
                    headers.len()
                )));
            }
            for (ci, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Validation(format!(
                        "non-numeric value '{}' in column '{}' at row {}",
                        field,
                        headers[ci],
                        ri + 2
                    ))
                })?;
                if !v.is_finite() {
                    return Err(Error::Validation(format!(
                        "non-finite value in column '{}' at row {}",
                        headers[ci],
                        ri + 2
                    )));
                }
                if ci == target_idx {
                    ys.push(v);
                } else {
                    rows.push(v);
                }
            }
        }
        let n = ys.len();
        if n < 3 {
            return Err(Error::Validation(format!("need at least 3 rows, got {n}")));
        }
        let x = DMatrix::from_row_slice(n, q, &rows);
        Self::from_raw(x, DVector::from_vec(ys), names)
    }

    /// Centered design columns selected by the structure, in gamma order.
    pub fn submatrix(&self, structure: &ModelStructure) -> Result<DMatrix<f64>> {
        self.check_indices(structure)?;
        let p = structure.p();
        let mut out = DMatrix::zeros(self.n, p);
        for (k, &j) in structure.gamma.iter().enumerate() {
            out.set_column(k, &self.x.column(j - 1));
        }
        Ok(out)
    }

    /// Uncentered design columns selected by the structure.
    pub fn raw_submatrix(&self, structure: &ModelStructure) -> Result<DMatrix<f64>> {
        let mut out = self.submatrix(structure)?;
        for (k, &j) in structure.gamma.iter().enumerate() {
            let m = self.means[j - 1];
            for i in 0..self.n {
                out[(i, k)] += m;
            }
        }
        Ok(out)
    }

    /// Column means for the selected predictors.
    pub fn sub_means(&self, structure: &ModelStructure) -> Result<DVector<f64>> {
        self.check_indices(structure)?;
        Ok(DVector::from_iterator(
            structure.p(),
            structure.gamma.iter().map(|&j| self.means[j - 1]),
        ))
    }

    /// New dataset from a row subset (columns re-centered on the subset).
    pub fn subset_rows(&self, rows: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n) {
            return Err(Error::Validation(format!("row index {bad} out of range")));
        }
        let m = rows.len();
        let mut x = DMatrix::zeros(m, self.q);
        let mut y = DVector::zeros(m);
        for (i, &r) in rows.iter().enumerate() {
            y[i] = self.y[r];
            for j in 0..self.q {
                x[(i, j)] = self.x[(r, j)] + self.means[j];
            }
        }
        Dataset::from_raw(x, y, self.names.clone())
    }

    /// Predicted means for raw (uncentered) full-width design rows, using a
    /// model fitted on this dataset's centering.
    pub fn predict(
        &self,
        structure: &ModelStructure,
        params: &TParams,
        x_raw: &DMatrix<f64>,
    ) -> Result<DVector<f64>> {
        self.check_indices(structure)?;
        if params.p() != structure.p() {
            return Err(Error::Validation("parameter/structure dimension mismatch".into()));
        }
        if x_raw.ncols() != self.q {
            return Err(Error::Validation("prediction design width mismatch".into()));
        }
        let mut mu = DVector::from_element(x_raw.nrows(), params.beta0);
        for (k, &j) in structure.gamma.iter().enumerate() {
            let b = params.beta[k];
            let m = self.means[j - 1];
            for i in 0..x_raw.nrows() {
                mu[i] += b * (x_raw[(i, j - 1)] - m);
            }
        }
        Ok(mu)
    }

    fn check_indices(&self, structure: &ModelStructure) -> Result<()> {
        if let Some(&bad) = structure.gamma.iter().find(|&&j| j < 1 || j > self.q) {
            return Err(Error::Validation(format!(
                "predictor index {bad} out of range 1..={}",
                self.q
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn centering_constant_column() {
        let f = write_csv("y,a\n1,7\n2,7\n3,7\n");
        let d = Dataset::load(f.path(), "y").unwrap();
        assert_eq!(d.q, 1);
        for i in 0..3 {
            assert_eq!(d.x[(i, 0)], 0.0);
        }
        assert_eq!(d.means[0], 7.0);
    }

    #[test]
    fn centering_sequence() {
        let f = write_csv("y,a\n0,1\n0,2\n0,3\n0,4\n0,5\n");
        let d = Dataset::load(f.path(), "y").unwrap();
        let got: Vec<f64> = d.x.column(0).iter().copied().collect();
        assert_eq!(got, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn boston_shape() {
        let d = Dataset::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/boston.csv"), "MEDV")
            .unwrap();
        assert_eq!(d.n, 506);
        assert_eq!(d.q, 13);
        for j in 0..d.q {
            assert!(d.x.column(j).sum().abs() / d.n as f64 <= 1e-10);
        }
    }

    #[test]
    fn reload_centered_is_idempotent() {
        let f = write_csv("y,a,b\n1,1,10\n2,2,20\n3,4,30\n4,8,40\n");
        let d = Dataset::load(f.path(), "y").unwrap();
        // write the centered data back out and reload
        let mut s = String::from("y,a,b\n");
        for i in 0..d.n {
            s.push_str(&format!("{},{},{}\n", d.y[i], d.x[(i, 0)], d.x[(i, 1)]));
        }
        let f2 = write_csv(&s);
        let d2 = Dataset::load(f2.path(), "y").unwrap();
        for i in 0..d.n {
            for j in 0..d.q {
                assert!((d.x[(i, j)] - d2.x[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn submatrix_selection() {
        let f = write_csv("y,a,b,c\n1,1,4,7\n2,2,5,8\n3,3,6,10\n");
        let d = Dataset::load(f.path(), "y").unwrap();
        let s = ModelStructure::subset(vec![1, 3]).unwrap();
        let m = d.submatrix(&s).unwrap();
        assert_eq!(m.ncols(), 2);
        // column means stay zero after extraction
        assert!(m.column(0).sum().abs() < 1e-12);
        assert!(m.column(1).sum().abs() < 1e-12);
        // null and full selections
        let null = d.submatrix(&ModelStructure::subset(vec![]).unwrap()).unwrap();
        assert_eq!(null.ncols(), 0);
        let full = d.submatrix(&ModelStructure::subset(vec![1, 2, 3]).unwrap()).unwrap();
        assert_eq!(full, d.x);
    }

    #[test]
    fn rejects_bad_input() {
        let f = write_csv("y,a\n1,2\n3,oops\n4,5\n");
        assert!(Dataset::load(f.path(), "y").is_err());
        let f = write_csv("y,a\n1,2\n3,4\n5,6\n");
        assert!(Dataset::load(f.path(), "zzz").is_err());
        let f = write_csv("y,a\n1,2\n3,4\n");
        assert!(Dataset::load(f.path(), "y").is_err()); // n < 3
    }

    #[test]
    fn nested_prefix_enforced() {
        assert!(ModelStructure::new(vec![1, 3], Scheme::Nested).is_err());
        assert!(ModelStructure::new(vec![1, 2], Scheme::Nested).is_ok());
    }
}
