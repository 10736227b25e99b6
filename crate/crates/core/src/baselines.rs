//! Reference classifiers used as benchmark comparisons.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dataset::LabeledDataset;
use crate::error::{Result, SfdaError};
use crate::estimators::summarize;

fn check_batch(x: &DMatrix<f64>, p: usize) -> Result<()> {
    if x.ncols() != p {
        return Err(SfdaError::DimensionMismatch(format!(
            "expected {p} columns, got {}",
            x.ncols()
        )));
    }
    Ok(())
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0 + 1
}

/// Assigns each point to the class with the closest mean in Euclidean
/// distance.
#[derive(Debug, Clone)]
pub struct NearestCentroid {
    means: DMatrix<f64>,
}

impl NearestCentroid {
    pub fn fit(data: &LabeledDataset) -> Result<Self> {
        Ok(NearestCentroid {
            means: summarize(data)?.class_means,
        })
    }

    pub fn classify_batch(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        check_batch(x, self.means.ncols())?;
        Ok((0..x.nrows())
            .into_par_iter()
            .map(|i| {
                let row = x.row(i);
                argmin(self.means.row_iter().map(|m| (row - m).norm_squared()))
            })
            .collect())
    }
}

/// Linear discriminant analysis with `Σ̂ + γI` in place of `Σ̂`, where
/// `γ = tr(Σ̂)/p`.
#[derive(Debug, Clone)]
pub struct RidgeLda {
    means: DMatrix<f64>,
    /// Rows are `(Σ̂ + γI)⁻¹ x̄_k`.
    directions: DMatrix<f64>,
    offsets: DVector<f64>,
    ridge: f64,
}

impl RidgeLda {
    pub fn fit(data: &LabeledDataset) -> Result<Self> {
        let s = summarize(data)?;
        let p = s.p();
        let ridge = s.within_cov.trace() / p as f64;
        if !(ridge > 0.0) {
            return Err(SfdaError::Singular(
                "within-class covariance has zero trace".into(),
            ));
        }
        let reg = &s.within_cov + DMatrix::identity(p, p) * ridge;
        let chol = reg
            .cholesky()
            .ok_or_else(|| SfdaError::Singular("regularized covariance".into()))?;
        let directions = chol.solve(&s.class_means.transpose()).transpose();
        let offsets = DVector::from_fn(s.k(), |k, _| directions.row(k).dot(&s.class_means.row(k)));
        Ok(RidgeLda {
            means: s.class_means,
            directions,
            offsets,
            ridge,
        })
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn classify_batch(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        check_batch(x, self.means.ncols())?;
        let scores = x * self.directions.transpose();
        Ok((0..x.nrows())
            .map(|i| {
                argmin((0..self.means.nrows()).map(|k| self.offsets[k] - 2.0 * scores[(i, k)]))
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> LabeledDataset {
        let x = DMatrix::from_row_slice(
            6,
            2,
            &[0.0, 0.1, 0.2, 0.0, -0.1, -0.1, 5.0, 5.1, 4.9, 5.0, 5.2, 4.8],
        );
        LabeledDataset::from_labels(x, vec![1, 1, 1, 2, 2, 2]).unwrap()
    }

    #[test]
    fn centroid_and_ridge_separate_toy_data() {
        let data = toy();
        let nc = NearestCentroid::fit(&data).unwrap();
        let rl = RidgeLda::fit(&data).unwrap();
        assert_eq!(
            nc.classify_batch(data.observations()).unwrap(),
            data.labels()
        );
        assert_eq!(
            rl.classify_batch(data.observations()).unwrap(),
            data.labels()
        );
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 4.0, 4.0]);
        assert_eq!(nc.classify_batch(&q).unwrap(), vec![1, 2]);
        assert!(nc.classify_batch(&DMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn ridge_rule_matches_mahalanobis() {
        let data = toy();
        let rl = RidgeLda::fit(&data).unwrap();
        let s = summarize(&data).unwrap();
        let inv = (&s.within_cov + DMatrix::identity(2, 2) * rl.ridge())
            .try_inverse()
            .unwrap();
        let x = DMatrix::from_row_slice(3, 2, &[2.4, 2.6, 2.6, 2.4, -1.0, 7.0]);
        let expected: Vec<usize> = x
            .row_iter()
            .map(|r| {
                let r = r.transpose();
                argmin(s.class_means.row_iter().map(|m| {
                    let d = &r - m.transpose();
                    d.dot(&(&inv * &d))
                }))
            })
            .collect();
        assert_eq!(rl.classify_batch(&x).unwrap(), expected);
    }
}
