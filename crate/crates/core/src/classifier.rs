//! Discriminant metric, classification rules and two-class error formulas.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::error::{Result, SfdaError};
use crate::estimators::ClassSummaries;
use crate::linalg::{sym_eigen_desc, symmetrize};
use crate::sfda::DiscriminantModel;

/// Largest accepted condition number of the component gram matrix.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// `K̂_ij = α_iᵀ Σ̂ α_j` for the rows `α_i` of `components`.
pub fn gram_matrix(components: &DMatrix<f64>, sigma_hat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = components.ncols();
    if sigma_hat.nrows() != p || sigma_hat.ncols() != p {
        return Err(SfdaError::DimensionMismatch(format!(
            "components have {} columns, covariance is {}x{}",
            p,
            sigma_hat.nrows(),
            sigma_hat.ncols()
        )));
    }
    let mut g = components * sigma_hat * components.transpose();
    symmetrize(&mut g);
    Ok(g)
}

/// Gram matrix through the square-root factor of `Σ̂`.
pub(crate) fn gram_from_within(s: &ClassSummaries, components: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(components.nrows(), components.nrows());
    let projected: Vec<DVector<f64>> = components
        .row_iter()
        .map(|r| s.within_apply(&r.transpose()))
        .collect();
    for i in 0..components.nrows() {
        for j in 0..components.nrows() {
            g[(i, j)] = components.row(i).transpose().dot(&projected[j]);
        }
    }
    symmetrize(&mut g);
    g
}

/// `D̂ = AᵀK̂⁻¹A` together with `K̂⁻¹`. Fails when `K̂` is not positive
/// definite or its condition number exceeds [`MAX_GRAM_CONDITION`].
pub fn discriminant_matrix(
    components: &DMatrix<f64>,
    gram: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = components.nrows();
    if gram.nrows() != m || gram.ncols() != m {
        return Err(SfdaError::DimensionMismatch(format!(
            "gram is {}x{} for {} components",
            gram.nrows(),
            gram.ncols(),
            m
        )));
    }
    let mut sym = gram.clone();
    symmetrize(&mut sym);
    let (vals, vecs) = sym_eigen_desc(&sym);
    let top = vals[0];
    let bottom = vals[m - 1];
    let condition = if bottom > 0.0 {
        top / bottom
    } else {
        f64::INFINITY
    };
    if !(top > 0.0) || condition > MAX_GRAM_CONDITION {
        return Err(SfdaError::IllConditionedGram { condition });
    }
    let inv_vals = vals.map(|v| 1.0 / v);
    let mut inv = &vecs * DMatrix::from_diagonal(&inv_vals) * vecs.transpose();
    symmetrize(&mut inv);
    let mut d = components.transpose() * &inv * components;
    symmetrize(&mut d);
    Ok((d, inv))
}

/// Index of the smallest value; the first one wins ties.
fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0usize, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn check_point(x: &DVector<f64>, p: usize) -> Result<()> {
    if x.len() != p {
        return Err(SfdaError::DimensionMismatch(format!(
            "point has length {}, expected {}",
            x.len(),
            p
        )));
    }
    if let Some(col) = x.iter().position(|v| !v.is_finite()) {
        return Err(SfdaError::NonFinite { row: 0, col });
    }
    Ok(())
}

/// `(x − x̄_i)ᵀ D̂ (x − x̄_i)` for every class, evaluated in the
/// `(K − 1)`-dimensional component space.
pub fn discriminant_scores(model: &DiscriminantModel, x: &DVector<f64>) -> Result<Vec<f64>> {
    check_point(x, model.p())?;
    Ok(scores_unchecked(model, x))
}

fn scores_unchecked(model: &DiscriminantModel, x: &DVector<f64>) -> Vec<f64> {
    let zx = model.components() * x;
    let means = model.projected_means();
    let inv = model.gram_inv();
    (0..model.k())
        .map(|i| {
            let diff = &zx - means.row(i).transpose();
            diff.dot(&(inv * &diff))
        })
        .collect()
}

/// Class (1-based) whose mean is nearest to `x` in the `D̂` metric.
pub fn classify(model: &DiscriminantModel, x: &DVector<f64>) -> Result<usize> {
    Ok(argmin(discriminant_scores(model, x)?.into_iter()) + 1)
}

/// Classifies every row of `x`.
pub fn classify_batch(model: &DiscriminantModel, x: &DMatrix<f64>) -> Result<Vec<usize>> {
    if x.ncols() != model.p() {
        return Err(SfdaError::DimensionMismatch(format!(
            "data has {} features, model has {}",
            x.ncols(),
            model.p()
        )));
    }
    for row in 0..x.nrows() {
        if let Some(col) = x.row(row).iter().position(|v| !v.is_finite()) {
            return Err(SfdaError::NonFinite { row, col });
        }
    }
    // Project all rows at once; each row's scores then only need K − 1 values.
    let z = x * model.components().transpose();
    let means = model.projected_means();
    let inv = model.gram_inv();
    Ok((0..x.nrows())
        .into_par_iter()
        .map(|r| {
            let zr = z.row(r).transpose();
            let scores = (0..model.k()).map(|i| {
                let diff = &zr - means.row(i).transpose();
                diff.dot(&(inv * &diff))
            });
            argmin(scores) + 1
        })
        .collect())
}

/// Known population parameters for the Bayes rule with a common covariance.
#[derive(Debug, Clone)]
pub struct OptimalRuleSpec {
    true_means: DMatrix<f64>,
    true_cov: DMatrix<f64>,
    true_d: Option<DMatrix<f64>>,
    cov_chol: Cholesky<f64, Dyn>,
}

impl OptimalRuleSpec {
    pub fn new(
        true_means: DMatrix<f64>,
        true_cov: DMatrix<f64>,
        true_d: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let p = true_means.ncols();
        if true_cov.nrows() != p || true_cov.ncols() != p {
            return Err(SfdaError::DimensionMismatch(
                "covariance does not match the means".into(),
            ));
        }
        if let Some(d) = &true_d {
            if d.nrows() != p || d.ncols() != p {
                return Err(SfdaError::DimensionMismatch(
                    "D does not match the means".into(),
                ));
            }
        }
        let cov_chol = true_cov
            .clone()
            .cholesky()
            .ok_or_else(|| SfdaError::Singular("covariance is not positive definite".into()))?;
        Ok(OptimalRuleSpec {
            true_means,
            true_cov,
            true_d,
            cov_chol,
        })
    }

    pub fn true_means(&self) -> &DMatrix<f64> {
        &self.true_means
    }

    pub fn true_cov(&self) -> &DMatrix<f64> {
        &self.true_cov
    }

    pub fn true_d(&self) -> Option<&DMatrix<f64>> {
        self.true_d.as_ref()
    }

    /// `μ_j − μ_i` for 1-based class indices.
    pub fn delta(&self, i: usize, j: usize) -> DVector<f64> {
        (self.true_means.row(j - 1) - self.true_means.row(i - 1)).transpose()
    }

    fn mahalanobis_sq(&self, v: &DVector<f64>) -> f64 {
        let w = self
            .cov_chol
            .l()
            .solve_lower_triangular(v)
            .expect("nonsingular factor");
        w.norm_squared()
    }
}

/// Bayes rule: `argmin_i (x − μ_i)ᵀΣ⁻¹(x − μ_i)`, ties to the lowest class.
pub fn optimal_classify(spec: &OptimalRuleSpec, x: &DVector<f64>) -> Result<usize> {
    check_point(x, spec.true_means.ncols())?;
    let scores = (0..spec.true_means.nrows())
        .map(|i| spec.mahalanobis_sq(&(x - spec.true_means.row(i).transpose())));
    Ok(argmin(scores) + 1)
}

/// Population Fisher rule `argmin_i (x − μ_i)ᵀD(x − μ_i)`.
pub fn fisher_classify(spec: &OptimalRuleSpec, x: &DVector<f64>) -> Result<usize> {
    check_point(x, spec.true_means.ncols())?;
    let d = spec
        .true_d
        .as_ref()
        .ok_or_else(|| SfdaError::InvalidParameter("rule specification has no D matrix".into()))?;
    let scores = (0..spec.true_means.nrows()).map(|i| {
        let diff = x - spec.true_means.row(i).transpose();
        diff.dot(&(d * &diff))
    });
    Ok(argmin(scores) + 1)
}

/// Standard normal distribution function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Error rate of the two-class rule with metric `D` when both classes are
/// `N(μ_i, Σ)` with `δ = μ₂ − μ₁`:
/// `Φ(−δᵀDδ / (2‖Σ^{1/2}Dδ‖₂))`.
pub fn two_class_error(
    delta: &DVector<f64>,
    d: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
) -> Result<f64> {
    let p = delta.len();
    if d.shape() != (p, p) || sigma.shape() != (p, p) {
        return Err(SfdaError::DimensionMismatch(
            "delta, D and Sigma disagree in size".into(),
        ));
    }
    let d_delta = d * delta;
    let numerator = delta.dot(&d_delta);
    let spread = d_delta.dot(&(sigma * &d_delta));
    if !(spread > 0.0) {
        return Err(SfdaError::Singular(
            "two-class error denominator is zero".into(),
        ));
    }
    Ok(std_normal_cdf(-numerator / (2.0 * spread.sqrt())))
}
