//! Sample class means and pooled covariance estimates.

use nalgebra::{DMatrix, DVector};

use crate::dataset::LabeledDataset;
use crate::error::{Result, SfdaError};
use crate::linalg::{symmetrize, SpectralPsd};

/// Per-class means, pooled within-class covariance `Σ̂` (divisor `n − K`)
/// and between-class covariance `B̂` (divisor `n`).
#[derive(Debug, Clone)]
pub struct ClassSummaries {
    pub class_means: DMatrix<f64>,
    pub counts: Vec<usize>,
    pub overall_mean: DVector<f64>,
    pub within_cov: DMatrix<f64>,
    pub between_cov: DMatrix<f64>,
    /// Rows `(x_ij − x̄_i) / √(n − K)`, so `Σ̂ = WᵀW`.
    within_root: DMatrix<f64>,
    /// Rows `√(n_i / n) (x̄_i − x̄)`, so `B̂ = GᵀG`.
    between_root: DMatrix<f64>,
}

impl ClassSummaries {
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn p(&self) -> usize {
        self.overall_mean.len()
    }

    pub fn n(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn class_mean(&self, class: usize) -> DVector<f64> {
        self.class_means.row(class - 1).transpose()
    }

    /// `Σ̂` in spectral form, computed from its square-root factor.
    pub fn within_spectral(&self) -> SpectralPsd {
        SpectralPsd::from_factor(&self.within_root)
    }

    /// `B̂` in spectral form (rank at most `K − 1`).
    pub fn between_spectral(&self) -> SpectralPsd {
        SpectralPsd::from_factor(&self.between_root)
    }

    /// `B̂ v` through the K × p factor.
    pub fn between_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let inner = &self.between_root * v;
        self.between_root.tr_mul(&inner)
    }

    /// `Σ̂ v` through the n × p factor.
    pub fn within_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let inner = &self.within_root * v;
        self.within_root.tr_mul(&inner)
    }
}

pub fn summarize(data: &LabeledDataset) -> Result<ClassSummaries> {
    let n = data.n();
    let p = data.p();
    let k = data.k();
    if n <= k {
        return Err(SfdaError::InsufficientSamples { n, k });
    }
    let x = data.observations();
    let labels = data.labels();

    let mut counts = vec![0usize; k];
    let mut sums = DMatrix::<f64>::zeros(k, p);
    for (i, &label) in labels.iter().enumerate() {
        counts[label - 1] += 1;
        let mut row = sums.row_mut(label - 1);
        row += x.row(i);
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(SfdaError::EmptyClass { class: missing + 1 });
    }
    let mut class_means = sums;
    for (c, &count) in counts.iter().enumerate() {
        let mut row = class_means.row_mut(c);
        row /= count as f64;
    }
    let mut overall_mean = DVector::<f64>::zeros(p);
    for (c, &count) in counts.iter().enumerate() {
        overall_mean += class_means.row(c).transpose() * (count as f64 / n as f64);
    }

    let within_scale = 1.0 / ((n - k) as f64).sqrt();
    let mut within_root = DMatrix::<f64>::zeros(n, p);
    for (i, &label) in labels.iter().enumerate() {
        let centered = (x.row(i) - class_means.row(label - 1)) * within_scale;
        within_root.set_row(i, &centered);
    }
    let mut between_root = DMatrix::<f64>::zeros(k, p);
    for (c, &count) in counts.iter().enumerate() {
        let w = (count as f64 / n as f64).sqrt();
        let centered = (class_means.row(c) - overall_mean.transpose()) * w;
        between_root.set_row(c, &centered);
    }

    let mut within_cov = within_root.tr_mul(&within_root);
    symmetrize(&mut within_cov);
    let mut between_cov = between_root.tr_mul(&between_root);
    symmetrize(&mut between_cov);

    Ok(ClassSummaries {
        class_means,
        counts,
        overall_mean,
        within_cov,
        between_cov,
        within_root,
        between_root,
    })
}

/// Shifts the data so that its overall sample mean is zero.
pub fn center_overall(data: &LabeledDataset) -> Result<LabeledDataset> {
    let n = data.n();
    if n == 0 {
        return Ok(data.clone());
    }
    let mean = data.observations().row_mean().transpose();
    if mean.iter().all(|&m| m == 0.0) {
        return Ok(data.clone());
    }
    data.shifted(&(-mean))
}
