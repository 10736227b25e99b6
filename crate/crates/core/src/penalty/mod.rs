//! Penalized quadratic maximisation.
//!
//! Solves `max αᵀΠα` subject to `αᵀCα + τ‖α‖²_λ ≤ 1` and `Lα = 0`, where
//! `‖α‖²_λ = (1 − λ)‖α‖₂² + λ‖α‖₁²`, by repeatedly maximising the linear
//! objective `(Πα_prev)ᵀα` over the same feasible set.

mod inner;
mod prox;
mod rayleigh;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SfdaError};
use crate::linalg::{l1_norm, sym_eigen_desc, SpectralPsd};

pub use inner::solve_linear_max;
pub(crate) use inner::LinearMaxSolver;
pub use prox::prox_sq_l1;
pub use rayleigh::{maximize_rayleigh, RayleighSolution};

/// Tuning pair `(τ, λ)` of the penalty `τ‖α‖²_λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub tau: f64,
    pub lambda: f64,
}

impl PenaltySpec {
    pub fn new(tau: f64, lambda: f64) -> Result<Self> {
        let spec = PenaltySpec { tau, lambda };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(SfdaError::InvalidParameter(format!(
                "tau must be >= 0, got {}",
                self.tau
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(SfdaError::InvalidParameter(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Weight on `‖α‖₂²`.
    pub fn ridge_weight(&self) -> f64 {
        self.tau * (1.0 - self.lambda)
    }

    /// Weight on `‖α‖₁²`.
    pub fn l1_weight(&self) -> f64 {
        self.tau * self.lambda
    }
}

/// `‖α‖²_λ = (1 − λ)‖α‖₂² + λ‖α‖₁²`.
pub fn penalty_norm_sq(alpha: &DVector<f64>, lambda: f64) -> f64 {
    let l1 = l1_norm(alpha);
    (1.0 - lambda) * alpha.norm_squared() + lambda * l1 * l1
}

/// Feasible set `{α : αᵀCα + τ‖α‖²_λ ≤ 1, Lα = 0}`.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    quad: SpectralPsd,
    penalty: PenaltySpec,
    linear: DMatrix<f64>,
    /// Orthonormal basis (p × m') of the row space of `linear`.
    row_basis: DMatrix<f64>,
}

impl ConstraintSet {
    pub fn new(quad: SpectralPsd, penalty: PenaltySpec, linear: DMatrix<f64>) -> Result<Self> {
        penalty.validate()?;
        let p = quad.dim();
        let linear = if linear.nrows() == 0 {
            DMatrix::zeros(0, p)
        } else {
            linear
        };
        if linear.ncols() != p {
            return Err(SfdaError::DimensionMismatch(format!(
                "linear constraints have {} columns, expected {}",
                linear.ncols(),
                p
            )));
        }
        if linear.nrows() >= p && p > 0 {
            return Err(SfdaError::InvalidParameter(format!(
                "{} linear constraints leave no freedom in dimension {}",
                linear.nrows(),
                p
            )));
        }
        let row_basis = orthonormal_row_basis(&linear);
        Ok(ConstraintSet {
            quad,
            penalty,
            linear,
            row_basis,
        })
    }

    pub fn unconstrained(quad: SpectralPsd, penalty: PenaltySpec) -> Result<Self> {
        let p = quad.dim();
        Self::new(quad, penalty, DMatrix::zeros(0, p))
    }

    pub fn dim(&self) -> usize {
        self.quad.dim()
    }

    pub fn quad(&self) -> &SpectralPsd {
        &self.quad
    }

    pub fn penalty(&self) -> PenaltySpec {
        self.penalty
    }

    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }

    pub(crate) fn row_basis(&self) -> &DMatrix<f64> {
        &self.row_basis
    }

    /// Orthogonal projection onto `null(L)`.
    pub fn project_null(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.row_basis.ncols() == 0 {
            return v.clone();
        }
        let coef = self.row_basis.tr_mul(v);
        v - &self.row_basis * coef
    }
}

fn orthonormal_row_basis(linear: &DMatrix<f64>) -> DMatrix<f64> {
    let p = linear.ncols();
    if linear.nrows() == 0 {
        return DMatrix::zeros(p, 0);
    }
    let gram = linear * linear.transpose();
    let (vals, vecs) = sym_eigen_desc(&gram);
    let top = vals[0].max(0.0);
    if top == 0.0 {
        return DMatrix::zeros(p, 0);
    }
    let keep = vals.iter().filter(|&&v| v > 1e-24 * top).count();
    let mut basis = linear.tr_mul(&vecs.columns(0, keep).into_owned());
    for (j, mut col) in basis.column_iter_mut().enumerate() {
        col /= vals[j].sqrt();
    }
    basis
}

/// `q(α) = αᵀCα + τ‖α‖²_λ`.
pub fn q_form(alpha: &DVector<f64>, cs: &ConstraintSet) -> Result<f64> {
    if alpha.len() != cs.dim() {
        return Err(SfdaError::DimensionMismatch(format!(
            "vector of length {} for constraint set of dimension {}",
            alpha.len(),
            cs.dim()
        )));
    }
    Ok(q_value(alpha, &cs.quad, cs.penalty))
}

pub(crate) fn q_value(alpha: &DVector<f64>, quad: &SpectralPsd, penalty: PenaltySpec) -> f64 {
    let mut q = quad.quad(alpha);
    if penalty.tau > 0.0 {
        q += penalty.tau * penalty_norm_sq(alpha, penalty.lambda);
    }
    q
}

/// Starting vector for the outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitStrategy {
    /// Leading eigenvector of `Π` restricted to `null(L)`.
    LeadingRidgeEigvec,
    GivenVector(Vec<f64>),
    /// Coordinate vector at the largest diagonal entry of `Π`.
    UnitCoordinateOfMaxDiag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    /// Relative change in `αᵀΠα` that ends the outer iteration.
    pub tol_outer: f64,
    /// Relative primal/dual residual of the inner splitting iteration.
    pub tol_inner: f64,
    pub init: InitStrategy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_outer_iters: 500,
            max_inner_iters: 10_000,
            tol_outer: 1e-7,
            tol_inner: 1e-8,
            init: InitStrategy::LeadingRidgeEigvec,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iters < 1 || self.max_inner_iters < 1 {
            return Err(SfdaError::InvalidParameter(
                "iteration caps must be at least 1".into(),
            ));
        }
        if !(self.tol_outer > 0.0) || !(self.tol_inner > 0.0) {
            return Err(SfdaError::InvalidParameter(
                "tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Flips `v` so that its largest-magnitude entry (first one on ties) is positive.
pub fn canonical_sign(v: &mut DVector<f64>) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}
