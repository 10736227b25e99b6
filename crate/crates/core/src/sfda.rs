//! Sequential extraction of sparse discriminant components.
//!
//! The first component maximises `αᵀB̂α` over `{αᵀΣ̂α + τ‖α‖²_λ ≤ 1}`. Each
//! later component solves the same problem with the extra equality
//! constraints `ξ̂_jᵀα = 0`, where `ξ̂_j` is a soft-thresholded `B̂α̂_j`
//! (or the raw `B̂α̂_j` for the unthresholded variant).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::classifier::{discriminant_matrix, gram_from_within};
use crate::dataset::LabeledDataset;
use crate::error::{Result, SfdaError};
use crate::estimators::{summarize, ClassSummaries};
use crate::linalg::{l1_norm, row_rank, SpectralPsd};
use crate::penalty::{maximize_rayleigh, ConstraintSet, PenaltySpec, SolverConfig};

/// Relative rank tolerance for the stacked constraint vectors.
const CONSTRAINT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Later components are orthogonal to soft-thresholded `B̂α̂_j`.
    Thresholded,
    /// Later components are orthogonal to the raw `B̂α̂_j`.
    Unthresholded,
}

impl std::str::FromStr for Variant {
    type Err = SfdaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "thresholded" | "threshold" => Ok(Variant::Thresholded),
            "unthresholded" | "raw" => Ok(Variant::Unthresholded),
            other => Err(SfdaError::InvalidParameter(format!(
                "unknown variant {other:?}"
            ))),
        }
    }
}

/// Soft-threshold level used when building constraint vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kappa {
    /// The same `κ` for every constraint vector.
    Absolute(f64),
    /// `κ_j = factor · ‖B̂α̂_j‖₁`.
    Relative(f64),
}

impl Kappa {
    fn value(&self) -> f64 {
        match *self {
            Kappa::Absolute(v) | Kappa::Relative(v) => v,
        }
    }

    /// Threshold for the vector `v = B̂α̂_j`.
    pub fn resolve(&self, v: &DVector<f64>) -> f64 {
        match *self {
            Kappa::Absolute(k) => k,
            Kappa::Relative(f) => f * l1_norm(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub penalty: PenaltySpec,
    pub kappa: Kappa,
    pub variant: Variant,
    pub solver: SolverConfig,
}

impl FitParams {
    pub fn new(tau: f64, lambda: f64, kappa: Kappa, variant: Variant) -> Result<Self> {
        let params = FitParams {
            penalty: PenaltySpec::new(tau, lambda)?,
            kappa,
            variant,
            solver: SolverConfig::default(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        self.penalty.validate()?;
        self.solver.validate()?;
        let k = self.kappa.value();
        if !(k >= 0.0 && k.is_finite()) {
            return Err(SfdaError::InvalidParameter(format!(
                "kappa must be >= 0, got {k}"
            )));
        }
        Ok(())
    }
}

/// Fitted discriminant: components, constraint vectors, class means and the
/// metric `D̂ = AᵀK̂⁻¹A` used for classification.
#[derive(Debug, Clone)]
pub struct DiscriminantModel {
    params: FitParams,
    class_means: DMatrix<f64>,
    counts: Vec<usize>,
    components: DMatrix<f64>,
    constraints: DMatrix<f64>,
    gram: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
    discriminant: DMatrix<f64>,
    /// `A x̄_i` for every class, as rows.
    projected_means: DMatrix<f64>,
}

impl DiscriminantModel {
    /// Assembles a model from its fitted parts; `D̂` is recomputed from the
    /// components and gram matrix.
    pub fn from_parts(
        params: FitParams,
        class_means: DMatrix<f64>,
        counts: Vec<usize>,
        components: DMatrix<f64>,
        constraints: DMatrix<f64>,
        gram: DMatrix<f64>,
    ) -> Result<Self> {
        params.validate()?;
        let k = class_means.nrows();
        let p = class_means.ncols();
        if k < 2 || counts.len() != k {
            return Err(SfdaError::DimensionMismatch(format!(
                "{} class means with {} counts",
                k,
                counts.len()
            )));
        }
        if components.nrows() != k - 1 || components.ncols() != p {
            return Err(SfdaError::DimensionMismatch(format!(
                "components are {}x{}, expected {}x{}",
                components.nrows(),
                components.ncols(),
                k - 1,
                p
            )));
        }
        if constraints.nrows() != k - 2 || (k > 2 && constraints.ncols() != p) {
            return Err(SfdaError::DimensionMismatch(format!(
                "constraints are {}x{}, expected {}x{}",
                constraints.nrows(),
                constraints.ncols(),
                k - 2,
                p
            )));
        }
        if gram.nrows() != k - 1 || gram.ncols() != k - 1 {
            return Err(SfdaError::DimensionMismatch(
                "gram matrix has the wrong shape".into(),
            ));
        }
        let (discriminant, gram_inv) = discriminant_matrix(&components, &gram)?;
        let projected_means = &class_means * components.transpose();
        let constraints = if k == 2 {
            DMatrix::zeros(0, p)
        } else {
            constraints
        };
        Ok(DiscriminantModel {
            params,
            class_means,
            counts,
            components,
            constraints,
            gram,
            gram_inv,
            discriminant,
            projected_means,
        })
    }

    pub fn p(&self) -> usize {
        self.class_means.ncols()
    }

    pub fn k(&self) -> usize {
        self.class_means.nrows()
    }

    pub fn params(&self) -> &FitParams {
        &self.params
    }

    pub fn class_means(&self) -> &DMatrix<f64> {
        &self.class_means
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// `(K − 1) × p`, one component per row.
    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    /// `(K − 2) × p`, one constraint vector per row.
    pub fn constraints(&self) -> &DMatrix<f64> {
        &self.constraints
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn discriminant(&self) -> &DMatrix<f64> {
        &self.discriminant
    }

    pub(crate) fn gram_inv(&self) -> &DMatrix<f64> {
        &self.gram_inv
    }

    pub(crate) fn projected_means(&self) -> &DMatrix<f64> {
        &self.projected_means
    }

    /// Number of coordinates that are nonzero in at least one component.
    pub fn support_size(&self) -> usize {
        (0..self.p())
            .filter(|&j| self.components.column(j).iter().any(|&v| v != 0.0))
            .count()
    }
}

/// Spectral forms of `Σ̂` and `B̂`, computed once and shared between the
/// component solves.
pub(crate) struct Prepared<'a> {
    pub(crate) summaries: &'a ClassSummaries,
    pub(crate) within: SpectralPsd,
    pub(crate) between: SpectralPsd,
}

impl<'a> Prepared<'a> {
    pub(crate) fn new(summaries: &'a ClassSummaries) -> Self {
        Prepared {
            summaries,
            within: summaries.within_spectral(),
            between: summaries.between_spectral(),
        }
    }

    pub(crate) fn first_component(&self, params: &FitParams) -> Result<DVector<f64>> {
        let cs = ConstraintSet::unconstrained(self.within.clone(), params.penalty)?;
        Ok(maximize_rayleigh(&self.between, &cs, &params.solver)?.direction)
    }

    pub(crate) fn next_component(
        &self,
        constraints: &[DVector<f64>],
        params: &FitParams,
    ) -> Result<DVector<f64>> {
        let p = self.summaries.p();
        let component = constraints.len() + 1;
        let stack = DMatrix::from_fn(constraints.len(), p, |i, j| constraints[i][j]);
        if row_rank(&stack, CONSTRAINT_RANK_TOL) < constraints.len() {
            return Err(SfdaError::RankDeficientConstraints { component });
        }
        let cs = ConstraintSet::new(self.within.clone(), params.penalty, stack)?;
        Ok(maximize_rayleigh(&self.between, &cs, &params.solver)?.direction)
    }

    pub(crate) fn constraint_for(&self, alpha: &DVector<f64>, params: &FitParams) -> DVector<f64> {
        let v = self.summaries.between_apply(alpha);
        match params.variant {
            Variant::Thresholded => soft_threshold(&v, params.kappa.resolve(&v)),
            Variant::Unthresholded => v,
        }
    }

    /// Fits all `K − 1` components, optionally reusing a first component
    /// already computed for the same `(τ, λ)`.
    pub(crate) fn fit(
        &self,
        params: &FitParams,
        first: Option<&DVector<f64>>,
    ) -> Result<DiscriminantModel> {
        params.validate()?;
        let s = self.summaries;
        let k = s.k();
        if k < 2 {
            return Err(SfdaError::InvalidParameter(
                "at least two classes are required".into(),
            ));
        }
        let p = s.p();
        let mut components = vec![match first {
            Some(a) => a.clone(),
            None => self.first_component(params)?,
        }];
        let mut constraints: Vec<DVector<f64>> = Vec::new();
        for _ in 2..k {
            let last = components.last().expect("at least one component");
            constraints.push(self.constraint_for(last, params));
            components.push(self.next_component(&constraints, params)?);
        }
        let comp = DMatrix::from_fn(k - 1, p, |i, j| components[i][j]);
        let cons = DMatrix::from_fn(constraints.len(), p, |i, j| constraints[i][j]);
        let gram = gram_from_within(s, &comp);
        DiscriminantModel::from_parts(
            params.clone(),
            s.class_means.clone(),
            s.counts.clone(),
            comp,
            cons,
            gram,
        )
    }
}

/// Leading sparse discriminant component.
pub fn first_component(summaries: &ClassSummaries, params: &FitParams) -> Result<DVector<f64>> {
    params.validate()?;
    Prepared::new(summaries).first_component(params)
}

/// Next component, orthogonal to every vector in `constraints`.
pub fn next_component(
    summaries: &ClassSummaries,
    constraints: &[DVector<f64>],
    params: &FitParams,
) -> Result<DVector<f64>> {
    params.validate()?;
    Prepared::new(summaries).next_component(constraints, params)
}

/// Coordinate-wise `sign(v)·(|v| − κ/2)₊`, the minimiser of
/// `‖ξ − v‖₂² + κ‖ξ‖₁`.
pub fn soft_threshold(v: &DVector<f64>, kappa: f64) -> DVector<f64> {
    let half = 0.5 * kappa;
    v.map(|x| {
        if x.abs() >= half {
            (x.abs() - half).copysign(x)
        } else {
            0.0
        }
    })
}

/// Constraint vector `ξ̂` obtained by soft-thresholding `B̂α_j` at `κ/2`.
pub fn threshold_constraint(
    b_hat: &DMatrix<f64>,
    alpha_j: &DVector<f64>,
    kappa: f64,
) -> Result<DVector<f64>> {
    if !(kappa >= 0.0) {
        return Err(SfdaError::InvalidParameter(format!(
            "kappa must be >= 0, got {kappa}"
        )));
    }
    if b_hat.ncols() != alpha_j.len() {
        return Err(SfdaError::DimensionMismatch(format!(
            "matrix has {} columns, vector has length {}",
            b_hat.ncols(),
            alpha_j.len()
        )));
    }
    Ok(soft_threshold(&(b_hat * alpha_j), kappa))
}

/// Estimates class summaries and fits all discriminant components.
pub fn fit(data: &LabeledDataset, params: &FitParams) -> Result<DiscriminantModel> {
    params.validate()?;
    if data.k() < 2 {
        return Err(SfdaError::InvalidParameter(
            "at least two classes are required".into(),
        ));
    }
    let summaries = summarize(data)?;
    fit_summaries(&summaries, params)
}

pub fn fit_summaries(summaries: &ClassSummaries, params: &FitParams) -> Result<DiscriminantModel> {
    Prepared::new(summaries).fit(params, None)
}
