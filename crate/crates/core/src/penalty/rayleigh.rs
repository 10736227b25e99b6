use nalgebra::{DMatrix, DVector};

use super::{canonical_sign, ConstraintSet, InitStrategy, LinearMaxSolver, SolverConfig};
use crate::error::{Result, SfdaError};
use crate::linalg::SpectralPsd;

#[derive(Debug, Clone)]
pub struct RayleighSolution {
    /// Maximiser, on `q = 1`, with its largest-magnitude entry positive.
    pub direction: DVector<f64>,
    /// `directionᵀ Π direction`
    pub value: f64,
    pub iterations: usize,
    /// Objective after each outer step.
    pub history: Vec<f64>,
}

/// Maximises `αᵀΠα` over the constraint set by iterating
/// `α ← argmax (Πα)ᵀα'` subject to the constraints. Each step does not
/// decrease the objective since `αᵀΠα` is convex.
///
/// If rounding in the inner solve makes a step decrease the objective, the
/// iteration stops and returns the preceding iterate.
pub fn maximize_rayleigh(
    pi: &SpectralPsd,
    cs: &ConstraintSet,
    cfg: &SolverConfig,
) -> Result<RayleighSolution> {
    cfg.validate()?;
    let p = cs.dim();
    if pi.dim() != p {
        return Err(SfdaError::DimensionMismatch(format!(
            "objective matrix has dimension {}, constraints have {}",
            pi.dim(),
            p
        )));
    }
    if pi.is_zero() {
        return Err(SfdaError::DegenerateInit);
    }
    let start = initial_vector(pi, cs, &cfg.init)?;
    let mut c = pi.apply(&start);
    if c.norm() <= 1e-14 * pi.max_eigval() * start.norm() {
        return Err(SfdaError::DegenerateInit);
    }

    let mut solver = LinearMaxSolver::new(cs, cfg.max_inner_iters, cfg.tol_inner)?;
    let mut history = Vec::new();
    let mut previous: Option<(DVector<f64>, f64)> = None;
    let mut last_change = f64::INFINITY;

    for iter in 1..=cfg.max_outer_iters {
        let alpha = solver.solve(&c)?;
        let value = pi.quad(&alpha);
        history.push(value);
        if let Some((prev_alpha, prev_value)) = previous.take() {
            if value < prev_value {
                return Ok(finish(prev_alpha, prev_value, iter - 1, history));
            }
            last_change = (value - prev_value).abs() / value.abs().max(f64::MIN_POSITIVE);
            if last_change <= cfg.tol_outer {
                return Ok(finish(alpha, value, iter, history));
            }
        }
        c = pi.apply(&alpha);
        previous = Some((alpha, value));
    }
    let last = previous.map(|(a, _)| a.as_slice().to_vec());
    Err(SfdaError::Convergence {
        stage: "outer",
        iterations: cfg.max_outer_iters,
        residual: last_change,
        last_iterate: last,
    })
}

fn finish(
    mut direction: DVector<f64>,
    value: f64,
    iterations: usize,
    history: Vec<f64>,
) -> RayleighSolution {
    canonical_sign(&mut direction);
    RayleighSolution {
        direction,
        value,
        iterations,
        history,
    }
}

fn initial_vector(
    pi: &SpectralPsd,
    cs: &ConstraintSet,
    init: &InitStrategy,
) -> Result<DVector<f64>> {
    let p = cs.dim();
    match init {
        InitStrategy::GivenVector(v) => {
            if v.len() != p {
                return Err(SfdaError::DimensionMismatch(format!(
                    "initial vector has length {}, expected {}",
                    v.len(),
                    p
                )));
            }
            Ok(DVector::from_column_slice(v))
        }
        InitStrategy::UnitCoordinateOfMaxDiag => {
            let basis = pi.basis();
            let eig = pi.eigvals();
            let mut best = (0usize, f64::NEG_INFINITY);
            for i in 0..p {
                let d: f64 = (0..pi.rank())
                    .map(|j| eig[j] * basis[(i, j)] * basis[(i, j)])
                    .sum();
                if d > best.1 {
                    best = (i, d);
                }
            }
            let mut e = DVector::zeros(p);
            e[best.0] = 1.0;
            Ok(e)
        }
        InitStrategy::LeadingRidgeEigvec => {
            if cs.row_basis().ncols() == 0 {
                return Ok(pi.basis().column(0).into_owned());
            }
            // Leading eigenvector of PΠP with P the projector onto null(L),
            // from the factor diag(√s) Vᵀ P.
            let basis = pi.basis();
            let mut factor = DMatrix::zeros(pi.rank(), p);
            for j in 0..pi.rank() {
                let projected =
                    cs.project_null(&basis.column(j).into_owned()) * pi.eigvals()[j].sqrt();
                factor.set_row(j, &projected.transpose());
            }
            let restricted = SpectralPsd::from_factor(&factor);
            if restricted.is_zero() {
                return Err(SfdaError::DegenerateInit);
            }
            Ok(restricted.basis().column(0).into_owned())
        }
    }
}
