//! Linear maximisation over the penalised ellipsoid.
//!
//! `max cᵀα` subject to `q(α) ≤ 1, Lα = 0` is solved through the unconstrained
//! problem `min q(α) − 2ĉᵀα` on `null(L)` (with `ĉ = c/‖c‖`); the minimiser is
//! a positive multiple of the constrained maximiser and is rescaled onto
//! `q = 1`. The minimisation uses ADMM on the split
//! `αᵀ(C + aI)α − 2ĉᵀα + ι(Lα = 0)` ⊕ `η‖z‖₁²`, with `a = τ(1 − λ)` and
//! `η = τλ`, followed by an exact solve on the detected support.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::prox::prox_sq_l1_into;
use super::{q_value, ConstraintSet, SolverConfig};
use crate::error::{Result, SfdaError};
use crate::linalg::{l1_norm, sym_eigen_desc};

const RELAXATION: f64 = 1.6;
const RHO_MIN: f64 = 1e-8;
const RHO_MAX: f64 = 1e8;
const STABLE_ITERS_BEFORE_POLISH: usize = 5;

/// Returns `argmax cᵀα` subject to `q(α) ≤ 1` and `Lα = 0`; the result lies
/// on `q(α) = 1`.
pub fn solve_linear_max(
    c: &DVector<f64>,
    cs: &ConstraintSet,
    cfg: &SolverConfig,
) -> Result<DVector<f64>> {
    cfg.validate()?;
    LinearMaxSolver::new(cs, cfg.max_inner_iters, cfg.tol_inner)?.solve(c)
}

/// `(2C + shift·I)α + Eν = rhs`, `Eᵀα = 0` with `E` the orthonormal row basis
/// of `L`, solved through the spectral form of `C` and an `m × m` Schur
/// complement.
struct QuadBlock {
    shift: f64,
    /// `M⁻¹E`
    y: DMatrix<f64>,
    schur: Option<Cholesky<f64, Dyn>>,
}

impl QuadBlock {
    fn new(cs: &ConstraintSet, shift: f64) -> Result<Self> {
        let e = cs.row_basis();
        let m = e.ncols();
        let mut y = DMatrix::zeros(cs.dim(), m);
        for j in 0..m {
            let col = cs
                .quad()
                .shifted_solve(2.0, shift, &e.column(j).into_owned());
            y.set_column(j, &col);
        }
        let schur = if m == 0 {
            None
        } else {
            let mut s = e.tr_mul(&y);
            crate::linalg::symmetrize(&mut s);
            Some(s.cholesky().ok_or_else(|| {
                SfdaError::Singular("constraint block of the inner system is singular".into())
            })?)
        };
        Ok(QuadBlock { shift, y, schur })
    }

    fn solve(&self, cs: &ConstraintSet, rhs: &DVector<f64>) -> DVector<f64> {
        let mut x = cs.quad().shifted_solve(2.0, self.shift, rhs);
        if let Some(chol) = &self.schur {
            let nu = chol.solve(&cs.row_basis().tr_mul(&x));
            x -= &self.y * nu;
        }
        x
    }
}

struct WarmState {
    z: DVector<f64>,
    u: DVector<f64>,
    rho: f64,
}

/// Reusable inner solver for a fixed constraint set. Successive calls with
/// slowly varying `c` (as in the outer power-type iteration) warm start from
/// the previous splitting state.
pub(crate) struct LinearMaxSolver<'a> {
    cs: &'a ConstraintSet,
    max_iters: usize,
    tol: f64,
    ridge: f64,
    eta: f64,
    direct: Option<QuadBlock>,
    warm: Option<WarmState>,
    order: Vec<usize>,
    pub(crate) last_iterations: usize,
}

impl<'a> LinearMaxSolver<'a> {
    pub(crate) fn new(cs: &'a ConstraintSet, max_iters: usize, tol: f64) -> Result<Self> {
        let penalty = cs.penalty();
        let ridge = penalty.ridge_weight();
        let eta = penalty.l1_weight();
        let direct = if eta == 0.0 {
            if ridge == 0.0 && cs.quad().rank() < cs.dim() {
                return Err(SfdaError::UnboundedObjective);
            }
            Some(QuadBlock::new(cs, 2.0 * ridge)?)
        } else {
            None
        };
        Ok(LinearMaxSolver {
            cs,
            max_iters,
            tol,
            ridge,
            eta,
            direct,
            warm: None,
            order: Vec::new(),
            last_iterations: 0,
        })
    }

    pub(crate) fn solve(&mut self, c: &DVector<f64>) -> Result<DVector<f64>> {
        let p = self.cs.dim();
        if c.len() != p {
            return Err(SfdaError::DimensionMismatch(format!(
                "objective has length {}, expected {}",
                c.len(),
                p
            )));
        }
        let norm = c.norm();
        if !norm.is_finite() {
            return Err(SfdaError::InvalidParameter(
                "objective vector is not finite".into(),
            ));
        }
        if norm == 0.0 || self.cs.project_null(c).norm() <= 1e-12 * norm {
            return Err(SfdaError::DegenerateObjective);
        }
        let chat = c / norm;

        let minimiser = match &self.direct {
            Some(block) => {
                self.last_iterations = 0;
                block.solve(self.cs, &(&chat * 2.0))
            }
            None => self.admm(&chat)?,
        };
        let q = q_value(&minimiser, self.cs.quad(), self.cs.penalty());
        if !(q > 0.0) || !q.is_finite() {
            return Err(SfdaError::DegenerateObjective);
        }
        Ok(minimiser / q.sqrt())
    }

    fn initial_rho(&self) -> f64 {
        let p = self.cs.dim() as f64;
        let curvature = 2.0 * (self.cs.quad().trace() / p + self.ridge);
        let rho = if curvature > 0.0 {
            curvature
        } else {
            2.0 * self.eta
        };
        rho.clamp(RHO_MIN, RHO_MAX)
    }

    fn admm(&mut self, chat: &DVector<f64>) -> Result<DVector<f64>> {
        let cs = self.cs;
        let p = cs.dim();
        let constrained = cs.row_basis().ncols() > 0;
        let (mut z, mut u, mut rho) = match self.warm.take() {
            Some(w) => (w.z, w.u, w.rho),
            None => (DVector::zeros(p), DVector::zeros(p), self.initial_rho()),
        };
        let mut block = QuadBlock::new(cs, 2.0 * self.ridge + rho)?;
        let mut alpha = DVector::zeros(p);
        let mut relaxed = DVector::zeros(p);
        let mut z_old = DVector::zeros(p);
        let mut signs = vec![0i8; p];
        let mut prev_signs = vec![0i8; p];
        let mut tried: Option<Vec<i8>> = None;
        let mut stable = 0usize;
        let mut since_adapt = 0usize;
        let mut residual = f64::INFINITY;

        for iter in 1..=self.max_iters {
            let rhs = chat * 2.0 + (&z - &u) * rho;
            alpha = block.solve(cs, &rhs);
            relaxed.copy_from(&(&alpha * RELAXATION + &z * (1.0 - RELAXATION)));
            z_old.copy_from(&z);
            let shifted = &relaxed + &u;
            prox_sq_l1_into(
                shifted.as_slice(),
                self.eta / rho,
                z.as_mut_slice(),
                &mut self.order,
            );
            u += &relaxed - &z;

            let primal = (&alpha - &z).norm();
            let dual = rho * (&z - &z_old).norm();
            let eps_primal = self.tol * alpha.norm().max(z.norm()).max(1e-12);
            let eps_dual = self.tol * (rho * u.norm()).max(1e-12);
            residual = (primal / eps_primal).max(dual / eps_dual) * self.tol;

            if primal <= eps_primal && dual <= eps_dual {
                self.last_iterations = iter;
                let solution = match self.polish_if_new(chat, &z, &mut signs, &tried) {
                    Some(exact) => exact,
                    None if constrained => alpha.clone(),
                    None => z.clone(),
                };
                self.warm = Some(WarmState { z, u, rho });
                return Ok(solution);
            }

            for (s, v) in signs.iter_mut().zip(z.iter()) {
                *s = sign_of(*v);
            }
            if signs == prev_signs && signs.iter().any(|&s| s != 0) {
                stable += 1;
            } else {
                stable = 0;
                std::mem::swap(&mut signs, &mut prev_signs);
            }
            if stable >= STABLE_ITERS_BEFORE_POLISH && tried.as_ref() != Some(&prev_signs) {
                if let Some(exact) = self.polish(chat, &prev_signs) {
                    self.last_iterations = iter;
                    self.warm = Some(WarmState {
                        z: exact.clone(),
                        u,
                        rho,
                    });
                    return Ok(exact);
                }
                tried = Some(prev_signs.clone());
            }

            since_adapt += 1;
            if since_adapt >= 10 {
                let ratio = (primal / eps_primal) / (dual / eps_dual).max(1e-300);
                let factor = if ratio > 10.0 {
                    2.0
                } else if ratio < 0.1 {
                    0.5
                } else {
                    1.0
                };
                let new_rho = (rho * factor).clamp(RHO_MIN, RHO_MAX);
                if new_rho != rho {
                    u *= rho / new_rho;
                    rho = new_rho;
                    block = QuadBlock::new(cs, 2.0 * self.ridge + rho)?;
                    since_adapt = 0;
                }
            }
        }
        self.last_iterations = self.max_iters;
        self.warm = None;
        Err(SfdaError::Convergence {
            stage: "inner",
            iterations: self.max_iters,
            residual,
            last_iterate: Some(alpha.as_slice().to_vec()),
        })
    }

    fn polish_if_new(
        &self,
        chat: &DVector<f64>,
        z: &DVector<f64>,
        signs: &mut [i8],
        tried: &Option<Vec<i8>>,
    ) -> Option<DVector<f64>> {
        for (s, v) in signs.iter_mut().zip(z.iter()) {
            *s = sign_of(*v);
        }
        if tried.as_deref() == Some(&*signs) {
            return None;
        }
        self.polish(chat, signs)
    }

    /// Solves the problem exactly with the support and signs fixed to
    /// `signs`, and returns the result only if it satisfies the optimality
    /// conditions of the full problem.
    fn polish(&self, chat: &DVector<f64>, signs: &[i8]) -> Option<DVector<f64>> {
        let cs = self.cs;
        let support: Vec<usize> = (0..signs.len()).filter(|&j| signs[j] != 0).collect();
        let k = support.len();
        if k == 0 {
            return None;
        }
        let s = DVector::from_iterator(k, support.iter().map(|&j| signs[j] as f64));
        let e = cs.row_basis();
        let m = e.ncols();
        let e_s = DMatrix::from_fn(k, m, |i, j| e[(support[i], j)]);

        let mut rhs = DMatrix::zeros(k, 1 + m);
        for (i, &j) in support.iter().enumerate() {
            rhs[(i, 0)] = 2.0 * chat[j];
        }
        rhs.columns_mut(1, m).copy_from(&e_s);
        let sol = self.restricted_solve(&support, &s, &rhs)?;

        let x0 = sol.column(0).into_owned();
        let (alpha_s, nu) = if m == 0 {
            (x0, DVector::zeros(0))
        } else {
            let y = sol.columns(1, m).into_owned();
            let mut schur = e_s.tr_mul(&y);
            crate::linalg::symmetrize(&mut schur);
            let nu = pseudo_solve(&schur, &e_s.tr_mul(&x0))?;
            (x0 - y * &nu, nu)
        };
        if support
            .iter()
            .enumerate()
            .any(|(i, _)| !(alpha_s[i] * s[i] > 0.0))
        {
            return None;
        }

        let mut alpha = DVector::zeros(cs.dim());
        for (i, &j) in support.iter().enumerate() {
            alpha[j] = alpha_s[i];
        }
        let scale = alpha.norm();
        if m > 0 && e.tr_mul(&alpha).amax() > 1e-10 * scale {
            return None;
        }

        let t = l1_norm(&alpha);
        let mut grad = (cs.quad().apply(&alpha) + &alpha * self.ridge) * 2.0 - chat * 2.0;
        if m > 0 {
            grad += e * &nu;
        }
        let bound = 2.0 * self.eta * t;
        let grad_scale = 1.0 + bound;
        let mut on_support = vec![false; cs.dim()];
        for (i, &j) in support.iter().enumerate() {
            on_support[j] = true;
            if (grad[j] + bound * s[i]).abs() > 1e-9 * grad_scale {
                return None;
            }
        }
        for j in 0..cs.dim() {
            if !on_support[j] && grad[j].abs() > bound * (1.0 + 1e-9) + 1e-12 {
                return None;
            }
        }
        Some(alpha)
    }

    /// Applies the inverse of `2(C_SS + aI + η ssᵀ)` to the columns of `rhs`.
    fn restricted_solve(
        &self,
        support: &[usize],
        s: &DVector<f64>,
        rhs: &DMatrix<f64>,
    ) -> Option<DMatrix<f64>> {
        let quad = self.cs.quad();
        let vs = quad.basis_rows(support);
        let sig = quad.eigvals();
        let k = support.len();
        let r = vs.ncols();
        let a = self.ridge;
        let eta = self.eta;

        if a > 0.0 && k > r + 1 {
            // Woodbury: (aI + U D Uᵀ)⁻¹ = (I − U (aD⁻¹ + UᵀU)⁻¹ Uᵀ) / a.
            let mut u = DMatrix::zeros(k, r + 1);
            u.columns_mut(0, r).copy_from(&vs);
            u.set_column(r, s);
            let mut inner = u.tr_mul(&u);
            for j in 0..r {
                inner[(j, j)] += a / sig[j];
            }
            inner[(r, r)] += a / eta;
            let chol = inner.cholesky()?;
            let w = chol.solve(&u.tr_mul(rhs));
            Some((rhs - u * w) / (2.0 * a))
        } else {
            let mut scaled = vs.clone();
            for (j, mut col) in scaled.column_iter_mut().enumerate() {
                col *= sig[j];
            }
            let mut mat = scaled * vs.transpose() + s * s.transpose() * eta;
            for i in 0..k {
                mat[(i, i)] += a;
            }
            mat *= 2.0;
            crate::linalg::symmetrize(&mut mat);
            let chol = mat.cholesky()?;
            Some(chol.solve(rhs))
        }
    }
}

fn sign_of(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Minimum-norm solution of `S x = b` for symmetric PSD `S`.
fn pseudo_solve(s: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let (vals, vecs) = sym_eigen_desc(s);
    let top = vals.iter().cloned().fold(0.0, f64::max);
    if !(top > 0.0) {
        return None;
    }
    let mut coef = vecs.tr_mul(b);
    for (c, &v) in coef.iter_mut().zip(vals.iter()) {
        *c = if v > 1e-10 * top { *c / v } else { 0.0 };
    }
    Some(vecs * coef)
}
