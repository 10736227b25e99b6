//! Small dense linear-algebra helpers built on nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SfdaError};

/// Relative cutoff below which eigenvalues are treated as zero.
pub const RANK_TOL: f64 = 1e-11;

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(m.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Replaces `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Applies `f` to the eigenvalues of a symmetric matrix. Eigenvalues below
/// `floor * λ_max` are clamped to that floor first.
pub fn sym_matrix_function(m: &DMatrix<f64>, floor: f64, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_desc(m);
    let top = vals.iter().cloned().fold(0.0_f64, f64::max);
    let lo = floor * top;
    let mapped = DVector::from_iterator(vals.len(), vals.iter().map(|&v| f(v.max(lo))));
    let mut out = &vecs * DMatrix::from_diagonal(&mapped) * vecs.transpose();
    symmetrize(&mut out);
    out
}

pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_matrix_function(m, 1e-12, f64::sqrt)
}

pub fn sym_inv_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_matrix_function(m, 1e-12, |v| 1.0 / v.sqrt())
}

pub fn l1_norm(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn cosine_similarity(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.dot(b) / (na * nb)
}

/// Numerical rank of the row space of `m`.
pub fn row_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let gram = m * m.transpose();
    let (vals, _) = sym_eigen_desc(&gram);
    let top = vals[0].max(0.0);
    if top == 0.0 {
        return 0;
    }
    vals.iter()
        .filter(|&&v| v > rel_tol * rel_tol * top)
        .count()
}

/// Symmetric positive semidefinite matrix stored by its nonzero spectrum,
/// `M = V diag(s) Vᵀ` with orthonormal `V` (p × r).
#[derive(Debug, Clone)]
pub struct SpectralPsd {
    basis: DMatrix<f64>,
    eigvals: DVector<f64>,
}

impl SpectralPsd {
    pub fn zeros(p: usize) -> Self {
        SpectralPsd {
            basis: DMatrix::zeros(p, 0),
            eigvals: DVector::zeros(0),
        }
    }

    /// Builds from a dense symmetric matrix. Fails if it has an eigenvalue
    /// noticeably below zero.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(SfdaError::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let p = m.nrows();
        let mut sym = m.clone();
        symmetrize(&mut sym);
        let (vals, vecs) = sym_eigen_desc(&sym);
        let scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if scale == 0.0 {
            return Ok(Self::zeros(p));
        }
        if vals[vals.len() - 1] < -1e-8 * scale {
            return Err(SfdaError::Singular(format!(
                "matrix is not positive semidefinite (eigenvalue {:.3e})",
                vals[vals.len() - 1]
            )));
        }
        let keep = vals.iter().filter(|&&v| v > RANK_TOL * scale).count();
        Ok(SpectralPsd {
            basis: vecs.columns(0, keep).into_owned(),
            eigvals: vals.rows(0, keep).into_owned(),
        })
    }

    /// Builds `M = Wᵀ W` from the r × p factor `W`, without forming M.
    pub fn from_factor(w: &DMatrix<f64>) -> Self {
        let p = w.ncols();
        if w.nrows() == 0 {
            return Self::zeros(p);
        }
        // Thin QR of Wᵀ keeps the basis orthonormal to machine precision.
        let qr = w.transpose().qr();
        let q = qr.q();
        let r = qr.r();
        let small = &r * r.transpose();
        let (vals, vecs) = sym_eigen_desc(&small);
        let scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if scale == 0.0 {
            return Self::zeros(p);
        }
        let keep = vals.iter().filter(|&&v| v > RANK_TOL * scale).count();
        let basis = &q * vecs.columns(0, keep);
        SpectralPsd {
            basis,
            eigvals: vals.rows(0, keep).into_owned(),
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.eigvals.len()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn eigvals(&self) -> &DVector<f64> {
        &self.eigvals
    }

    pub fn is_zero(&self) -> bool {
        self.eigvals.is_empty()
    }

    /// `xᵀ M x`
    pub fn quad(&self, x: &DVector<f64>) -> f64 {
        let proj = self.basis.tr_mul(x);
        proj.iter()
            .zip(self.eigvals.iter())
            .map(|(c, s)| s * c * c)
            .sum()
    }

    /// `M x`
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut proj = self.basis.tr_mul(x);
        proj.component_mul_assign(&self.eigvals);
        &self.basis * proj
    }

    /// `(scale·M + shift·I)⁻¹ x`; requires `shift > 0` unless M has full rank.
    pub fn shifted_solve(&self, scale: f64, shift: f64, x: &DVector<f64>) -> DVector<f64> {
        let mut proj = self.basis.tr_mul(x);
        let full_rank = self.rank() == self.dim();
        for (c, s) in proj.iter_mut().zip(self.eigvals.iter()) {
            let d = scale * s + shift;
            if full_rank {
                *c /= d;
            } else {
                *c *= 1.0 / d - 1.0 / shift;
            }
        }
        let lifted = &self.basis * proj;
        if full_rank {
            lifted
        } else {
            lifted + x / shift
        }
    }

    pub fn trace(&self) -> f64 {
        self.eigvals.sum()
    }

    pub fn max_eigval(&self) -> f64 {
        self.eigvals.iter().cloned().fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let scaled = &self.basis * DMatrix::from_diagonal(&self.eigvals);
        let mut m = scaled * self.basis.transpose();
        symmetrize(&mut m);
        m
    }

    /// Rows `idx` of the basis, i.e. the spectral factor of the principal
    /// submatrix `M[idx, idx]`.
    pub(crate) fn basis_rows(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), self.rank(), |i, j| self.basis[(idx[i], j)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_factor(r: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        DMatrix::from_fn(r, p, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn factor_and_dense_routes_agree() {
        let w = random_factor(4, 9, 3);
        let dense = w.transpose() * &w;
        let a = SpectralPsd::from_factor(&w);
        let b = SpectralPsd::from_dense(&dense).unwrap();
        assert_eq!(a.rank(), 4);
        assert_eq!(b.rank(), 4);
        assert!((a.to_dense() - &dense).norm() < 1e-12);
        assert!((b.to_dense() - &dense).norm() < 1e-12);
        let x = DVector::from_fn(9, |i, _| i as f64 - 3.0);
        assert!((a.quad(&x) - x.dot(&(&dense * &x))).abs() < 1e-10);
    }

    #[test]
    fn shifted_solve_inverts() {
        let w = random_factor(3, 6, 11);
        let m = SpectralPsd::from_factor(&w);
        let dense = m.to_dense();
        let x = DVector::from_fn(6, |i, _| (i as f64).sin());
        let y = m.shifted_solve(2.0, 0.7, &x);
        let back = (&dense * 2.0 + DMatrix::identity(6, 6) * 0.7) * &y;
        assert!((back - &x).norm() < 1e-12);

        let full = SpectralPsd::from_dense(&(&dense + DMatrix::identity(6, 6))).unwrap();
        assert_eq!(full.rank(), 6);
        let y = full.shifted_solve(2.0, 0.0, &x);
        let back = (full.to_dense() * 2.0) * &y;
        assert!((back - &x).norm() < 1e-11);
    }

    #[test]
    fn rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(SpectralPsd::from_dense(&m).is_err());
    }

    #[test]
    fn sqrt_squares_back() {
        let w = random_factor(5, 5, 2);
        let m = w.transpose() * &w + DMatrix::identity(5, 5);
        let r = sym_sqrt(&m);
        assert!((&r * &r - &m).norm() < 1e-10);
        let ri = sym_inv_sqrt(&m);
        assert!((&ri * &m * &ri - DMatrix::identity(5, 5)).norm() < 1e-10);
    }

    #[test]
    fn rank_of_rows() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert_eq!(row_rank(&m, 1e-9), 1);
        assert_eq!(row_rank(&DMatrix::zeros(2, 3), 1e-9), 0);
    }
}
