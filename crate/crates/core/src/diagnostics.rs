//! Population-level quantities for known-parameter models and empirical
//! consistency experiments.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::std_normal_cdf;
use crate::error::{Result, SfdaError};
use crate::linalg::{l1_norm, sym_eigen_desc, sym_inv_sqrt, sym_sqrt, symmetrize};
use crate::penalty::canonical_sign;
use crate::sfda::{fit, FitParams, Kappa, Variant};
use crate::simgen::{sample_gaussian_classes, stream_rng};

/// Largest dimension for which dense population quantities are computed.
pub const MAX_THEORY_DIM: usize = 2000;

const STREAM_THEORY_MEANS: u64 = 6;

/// Exact discriminant quantities of a common-covariance Gaussian model.
#[derive(Debug, Clone)]
pub struct TheoryContext {
    pub sigma: DMatrix<f64>,
    /// Class means as supplied (K × p).
    pub means: DMatrix<f64>,
    /// Whether the means had to be shifted to sum to zero before forming `B`.
    pub recentered: bool,
    /// `B = Σ_k μ̃_k μ̃_kᵀ / K` with centred means `μ̃_k`.
    pub b: DMatrix<f64>,
    /// `Ξ = Σ^{-1/2} B Σ^{-1/2}`.
    pub xi: DMatrix<f64>,
    /// Leading `K − 1` eigenvalues of `Ξ`, descending.
    pub eigvals: Vec<f64>,
    /// Rows `γ_k`: orthonormal eigenvectors of `Ξ`.
    pub gammas: DMatrix<f64>,
    /// Rows `α_k = Σ^{-1/2} γ_k`, with their largest-magnitude entry positive.
    pub true_components: DMatrix<f64>,
    /// `D = Σ_k α_k α_kᵀ`.
    pub d: DMatrix<f64>,
    /// `max_k max(‖α_k‖₁, ‖Σα_k‖₁)`.
    pub lambda_p: f64,
    sigma_sqrt: DMatrix<f64>,
}

impl TheoryContext {
    pub fn k(&self) -> usize {
        self.means.nrows()
    }

    pub fn p(&self) -> usize {
        self.sigma.nrows()
    }

    /// Rate scale `√(K log p / n)`.
    pub fn s_n(&self, n: usize) -> f64 {
        rate_scale(self.k(), self.p(), n)
    }

    pub fn component(&self, k: usize) -> DVector<f64> {
        self.true_components.row(k).transpose()
    }

    /// `μ_j − μ_i` (1-based classes).
    pub fn delta(&self, i: usize, j: usize) -> DVector<f64> {
        (self.means.row(j - 1) - self.means.row(i - 1)).transpose()
    }

    /// Constraint vector `ξ_k = Bα_k` of the population problem.
    pub fn constraint(&self, k: usize) -> DVector<f64> {
        &self.b * self.component(k)
    }
}

/// `√(K log p / n)`.
pub fn rate_scale(k: usize, p: usize, n: usize) -> f64 {
    (k as f64 * (p as f64).ln() / n as f64).sqrt()
}

pub fn build_theory(sigma: &DMatrix<f64>, means: &DMatrix<f64>) -> Result<TheoryContext> {
    let k = means.nrows();
    let p = means.ncols();
    if sigma.shape() != (p, p) {
        return Err(SfdaError::DimensionMismatch(
            "covariance does not match the means".into(),
        ));
    }
    if p > MAX_THEORY_DIM {
        return Err(SfdaError::InvalidParameter(format!(
            "dense population quantities are limited to p <= {MAX_THEORY_DIM}, got {p}"
        )));
    }
    if k < 2 {
        return Err(SfdaError::InvalidParameter(
            "at least two classes are required".into(),
        ));
    }
    if sigma.clone().cholesky().is_none() {
        return Err(SfdaError::Singular(
            "covariance is not positive definite".into(),
        ));
    }

    let center = means.row_mean();
    let scale = means.amax().max(1.0);
    let recentered = center.amax() > 1e-12 * scale;
    let mut centered = means.clone();
    for mut row in centered.row_iter_mut() {
        row -= &center;
    }
    let mut b = centered.transpose() * &centered / k as f64;
    symmetrize(&mut b);

    let inv_root = sym_inv_sqrt(sigma);
    let mut xi = &inv_root * &b * &inv_root;
    symmetrize(&mut xi);
    let (vals, vecs) = sym_eigen_desc(&xi);
    let top = vals[0].max(0.0);
    let found = vals
        .iter()
        .take(k - 1)
        .filter(|&&v| v > 1e-10 * top.max(1e-300))
        .count();
    if top <= 0.0 || found < k - 1 {
        return Err(SfdaError::MissingEigenvalues {
            expected: k - 1,
            found: if top <= 0.0 { 0 } else { found },
        });
    }

    let mut gammas = DMatrix::zeros(k - 1, p);
    let mut comps = DMatrix::zeros(k - 1, p);
    let mut d = DMatrix::zeros(p, p);
    let mut lambda_p: f64 = 0.0;
    for c in 0..k - 1 {
        let mut alpha = &inv_root * vecs.column(c);
        canonical_sign(&mut alpha);
        let gamma = sym_sqrt(sigma) * &alpha;
        gammas.set_row(c, &gamma.transpose());
        comps.set_row(c, &alpha.transpose());
        d += &alpha * alpha.transpose();
        lambda_p = lambda_p
            .max(l1_norm(&alpha))
            .max(l1_norm(&(sigma * &alpha)));
    }
    symmetrize(&mut d);
    Ok(TheoryContext {
        sigma: sigma.clone(),
        means: means.clone(),
        recentered,
        b,
        xi,
        eigvals: vals.iter().take(k - 1).copied().collect(),
        gammas,
        true_components: comps,
        d,
        lambda_p,
        sigma_sqrt: sym_sqrt(sigma),
    })
}

/// Error rate of the two-class rule built from `δ̂ = x̄₂ − x̄₁`, metric `D̂`
/// and midpoint of the sample means, when the classes are `N(μ_i, Σ)` with
/// equal priors.
pub fn conditional_error_two_class(
    ctx: &TheoryContext,
    delta_hat: &DVector<f64>,
    d_hat: &DMatrix<f64>,
    xbar1: &DVector<f64>,
    xbar2: &DVector<f64>,
) -> Result<f64> {
    if ctx.k() != 2 {
        return Err(SfdaError::InvalidParameter(
            "conditional error formula needs two classes".into(),
        ));
    }
    let p = ctx.p();
    if delta_hat.len() != p || xbar1.len() != p || xbar2.len() != p || d_hat.shape() != (p, p) {
        return Err(SfdaError::DimensionMismatch(
            "inputs do not match the context dimension".into(),
        ));
    }
    let w = d_hat * delta_hat;
    let spread = (&ctx.sigma_sqrt * &w).norm();
    if !(spread > 0.0) {
        return Err(SfdaError::Singular(
            "conditional error denominator is zero".into(),
        ));
    }
    let mu1 = ctx.means.row(0).transpose();
    let mu2 = ctx.means.row(1).transpose();
    let first = w.dot(&(&mu2 * 2.0 - xbar1 - xbar2));
    let second = w.dot(&(xbar1 + xbar2 - &mu1 * 2.0));
    Ok(0.5 * std_normal_cdf(-first / (2.0 * spread))
        + 0.5 * std_normal_cdf(-second / (2.0 * spread)))
}

/// Operator norm of the difference between the orthogonal projectors onto
/// the row spaces of `a` and `b`.
pub fn projection_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let proj = |m: &DMatrix<f64>| -> DMatrix<f64> {
        let (vals, vecs) = sym_eigen_desc(&(m.transpose() * m));
        let top = vals[0].max(0.0);
        let keep = vals
            .iter()
            .filter(|&&v| v > 1e-12 * top && top > 0.0)
            .count();
        let basis = vecs.columns(0, keep);
        basis * basis.transpose()
    };
    let mut diff = proj(a) - proj(b);
    symmetrize(&mut diff);
    let (vals, _) = sym_eigen_desc(&diff);
    vals.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Residuals of the identities every population context satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    /// `max |γ_iᵀγ_j − δ_ij|`.
    pub gamma_orthonormality: f64,
    /// `max_k ‖Bα_k − λ_kΣα_k‖ / ‖λ_kΣα_k‖`.
    pub eigen_residual: f64,
    /// Largest relative gap between `D(μ_j − μ_i)` and `Σ⁻¹(μ_j − μ_i)` over
    /// class pairs.
    pub metric_residual: f64,
}

pub fn identity_report(ctx: &TheoryContext) -> Result<IdentityReport> {
    let km1 = ctx.k() - 1;
    let gamma_orthonormality =
        (&ctx.gammas * ctx.gammas.transpose() - DMatrix::identity(km1, km1)).amax();
    let mut eigen_residual: f64 = 0.0;
    for k in 0..km1 {
        let a = ctx.component(k);
        let rhs = &ctx.sigma * &a * ctx.eigvals[k];
        eigen_residual = eigen_residual.max((&ctx.b * &a - &rhs).norm() / rhs.norm());
    }
    let chol = ctx
        .sigma
        .clone()
        .cholesky()
        .ok_or_else(|| SfdaError::Singular("covariance is not positive definite".into()))?;
    let mut metric_residual: f64 = 0.0;
    for i in 1..=ctx.k() {
        for j in i + 1..=ctx.k() {
            let delta = ctx.delta(i, j);
            let direct = chol.solve(&delta);
            let scale = direct.norm();
            if scale > 0.0 {
                metric_residual = metric_residual.max((&ctx.d * &delta - &direct).norm() / scale);
            }
        }
    }
    Ok(IdentityReport {
        gamma_orthonormality,
        eigen_residual,
        metric_residual,
    })
}

/// Sign-aligned distance `min(‖a − b‖, ‖a + b‖)`.
pub fn aligned_distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm().min((a + b).norm())
}

/// Three-class common-covariance model: AR(0.6)·σ² covariance on `p`
/// features and class means `μ_kj ~ N(k, 1)` on the first ten features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendGenerator {
    pub p: usize,
    pub sigma2: f64,
    pub mean_seed: u64,
}

impl TrendGenerator {
    pub fn truth(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if self.p < 10 {
            return Err(SfdaError::InvalidParameter(
                "generator needs p >= 10".into(),
            ));
        }
        let mut rng = stream_rng(self.mean_seed, STREAM_THEORY_MEANS);
        let mut means = DMatrix::zeros(3, self.p);
        for k in 0..3 {
            let dist = rand_distr::Normal::new((k + 1) as f64, 1.0).expect("valid normal");
            for j in 0..10 {
                means[(k, j)] = rand_distr::Distribution::sample(&dist, &mut rng);
            }
        }
        let sigma = DMatrix::from_fn(self.p, self.p, |i, j| {
            self.sigma2 * 0.6f64.powi((i as i32 - j as i32).abs())
        });
        Ok((means, sigma))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendConfig {
    pub generator: TrendGenerator,
    pub n_list: Vec<usize>,
    pub seeds: Vec<u64>,
    /// `τ_n = tau_scale · s_n`.
    pub tau_scale: f64,
    pub lambda: f64,
    pub kappa_factor: f64,
}

impl Default for TrendConfig {
    fn default() -> Self {
        TrendConfig {
            generator: TrendGenerator {
                p: 100,
                sigma2: 1.0,
                mean_seed: 2024,
            },
            n_list: vec![100, 400, 1600],
            seeds: (0..20).collect(),
            tau_scale: 1.0,
            lambda: 0.3,
            kappa_factor: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub n: usize,
    pub tau: f64,
    pub s_n: f64,
    pub lambda_p: f64,
    /// Median sign-aligned `‖α̂₁ − α₁‖₂`.
    pub median_alpha_error: f64,
    /// Median operator-norm distance between the projectors onto `ξ̂₁` and `ξ₁`.
    pub median_projection_error: f64,
    pub failures: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Fits the model at each sample size for every seed and reports median
/// estimation errors of the first component and first constraint direction.
pub fn consistency_experiment(cfg: &TrendConfig) -> Result<Vec<TrendRow>> {
    let (means, sigma) = cfg.generator.truth()?;
    let ctx = build_theory(&sigma, &means)?;
    let alpha1 = ctx.component(0);
    let xi1 = DMatrix::from_row_slice(1, ctx.p(), ctx.constraint(0).as_slice());

    let cells: Vec<(usize, u64)> = cfg
        .n_list
        .iter()
        .flat_map(|&n| cfg.seeds.iter().map(move |&s| (n, s)))
        .collect();
    let results: Vec<Option<(f64, f64)>> = cells
        .par_iter()
        .map(|&(n, seed)| {
            let tau = cfg.tau_scale * ctx.s_n(n);
            let params = FitParams::new(
                tau,
                cfg.lambda,
                Kappa::Relative(cfg.kappa_factor),
                Variant::Thresholded,
            )
            .ok()?;
            let data = sample_gaussian_classes(
                &means,
                &sigma,
                n,
                seed.wrapping_mul(1_000_003).wrapping_add(n as u64),
            )
            .ok()?;
            let model = fit(&data, &params).ok()?;
            let a = model.components().row(0).transpose();
            let xi_hat = model.constraints().rows(0, 1).into_owned();
            Some((
                aligned_distance(&a, &alpha1),
                projection_distance(&xi_hat, &xi1),
            ))
        })
        .collect();

    Ok(cfg
        .n_list
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let cell = &results[i * cfg.seeds.len()..(i + 1) * cfg.seeds.len()];
            let ok: Vec<(f64, f64)> = cell.iter().flatten().copied().collect();
            TrendRow {
                n,
                tau: cfg.tau_scale * ctx.s_n(n),
                s_n: ctx.s_n(n),
                lambda_p: ctx.lambda_p,
                median_alpha_error: median(ok.iter().map(|r| r.0).collect()),
                median_projection_error: median(ok.iter().map(|r| r.1).collect()),
                failures: cell.len() - ok.len(),
            }
        })
        .collect())
}

pub fn write_trend_table<W: std::io::Write>(rows: &[TrendRow], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "n",
        "tau",
        "s_n",
        "lambda_p",
        "median_alpha_error",
        "median_projection_error",
        "failures",
    ])?;
    for r in rows {
        wtr.write_record([
            r.n.to_string(),
            r.tau.to_string(),
            r.s_n.to_string(),
            r.lambda_p.to_string(),
            r.median_alpha_error.to_string(),
            r.median_projection_error.to_string(),
            r.failures.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
