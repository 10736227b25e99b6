//! Seeded generators for the three benchmark simulation models.
//!
//! All randomness comes from ChaCha8 generators seeded with
//! `seed_from_u64(seed)` and split into independent streams by purpose, so
//! that adding a new consumer never changes existing draws. Class means and
//! other per-dataset parameters are drawn from `mean_seed`; labels, noise and
//! the train/test split from `seed`.

use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Result, SfdaError};

const BLOCK: usize = 100;
const CLASSES: usize = 3;

const STREAM_PARAMS: u64 = 1;
const STREAM_LABELS: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_SPLIT: u64 = 4;

/// Generator for stream `purpose` of `seed`.
pub fn stream_rng(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimModel {
    /// Disjoint signal features per class plus a shared factor on features 1–30.
    Sim1,
    /// Common block-diagonal AR(0.6) covariance, overlapping signal features.
    Sim2,
    /// Class-specific covariances: diagonal, AR(0.9) blocks, equicorrelated blocks.
    Sim3,
}

impl FromStr for SimModel {
    type Err = SfdaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sim1" | "1" => Ok(SimModel::Sim1),
            "sim2" | "2" => Ok(SimModel::Sim2),
            "sim3" | "3" => Ok(SimModel::Sim3),
            other => Err(SfdaError::InvalidParameter(format!(
                "unknown simulation model {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for SimModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SimModel::Sim1 => "sim1",
            SimModel::Sim2 => "sim2",
            SimModel::Sim3 => "sim3",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub model: SimModel,
    pub sigma2: f64,
    pub p: usize,
    pub n_total: usize,
    pub n_train: usize,
    pub seed: u64,
    pub mean_seed: u64,
}

impl SimScenario {
    /// Full-size scenario: p = 500, 1500 observations, 150 for training.
    pub fn new(model: SimModel, sigma2: f64, seed: u64) -> Self {
        SimScenario {
            model,
            sigma2,
            p: 500,
            n_total: 1500,
            n_train: 150,
            seed,
            mean_seed: seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(SfdaError::InvalidParameter(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        if self.n_train == 0 || self.n_train >= self.n_total {
            return Err(SfdaError::InvalidParameter(format!(
                "need 0 < n_train < n_total, got {} and {}",
                self.n_train, self.n_total
            )));
        }
        let min_p = match self.model {
            SimModel::Sim1 | SimModel::Sim3 => 30,
            SimModel::Sim2 => 110,
        };
        if self.p < min_p {
            return Err(SfdaError::InvalidParameter(format!(
                "{} needs p >= {}, got {}",
                self.model, min_p, self.p
            )));
        }
        Ok(())
    }
}

/// Population covariance of the generating model.
#[derive(Debug, Clone)]
pub enum TrueCovariance {
    Common(DMatrix<f64>),
    PerClass(Vec<DMatrix<f64>>),
}

#[derive(Debug, Clone)]
pub struct SimTruth {
    /// K × p
    pub true_means: DMatrix<f64>,
    pub true_cov: TrueCovariance,
    /// 1-based indices of features whose mean differs between classes.
    pub signal_features: Vec<usize>,
    pub notes: String,
}

impl SimTruth {
    pub fn common_covariance(&self) -> Option<&DMatrix<f64>> {
        match &self.true_cov {
            TrueCovariance::Common(c) => Some(c),
            TrueCovariance::PerClass(_) => None,
        }
    }
}

/// Sampler for `N(0, Σ)` with block-diagonal or diagonal `Σ`.
#[derive(Debug, Clone)]
enum NoiseSampler {
    /// Per-coordinate standard deviations.
    Diagonal(Vec<f64>),
    /// Lower Cholesky factors of consecutive diagonal blocks.
    Blocks(Vec<DMatrix<f64>>),
    /// `σ²I` plus a unit-variance factor shared by the first `shared` coordinates.
    SharedFactor { sigma: f64, shared: usize, p: usize },
}

impl NoiseSampler {
    fn blocks(p: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut factors = Vec::new();
        let mut start = 0;
        while start < p {
            let size = BLOCK.min(p - start);
            let block = DMatrix::from_fn(size, size, |i, j| entry(i, j));
            let chol: Cholesky<f64, Dyn> = block.cholesky().ok_or_else(|| {
                SfdaError::Singular("covariance block is not positive definite".into())
            })?;
            factors.push(chol.l());
            start += size;
        }
        Ok(NoiseSampler::Blocks(factors))
    }

    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            NoiseSampler::Diagonal(sd) => {
                for (o, s) in out.iter_mut().zip(sd) {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = s * z;
                }
            }
            NoiseSampler::Blocks(factors) => {
                let mut start = 0;
                for l in factors {
                    let size = l.nrows();
                    let z = DVector::from_fn(size, |_, _| StandardNormal.sample(rng));
                    let x = l * z;
                    out[start..start + size].copy_from_slice(x.as_slice());
                    start += size;
                }
            }
            NoiseSampler::SharedFactor { sigma, shared, p } => {
                let common: f64 = StandardNormal.sample(rng);
                for (j, o) in out.iter_mut().enumerate().take(*p) {
                    let e: f64 = StandardNormal.sample(rng);
                    *o = sigma * e + if j < *shared { common } else { 0.0 };
                }
            }
        }
    }

    fn covariance(&self) -> DMatrix<f64> {
        match self {
            NoiseSampler::Diagonal(sd) => {
                DMatrix::from_diagonal(&DVector::from_iterator(sd.len(), sd.iter().map(|s| s * s)))
            }
            NoiseSampler::Blocks(factors) => {
                let p: usize = factors.iter().map(|l| l.nrows()).sum();
                let mut cov = DMatrix::zeros(p, p);
                let mut start = 0;
                for l in factors {
                    let size = l.nrows();
                    cov.view_mut((start, start), (size, size))
                        .copy_from(&(l * l.transpose()));
                    start += size;
                }
                cov
            }
            NoiseSampler::SharedFactor { sigma, shared, p } => {
                let mut cov = DMatrix::identity(*p, *p) * (sigma * sigma);
                for i in 0..*shared {
                    for j in 0..*shared {
                        cov[(i, j)] += 1.0;
                    }
                }
                cov
            }
        }
    }
}

fn ar_block(p: usize, rho: f64, sigma2: f64) -> Result<NoiseSampler> {
    NoiseSampler::blocks(p, |i, j| sigma2 * rho.powi((i as i32 - j as i32).abs()))
}

fn equicorrelated_block(p: usize, rho: f64, sigma2: f64) -> Result<NoiseSampler> {
    NoiseSampler::blocks(p, |i, j| if i == j { sigma2 } else { rho * sigma2 })
}

/// Means, per-class noise samplers and signal features of a scenario.
fn model_parameters(
    scn: &SimScenario,
) -> Result<(DMatrix<f64>, Vec<NoiseSampler>, Vec<usize>, String)> {
    let p = scn.p;
    let mut rng = stream_rng(scn.mean_seed, STREAM_PARAMS);
    let mut means = DMatrix::zeros(CLASSES, p);
    match scn.model {
        SimModel::Sim1 => {
            let group = |mean: f64| Normal::new(mean, 0.8).expect("valid normal");
            let ranges = [
                (0usize, 0..20usize, 1.0),
                (1, 20..30, 4.0),
                (2, 30..50, 1.0),
            ];
            for (class, range, mean) in ranges {
                let dist = group(mean);
                for j in range.filter(|&j| j < p) {
                    means[(class, j)] = dist.sample(&mut rng);
                }
            }
            let sampler = NoiseSampler::SharedFactor {
                sigma: scn.sigma2.sqrt(),
                shared: 30,
                p,
            };
            let signal = (1..=50.min(p)).collect();
            Ok((
                means,
                vec![sampler.clone(), sampler.clone(), sampler],
                signal,
                "common covariance: sigma2*I plus a unit-variance factor shared by features 1-30"
                    .into(),
            ))
        }
        SimModel::Sim2 => {
            let signal: Vec<usize> = (1..=10).chain(101..=110).collect();
            for class in 0..CLASSES {
                let dist = Normal::new((class + 1) as f64, 1.0).expect("valid normal");
                for &j in &signal {
                    means[(class, j - 1)] = dist.sample(&mut rng);
                }
            }
            let sampler = ar_block(p, 0.6, scn.sigma2)?;
            Ok((
                means,
                vec![sampler.clone(), sampler.clone(), sampler],
                signal,
                "common covariance: 100x100 diagonal blocks with entries 0.6^|j-j'| * sigma2"
                    .into(),
            ))
        }
        SimModel::Sim3 => {
            for (class, (count, value)) in [(10usize, 3.0), (20, 2.0), (30, 1.0)]
                .into_iter()
                .enumerate()
            {
                for j in 0..count {
                    means[(class, j)] = value;
                }
            }
            let unif = Uniform::new(0.5, 2.0).expect("valid range");
            let diag: Vec<f64> = (0..p)
                .map(|_| (unif.sample(&mut rng) * scn.sigma2).sqrt())
                .collect();
            let samplers = vec![
                NoiseSampler::Diagonal(diag),
                ar_block(p, 0.9, scn.sigma2)?,
                equicorrelated_block(p, 0.6, scn.sigma2)?,
            ];
            Ok((
                means,
                samplers,
                (1..=30).collect(),
                "class-specific covariances: diagonal U(0.5,2)*sigma2; AR(0.9) blocks; equicorrelated 0.6 blocks".into(),
            ))
        }
    }
}

/// Generates a scenario's observations, splits them at random into
/// `n_train` training and `n_total − n_train` test observations, and returns
/// the generating parameters.
pub fn simulate(scn: &SimScenario) -> Result<(LabeledDataset, LabeledDataset, SimTruth)> {
    scn.validate()?;
    let p = scn.p;
    let (means, samplers, signal_features, notes) = model_parameters(scn)?;

    let mut label_rng = stream_rng(scn.seed, STREAM_LABELS);
    let labels: Vec<usize> = (0..scn.n_total)
        .map(|_| label_rng.random_range(1..=CLASSES))
        .collect();
    let mut noise_rng = stream_rng(scn.seed, STREAM_NOISE);
    let mut obs = DMatrix::zeros(scn.n_total, p);
    let mut buf = vec![0.0; p];
    for (i, &label) in labels.iter().enumerate() {
        samplers[label - 1].sample(&mut noise_rng, &mut buf);
        for j in 0..p {
            obs[(i, j)] = means[(label - 1, j)] + buf[j];
        }
    }

    let mut order: Vec<usize> = (0..scn.n_total).collect();
    order.shuffle(&mut stream_rng(scn.seed, STREAM_SPLIT));
    let (train_idx, test_idx) = order.split_at(scn.n_train);
    let pick = |idx: &[usize]| {
        LabeledDataset::new(
            obs.select_rows(idx),
            idx.iter().map(|&i| labels[i]).collect(),
            CLASSES,
        )
    };
    let train = pick(train_idx)?;
    let test = pick(test_idx)?;

    let true_cov = if scn.model == SimModel::Sim3 {
        TrueCovariance::PerClass(samplers.iter().map(NoiseSampler::covariance).collect())
    } else {
        TrueCovariance::Common(samplers[0].covariance())
    };
    Ok((
        train,
        test,
        SimTruth {
            true_means: means,
            true_cov,
            signal_features,
            notes,
        },
    ))
}

/// Draws `n` observations with uniformly random labels from
/// `N(μ_label, Σ)`, using a Cholesky factor of `Σ`.
pub fn sample_gaussian_classes(
    means: &DMatrix<f64>,
    cov: &DMatrix<f64>,
    n: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    let k = means.nrows();
    let p = means.ncols();
    if cov.shape() != (p, p) {
        return Err(SfdaError::DimensionMismatch(
            "covariance does not match the means".into(),
        ));
    }
    let l = cov
        .clone()
        .cholesky()
        .ok_or_else(|| SfdaError::Singular("covariance is not positive definite".into()))?
        .l();
    let mut label_rng = stream_rng(seed, STREAM_LABELS);
    let labels: Vec<usize> = (0..n).map(|_| label_rng.random_range(1..=k)).collect();
    let mut noise_rng = stream_rng(seed, STREAM_NOISE);
    let mut obs = DMatrix::zeros(n, p);
    for (i, &label) in labels.iter().enumerate() {
        let z = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut noise_rng));
        let x = &l * z + means.row(label - 1).transpose();
        obs.set_row(i, &x.transpose());
    }
    LabeledDataset::new(obs, labels, k)
}

/// Fraction of positions where `pred` and `truth` differ.
pub fn misclassification_rate(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(SfdaError::DimensionMismatch(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(SfdaError::InvalidParameter("no labels to compare".into()));
    }
    let wrong = pred.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / pred.len() as f64)
}
