//! Stratified k-fold cross-validation over `(τ, λ, κ-factor)` grids.

use std::io::Write;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::classify_batch;
use crate::dataset::LabeledDataset;
use crate::error::{Result, SfdaError};
use crate::estimators::{summarize, ClassSummaries};
use crate::penalty::{PenaltySpec, SolverConfig};
use crate::sfda::{FitParams, Kappa, Prepared, Variant};
use crate::simgen::{misclassification_rate, stream_rng};

const STREAM_FOLDS: u64 = 5;

/// Two mean errors closer than this are treated as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    pub taus: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// `κ_j = factor · ‖B̂α̂_j‖₁`.
    pub kappa_factors: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for TuningGrid {
    fn default() -> Self {
        TuningGrid {
            taus: vec![0.5, 1.0, 5.0, 10.0],
            lambdas: vec![0.01, 0.05, 0.1, 0.2, 0.3, 0.4],
            kappa_factors: vec![0.0, 0.001, 0.01],
            folds: 5,
            seed: 0,
        }
    }
}

impl TuningGrid {
    pub fn single(tau: f64, lambda: f64, kappa_factor: f64) -> Self {
        TuningGrid {
            taus: vec![tau],
            lambdas: vec![lambda],
            kappa_factors: vec![kappa_factor],
            ..TuningGrid::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.taus.is_empty() || self.lambdas.is_empty() || self.kappa_factors.is_empty() {
            return Err(SfdaError::InvalidParameter(
                "tuning grid has an empty axis".into(),
            ));
        }
        for &tau in &self.taus {
            for &lambda in &self.lambdas {
                PenaltySpec::new(tau, lambda)?;
            }
        }
        if let Some(f) = self
            .kappa_factors
            .iter()
            .find(|f| !(**f >= 0.0 && f.is_finite()))
        {
            return Err(SfdaError::InvalidParameter(format!(
                "kappa factor must be >= 0, got {f}"
            )));
        }
        if self.folds < 2 {
            return Err(SfdaError::InvalidParameter(
                "need at least two folds".into(),
            ));
        }
        Ok(())
    }
}

/// One grid point's cross-validated error. Errors are fractions in `[0, 1]`;
/// a grid point whose fit failed in any fold has NaN errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub tau: f64,
    pub lambda: f64,
    pub kappa_factor: f64,
    pub mean_error: f64,
    pub sd_error: f64,
}

/// Fold index (0-based) for every observation. Within each class the
/// observations are shuffled and dealt round-robin, continuing the rotation
/// from one class to the next, so fold sizes differ by at most one overall
/// and by at most one per class.
pub fn stratified_folds(labels: &[usize], k: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(SfdaError::InvalidParameter(
            "need at least two folds".into(),
        ));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &label) in labels.iter().enumerate() {
        by_class[label - 1].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < folds {
            return Err(SfdaError::ClassTooSmall {
                class: c + 1,
                count: members.len(),
                folds,
            });
        }
    }
    let mut rng = stream_rng(seed, STREAM_FOLDS);
    let mut assignment = vec![0usize; labels.len()];
    let mut next = 0usize;
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

fn kappa_axis(grid: &TuningGrid, variant: Variant) -> Vec<f64> {
    match variant {
        Variant::Thresholded => grid.kappa_factors.clone(),
        Variant::Unthresholded => vec![0.0],
    }
}

struct Fold {
    train: ClassSummaries,
    test: LabeledDataset,
}

/// Held-out error of every κ factor at one `(τ, λ)` in one fold. The first
/// component does not depend on κ and is computed once.
fn fold_errors(
    prepared: &Prepared<'_>,
    test: &LabeledDataset,
    penalty: PenaltySpec,
    kappas: &[f64],
    variant: Variant,
    solver: &SolverConfig,
) -> Vec<f64> {
    let base = FitParams {
        penalty,
        kappa: Kappa::Relative(0.0),
        variant,
        solver: solver.clone(),
    };
    let first: DVector<f64> = match prepared.first_component(&base) {
        Ok(a) => a,
        Err(_) => return vec![f64::NAN; kappas.len()],
    };
    kappas
        .iter()
        .map(|&factor| {
            let params = FitParams {
                kappa: Kappa::Relative(factor),
                ..base.clone()
            };
            prepared
                .fit(&params, Some(&first))
                .and_then(|model| classify_batch(&model, test.observations()))
                .and_then(|pred| misclassification_rate(&pred, test.labels()))
                .unwrap_or(f64::NAN)
        })
        .collect()
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Picks the grid point with the smallest mean CV error. Ties go to the
/// larger `τ`, then larger `λ`, then larger κ factor (sparser models).
pub fn select_best(table: &[CvRow]) -> Option<&CvRow> {
    table
        .iter()
        .filter(|r| r.mean_error.is_finite())
        .fold(None, |best: Option<&CvRow>, row| {
            let Some(b) = best else { return Some(row) };
            if row.mean_error < b.mean_error - TIE_TOL {
                return Some(row);
            }
            if row.mean_error > b.mean_error + TIE_TOL {
                return Some(b);
            }
            let key = |r: &CvRow| (r.tau, r.lambda, r.kappa_factor);
            if key(row).partial_cmp(&key(b)) == Some(std::cmp::Ordering::Greater) {
                Some(row)
            } else {
                Some(b)
            }
        })
}

/// Cross-validates every grid point and returns the selected parameters and
/// the full table, in grid order (τ outermost, κ innermost).
pub fn cross_validate(
    data: &LabeledDataset,
    grid: &TuningGrid,
    variant: Variant,
) -> Result<(FitParams, Vec<CvRow>)> {
    cross_validate_with(data, grid, variant, &SolverConfig::default())
}

pub fn cross_validate_with(
    data: &LabeledDataset,
    grid: &TuningGrid,
    variant: Variant,
    solver: &SolverConfig,
) -> Result<(FitParams, Vec<CvRow>)> {
    grid.validate()?;
    solver.validate()?;
    let assignment = stratified_folds(data.labels(), data.k(), grid.folds, grid.seed)?;
    let folds: Vec<Fold> = (0..grid.folds)
        .into_par_iter()
        .map(|f| {
            let train_idx: Vec<usize> = (0..data.n()).filter(|&i| assignment[i] != f).collect();
            let test_idx: Vec<usize> = (0..data.n()).filter(|&i| assignment[i] == f).collect();
            Ok(Fold {
                train: summarize(&data.subset(&train_idx)?)?,
                test: data.subset(&test_idx)?,
            })
        })
        .collect::<Result<_>>()?;
    let prepared: Vec<Prepared<'_>> = folds.par_iter().map(|f| Prepared::new(&f.train)).collect();

    let kappas = kappa_axis(grid, variant);
    let pairs: Vec<(f64, f64)> = grid
        .taus
        .iter()
        .flat_map(|&t| grid.lambdas.iter().map(move |&l| (t, l)))
        .collect();
    let tasks: Vec<(usize, usize)> = (0..pairs.len())
        .flat_map(|p| (0..folds.len()).map(move |f| (p, f)))
        .collect();
    let errors: Vec<Vec<f64>> = tasks
        .par_iter()
        .map(|&(p, f)| {
            let (tau, lambda) = pairs[p];
            let penalty = PenaltySpec { tau, lambda };
            fold_errors(
                &prepared[f],
                &folds[f].test,
                penalty,
                &kappas,
                variant,
                solver,
            )
        })
        .collect();

    let mut table = Vec::with_capacity(pairs.len() * kappas.len());
    for (p, &(tau, lambda)) in pairs.iter().enumerate() {
        for (ki, &kappa_factor) in kappas.iter().enumerate() {
            let per_fold: Vec<f64> = (0..folds.len())
                .map(|f| errors[p * folds.len() + f][ki])
                .collect();
            let (mean_error, sd_error) = if per_fold.iter().all(|e| e.is_finite()) {
                mean_sd(&per_fold)
            } else {
                (f64::NAN, f64::NAN)
            };
            table.push(CvRow {
                tau,
                lambda,
                kappa_factor,
                mean_error,
                sd_error,
            });
        }
    }
    let best = select_best(&table).ok_or(SfdaError::NoValidGridPoint)?;
    let params = FitParams {
        penalty: PenaltySpec::new(best.tau, best.lambda)?,
        kappa: Kappa::Relative(best.kappa_factor),
        variant,
        solver: solver.clone(),
    };
    Ok((params, table))
}

/// Writes the table as CSV with columns
/// `tau,lambda,kappa_factor,mean_error,sd_error`.
pub fn write_cv_table<W: Write>(rows: &[CvRow], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["tau", "lambda", "kappa_factor", "mean_error", "sd_error"])?;
    for r in rows {
        wtr.write_record([
            r.tau.to_string(),
            r.lambda.to_string(),
            r.kappa_factor.to_string(),
            r.mean_error.to_string(),
            r.sd_error.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(n: usize, p: usize, k: usize, sep: f64, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % k + 1).collect();
        let obs = DMatrix::from_fn(n, p, |i, j| {
            let shift = if j == 0 { sep * labels[i] as f64 } else { 0.0 };
            shift + rng.random_range(-1.0..1.0)
        });
        LabeledDataset::new(obs, labels, k).unwrap()
    }

    #[test]
    fn folds_are_stratified_and_deterministic() {
        let labels: Vec<usize> = (0..103).map(|i| if i % 4 == 0 { 2 } else { 1 }).collect();
        let a = stratified_folds(&labels, 2, 5, 3).unwrap();
        assert_eq!(a, stratified_folds(&labels, 2, 5, 3).unwrap());
        for class in 1..=2 {
            let total = labels.iter().filter(|&&l| l == class).count() as f64;
            for f in 0..5 {
                let in_fold = (0..labels.len())
                    .filter(|&i| a[i] == f && labels[i] == class)
                    .count() as f64;
                assert!((in_fold - total / 5.0).abs() <= 1.0);
            }
        }
        let sizes: Vec<usize> = (0..5)
            .map(|f| a.iter().filter(|&&x| x == f).count())
            .collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn small_class_rejected() {
        let labels = vec![1, 1, 1, 1, 1, 2, 2];
        assert!(matches!(
            stratified_folds(&labels, 2, 5, 0),
            Err(SfdaError::ClassTooSmall {
                class: 2,
                count: 2,
                folds: 5
            })
        ));
    }

    #[test]
    fn single_point_grid() {
        let data = blobs(60, 5, 3, 3.0, 1);
        let grid = TuningGrid::single(1.0, 0.1, 0.001);
        let (params, table) = cross_validate(&data, &grid, Variant::Thresholded).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(
            params.penalty,
            PenaltySpec {
                tau: 1.0,
                lambda: 0.1
            }
        );
        assert_eq!(params.kappa, Kappa::Relative(0.001));
    }

    #[test]
    fn separable_data_reaches_zero_error() {
        let data = blobs(50, 5, 2, 10.0, 2);
        let grid = TuningGrid {
            taus: vec![0.5, 1.0],
            lambdas: vec![0.1, 0.3],
            ..TuningGrid::default()
        };
        let (_, table) = cross_validate(&data, &grid, Variant::Thresholded).unwrap();
        let best = select_best(&table).unwrap();
        assert_eq!(best.mean_error, 0.0);
        // All rows tie at zero, so the largest (τ, λ, κ) wins.
        assert_eq!((best.tau, best.lambda, best.kappa_factor), (1.0, 0.3, 0.01));
    }

    #[test]
    fn rerun_gives_identical_table() {
        let data = blobs(60, 6, 3, 1.0, 3);
        let grid = TuningGrid {
            taus: vec![0.5, 5.0],
            lambdas: vec![0.05, 0.3],
            seed: 11,
            ..TuningGrid::default()
        };
        let a = cross_validate(&data, &grid, Variant::Thresholded).unwrap();
        let b = cross_validate(&data, &grid, Variant::Thresholded).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0, b.0);
        let (_, un) = cross_validate(&data, &grid, Variant::Unthresholded).unwrap();
        assert_eq!(un.len(), 4);
    }

    #[test]
    fn tie_break_order() {
        let row = |tau, lambda, kappa_factor, mean_error| CvRow {
            tau,
            lambda,
            kappa_factor,
            mean_error,
            sd_error: 0.0,
        };
        let table = vec![
            row(10.0, 0.4, 0.01, 0.2),
            row(1.0, 0.1, 0.0, 0.1),
            row(1.0, 0.2, 0.0, 0.1),
            row(5.0, 0.01, 0.0, f64::NAN),
        ];
        let best = select_best(&table).unwrap();
        assert_eq!((best.tau, best.lambda), (1.0, 0.2));
        assert!(select_best(&[row(1.0, 0.1, 0.0, f64::NAN)]).is_none());
    }

    #[test]
    fn csv_columns() {
        let rows = vec![CvRow {
            tau: 0.5,
            lambda: 0.1,
            kappa_factor: 0.0,
            mean_error: 0.25,
            sd_error: 0.05,
        }];
        let mut buf = Vec::new();
        write_cv_table(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "tau,lambda,kappa_factor,mean_error,sd_error\n0.5,0.1,0,0.25,0.05\n"
        );
    }
}
