//! Replicated simulation benchmarks comparing the discriminant against
//! simple baselines.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{NearestCentroid, RidgeLda};
use crate::classifier::classify_batch;
use crate::error::{Result, SfdaError};
use crate::model_selection::{cross_validate, TuningGrid};
use crate::sfda::{fit, Variant};
use crate::simgen::{misclassification_rate, simulate, SimModel, SimScenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BenchMethod {
    SfdaThresholded,
    SfdaUnthresholded,
    NearestCentroid,
    RidgeLda,
}

impl BenchMethod {
    pub const ALL: [BenchMethod; 4] = [
        BenchMethod::SfdaThresholded,
        BenchMethod::SfdaUnthresholded,
        BenchMethod::NearestCentroid,
        BenchMethod::RidgeLda,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BenchMethod::SfdaThresholded => "sfda-threshold",
            BenchMethod::SfdaUnthresholded => "sfda-unthresholded",
            BenchMethod::NearestCentroid => "nearest-centroid",
            BenchMethod::RidgeLda => "ridge-lda",
        }
    }
}

impl FromStr for BenchMethod {
    type Err = SfdaError;

    fn from_str(s: &str) -> Result<Self> {
        BenchMethod::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| SfdaError::InvalidParameter(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchScenario {
    pub model: SimModel,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub scenarios: Vec<BenchScenario>,
    pub reps: usize,
    /// Replicate `r` is simulated with seed `seed + r`.
    pub seed: u64,
    pub grid: TuningGrid,
    pub methods: Vec<BenchMethod>,
}

impl BenchConfig {
    pub fn new(scenarios: Vec<BenchScenario>, reps: usize, seed: u64) -> Self {
        BenchConfig {
            scenarios,
            reps,
            seed,
            grid: TuningGrid::default(),
            methods: BenchMethod::ALL.to_vec(),
        }
    }
}

/// Test error of one method on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub scenario: BenchScenario,
    pub rep: usize,
    pub seed: u64,
    pub method: BenchMethod,
    pub error: f64,
}

/// Mean and standard deviation of test errors over replicates, as fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scenario: BenchScenario,
    pub method: BenchMethod,
    pub mean_error: f64,
    pub sd_error: f64,
    pub reps: usize,
}

fn method_error(method: BenchMethod, scn: &SimScenario, grid: &TuningGrid) -> Result<f64> {
    let (train, test, _) = simulate(scn)?;
    let pred = match method {
        BenchMethod::SfdaThresholded | BenchMethod::SfdaUnthresholded => {
            let variant = if method == BenchMethod::SfdaThresholded {
                Variant::Thresholded
            } else {
                Variant::Unthresholded
            };
            let grid = TuningGrid {
                seed: scn.seed,
                ..grid.clone()
            };
            let (params, _) = cross_validate(&train, &grid, variant)?;
            classify_batch(&fit(&train, &params)?, test.observations())?
        }
        BenchMethod::NearestCentroid => {
            NearestCentroid::fit(&train)?.classify_batch(test.observations())?
        }
        BenchMethod::RidgeLda => RidgeLda::fit(&train)?.classify_batch(test.observations())?,
    };
    misclassification_rate(&pred, test.labels())
}

/// Runs every (scenario, replicate, method) cell. Records come back in
/// configuration order regardless of scheduling.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    if cfg.reps == 0 {
        return Err(SfdaError::InvalidParameter(
            "at least one replicate is required".into(),
        ));
    }
    if cfg.methods.is_empty() || cfg.scenarios.is_empty() {
        return Err(SfdaError::InvalidParameter(
            "no methods or scenarios selected".into(),
        ));
    }
    cfg.grid.validate()?;
    let mut cells = Vec::new();
    for scenario in &cfg.scenarios {
        for rep in 0..cfg.reps {
            let seed = cfg.seed.wrapping_add(rep as u64);
            let scn = SimScenario::new(scenario.model, scenario.sigma2, seed);
            scn.validate()?;
            for &method in &cfg.methods {
                cells.push((*scenario, rep, scn.clone(), method));
            }
        }
    }
    cells
        .par_iter()
        .map(|(scenario, rep, scn, method)| {
            Ok(BenchRecord {
                scenario: *scenario,
                rep: *rep,
                seed: scn.seed,
                method: *method,
                error: method_error(*method, scn, &cfg.grid)?,
            })
        })
        .collect()
}

/// Averages records per (scenario, method), keeping first-appearance order.
pub fn summarize_bench(records: &[BenchRecord]) -> Vec<BenchRow> {
    let mut keys: Vec<(BenchScenario, BenchMethod)> = Vec::new();
    for r in records {
        if !keys.contains(&(r.scenario, r.method)) {
            keys.push((r.scenario, r.method));
        }
    }
    keys.into_iter()
        .map(|(scenario, method)| {
            let errs: Vec<f64> = records
                .iter()
                .filter(|r| r.scenario == scenario && r.method == method)
                .map(|r| r.error)
                .collect();
            let n = errs.len() as f64;
            let mean = errs.iter().sum::<f64>() / n;
            let sd = if errs.len() > 1 {
                (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            BenchRow {
                scenario,
                method,
                mean_error: mean,
                sd_error: sd,
                reps: errs.len(),
            }
        })
        .collect()
}

fn scenarios_and_methods(rows: &[BenchRow]) -> (Vec<BenchScenario>, Vec<BenchMethod>) {
    let mut scenarios: Vec<BenchScenario> = Vec::new();
    let mut methods: Vec<BenchMethod> = Vec::new();
    for r in rows {
        if !scenarios.contains(&r.scenario) {
            scenarios.push(r.scenario);
        }
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    (scenarios, methods)
}

/// Markdown table with one row per scenario and `mean (sd)` percentages per
/// method.
pub fn bench_markdown(rows: &[BenchRow]) -> String {
    let (scenarios, methods) = scenarios_and_methods(rows);
    let mut out = String::from("| model | sigma2 |");
    for m in &methods {
        let _ = write!(out, " {} |", m.name());
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---|".repeat(methods.len()));
    out.push('\n');
    for s in &scenarios {
        let _ = write!(out, "| {} | {} |", s.model, s.sigma2);
        for m in &methods {
            match rows.iter().find(|r| r.scenario == *s && r.method == *m) {
                Some(r) => {
                    let _ = write!(
                        out,
                        " {:.2} ({:.2}) |",
                        100.0 * r.mean_error,
                        100.0 * r.sd_error
                    );
                }
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out
}

/// CSV with columns `model,sigma2,method,mean_pct,sd_pct,reps`.
pub fn write_bench_csv<W: Write>(rows: &[BenchRow], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["model", "sigma2", "method", "mean_pct", "sd_pct", "reps"])?;
    for r in rows {
        wtr.write_record([
            r.scenario.model.to_string(),
            r.scenario.sigma2.to_string(),
            r.method.name().to_string(),
            (100.0 * r.mean_error).to_string(),
            (100.0 * r.sd_error).to_string(),
            r.reps.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
