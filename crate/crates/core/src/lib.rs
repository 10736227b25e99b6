//! Sparse Fisher discriminant analysis for high-dimensional classification.

pub mod baselines;
pub mod bench;
pub mod classifier;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod features;
pub mod linalg;
pub mod model_io;
pub mod model_selection;
pub mod penalty;
pub mod sfda;
pub mod simgen;

pub use dataset::LabeledDataset;
pub use error::{ErrorKind, Result, SfdaError};
pub use estimators::{center_overall, summarize, ClassSummaries};
pub use linalg::SpectralPsd;
pub use sfda::{fit, DiscriminantModel, FitParams, Kappa, Variant};
