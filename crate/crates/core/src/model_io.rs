//! JSON serialization of fitted models.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SfdaError};
use crate::sfda::{DiscriminantModel, FitParams};

pub const MODEL_FORMAT: &str = "sfda-model";
pub const MODEL_VERSION: u32 = 1;

/// On-disk layout. Matrices are stored as arrays of rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    p: usize,
    k: usize,
    params: FitParams,
    class_means: Vec<Vec<f64>>,
    counts: Vec<usize>,
    components: Vec<Vec<f64>>,
    constraints: Vec<Vec<f64>>,
    gram: Vec<Vec<f64>>,
    /// Informational; recomputed from the components and gram matrix on load.
    discriminant: Vec<Vec<f64>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(name: &str, rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(SfdaError::Parse(format!(
            "{name}: row {bad} has {} entries, expected {ncols}",
            rows[bad].len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn write_model<W: Write>(model: &DiscriminantModel, writer: W) -> Result<()> {
    let doc = ModelDocument {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        p: model.p(),
        k: model.k(),
        params: model.params().clone(),
        class_means: rows(model.class_means()),
        counts: model.counts().to_vec(),
        components: rows(model.components()),
        constraints: rows(model.constraints()),
        gram: rows(model.gram()),
        discriminant: rows(model.discriminant()),
    };
    serde_json::to_writer_pretty(writer, &doc)?;
    Ok(())
}

pub fn read_model<R: Read>(reader: R) -> Result<DiscriminantModel> {
    let doc: ModelDocument = serde_json::from_reader(reader)?;
    if doc.format != MODEL_FORMAT {
        return Err(SfdaError::Parse(format!(
            "not a model file (format {:?})",
            doc.format
        )));
    }
    if doc.version != MODEL_VERSION {
        return Err(SfdaError::Parse(format!(
            "unsupported model version {}",
            doc.version
        )));
    }
    let km1 = doc.k.saturating_sub(1);
    DiscriminantModel::from_parts(
        doc.params,
        matrix("class_means", &doc.class_means, doc.p)?,
        doc.counts,
        matrix("components", &doc.components, doc.p)?,
        matrix("constraints", &doc.constraints, doc.p)?,
        matrix("gram", &doc.gram, km1)?,
    )
}

pub fn save_model(model: &DiscriminantModel, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DiscriminantModel> {
    read_model(BufReader::new(File::open(path)?))
}
