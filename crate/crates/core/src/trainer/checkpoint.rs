//! JSON checkpoints with an explicit shape header per tensor.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ModelParams, Vocab};

pub const CHECKPOINT_FORMAT: &str = "senseswitch-bag-model";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("unsupported checkpoint format {format:?} version {version}")]
    Format { format: String, version: u32 },
    #[error("tensor {name}: {message}")]
    Shape { name: String, message: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    dim: usize,
    vocab: Vocab,
    tensors: Vec<Tensor>,
}

fn expected_shapes(vocab_size: usize, dim: usize) -> [(&'static str, Vec<usize>); 4] {
    [
        ("embeddings", vec![vocab_size, dim]),
        ("encoder_proj", vec![dim, dim]),
        ("encoder_bias", vec![dim]),
        ("decoder_scorer", vec![dim, dim]),
    ]
}

pub fn checkpoint_json(model: &ModelParams) -> String {
    let shapes = expected_shapes(model.vocab_size(), model.dim);
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        dim: model.dim,
        vocab: model.vocab.clone(),
        tensors: model
            .tensors()
            .iter()
            .zip(shapes)
            .map(|((name, data), (_, shape))| Tensor { name: name.to_string(), shape, data: data.to_vec() })
            .collect(),
    };
    serde_json::to_string(&file).expect("checkpoint serializes")
}

pub fn save_checkpoint(model: &ModelParams, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, checkpoint_json(model)).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn parse_checkpoint(text: &str, origin: &str) -> Result<ModelParams, CheckpointError> {
    let file: CheckpointFile = serde_json::from_str(text).map_err(|source| CheckpointError::Json {
        path: origin.to_string(),
        source,
    })?;
    if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Format { format: file.format, version: file.version });
    }
    let mut model = ModelParams::zeros(file.vocab, file.dim);
    let shapes = expected_shapes(model.vocab_size(), model.dim);
    if file.tensors.len() != shapes.len() {
        return Err(CheckpointError::Shape {
            name: "*".to_string(),
            message: format!("expected {} tensors, found {}", shapes.len(), file.tensors.len()),
        });
    }
    for ((tensor, (name, shape)), slot) in file.tensors.into_iter().zip(shapes).zip(model.tensors_mut()) {
        let fail = |message: String| CheckpointError::Shape { name: tensor.name.clone(), message };
        if tensor.name != name {
            return Err(fail(format!("expected tensor {name}")));
        }
        if tensor.shape != shape {
            return Err(fail(format!("shape {:?} does not match expected {:?}", tensor.shape, shape)));
        }
        if tensor.data.len() != shape.iter().product::<usize>() {
            return Err(fail(format!("{} values for shape {:?}", tensor.data.len(), shape)));
        }
        *slot = tensor.data;
    }
    Ok(model)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams, CheckpointError> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io { path: origin.clone(), source })?;
    parse_checkpoint(&text, &origin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::item_rng;

    #[test]
    fn round_trip_is_exact() {
        let m = ModelParams::init(Vocab::from_tokens(["a", "b"]), 4, 0.1, &mut item_rng(3, 0));
        let back = parse_checkpoint(&checkpoint_json(&m), "mem").unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_shape_mismatch() {
        let m = ModelParams::init(Vocab::from_tokens(["a"]), 2, 0.1, &mut item_rng(3, 0));
        let text = checkpoint_json(&m).replace("\"shape\":[2]", "\"shape\":[3]");
        assert!(matches!(parse_checkpoint(&text, "mem"), Err(CheckpointError::Shape { .. })));
    }
}
