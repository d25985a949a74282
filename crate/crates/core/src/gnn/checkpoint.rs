//! Binary checkpoints.
//!
//! Layout (little-endian): the 8-byte magic `GINXCKPT`, then `u32` format
//! version, hidden width, node feature dim, edge feature dim, layer count and
//! class count, then a `u64` parameter count followed by that many `f64`
//! parameters in [`ParamLayout`](super::ParamLayout) order (each block row-major).

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{GnnModel, ModelDims, ParamLayout};

const MAGIC: &[u8; 8] = b"GINXCKPT";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 6 * 4 + 8;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint is corrupt: {0}")]
    Corrupt(String),
    #[error("checkpoint dims {found:?} do not match expected {declared:?}")]
    Mismatch { declared: ModelDims, found: ModelDims },
}

pub fn save_checkpoint(model: &GnnModel, path: &Path) -> Result<(), CheckpointError> {
    let d = model.dims();
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * model.params().len());
    buf.extend_from_slice(MAGIC);
    for v in [VERSION, d.hidden as u32, d.node_dim as u32, d.edge_dim as u32, d.layers as u32, d.classes as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(model.params().len() as u64).to_le_bytes());
    for p in model.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<GnnModel, CheckpointError> {
    decode(&fs::read(path)?)
}

/// Loads a checkpoint and rejects it unless its dims equal `expected`.
pub fn load_checkpoint_expecting(path: &Path, expected: &ModelDims) -> Result<GnnModel, CheckpointError> {
    let model = load_checkpoint(path)?;
    if model.dims() != expected {
        return Err(CheckpointError::Mismatch { declared: *expected, found: *model.dims() });
    }
    Ok(model)
}

fn decode(bytes: &[u8]) -> Result<GnnModel, CheckpointError> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(CheckpointError::Magic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(CheckpointError::Corrupt("truncated header".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap());
    let version = u32_at(0);
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let dims = ModelDims {
        hidden: u32_at(1) as usize,
        node_dim: u32_at(2) as usize,
        edge_dim: u32_at(3) as usize,
        layers: u32_at(4) as usize,
        classes: u32_at(5) as usize,
    };
    let count = u64::from_le_bytes(bytes[32..40].try_into().unwrap()) as usize;
    let expected = ParamLayout::new(&dims).total;
    if count != expected {
        return Err(CheckpointError::Corrupt(format!("{count} parameters declared, dims need {expected}")));
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * count {
        return Err(CheckpointError::Corrupt(format!(
            "expected {} parameter bytes, found {}",
            8 * count,
            body.len()
        )));
    }
    let params = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    GnnModel::from_params(dims, params).map_err(|e| CheckpointError::Corrupt(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = GnnModel::new(ModelDims::standard(1, 1), 3);
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, model);
        let g = Graph::with_unit_features(4, &[(0, 1), (1, 2), (2, 3)], 0);
        let a = model.logits(&g).unwrap();
        let b = back.logits(&g).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn hidden_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut dims = ModelDims::standard(1, 1);
        dims.hidden = 64;
        save_checkpoint(&GnnModel::new(dims, 0), &path).unwrap();
        match load_checkpoint_expecting(&path, &ModelDims::standard(1, 1)) {
            Err(CheckpointError::Mismatch { declared, found }) => {
                assert_eq!(declared.hidden, 32);
                assert_eq!(found.hidden, 64);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&GnnModel::new(ModelDims::standard(1, 1), 0), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::Corrupt(_))));
        fs::write(&path, &bytes[..20]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::Corrupt(_))));
        fs::write(&path, b"nope").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::Magic)));
    }
}
