//! Versioned binary checkpoint: `NAGDCKPT` magic, little-endian u32
//! version, little-endian u32 JSON header length, the JSON header
//! (hyperparameters, vocabulary, constants, parameter shapes), then raw
//! little-endian f64 data for each parameter in header order.

use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use num::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::NagdError;
use crate::model::{param_specs, HyperParams, NagdModel, Vocab};

const MAGIC: &[u8; 8] = b"NAGDCKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    d_k: usize,
    heads: usize,
    focal_gamma: f64,
    depth_cap: usize,
    lr: f64,
    type_loss_weight: f64,
    cross_goal: bool,
    vocab: Vec<String>,
    constants: Vec<String>,
    params: Vec<ParamMeta>,
}

fn io_err(e: std::io::Error) -> NagdError {
    NagdError::Io(e.to_string())
}

pub fn save(model: &NagdModel, path: &Path) -> Result<(), NagdError> {
    let header = Header {
        d_k: model.hyper.d_k,
        heads: model.hyper.heads,
        focal_gamma: model.hyper.focal_gamma,
        depth_cap: model.hyper.depth_cap,
        lr: model.hyper.lr,
        type_loss_weight: model.hyper.type_loss_weight,
        cross_goal: model.hyper.cross_goal,
        vocab: model.vocab.tokens().to_vec(),
        constants: model.constants.iter().map(|c| c.to_string()).collect(),
        params: param_specs(&model.hyper, model.vocab.len(), model.constants.len())
            .iter()
            .map(|(name, _)| {
                let v = &model.params[name];
                ParamMeta { name: name.clone(), rows: v.nrows(), cols: v.ncols() }
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)
        .map_err(|e| NagdError::Checkpoint(format!("header encode: {e}")))?;
    let mut f = std::fs::File::create(path).map_err(io_err)?;
    f.write_all(MAGIC).map_err(io_err)?;
    f.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    f.write_all(&(json.len() as u32).to_le_bytes()).map_err(io_err)?;
    f.write_all(&json).map_err(io_err)?;
    for meta in &header.params {
        let v = &model.params[&meta.name];
        for x in v.iter() {
            f.write_all(&x.to_le_bytes()).map_err(io_err)?;
        }
    }
    Ok(())
}

pub fn load(path: &Path) -> Result<NagdModel, NagdError> {
    let mut f = std::fs::File::open(path).map_err(io_err)?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(NagdError::Checkpoint("bad magic".to_string()));
    }
    let mut word = [0u8; 4];
    f.read_exact(&mut word).map_err(io_err)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(NagdError::Checkpoint(format!("unsupported version {version}")));
    }
    f.read_exact(&mut word).map_err(io_err)?;
    let json_len = u32::from_le_bytes(word) as usize;
    let mut json = vec![0u8; json_len];
    f.read_exact(&mut json).map_err(io_err)?;
    let header: Header = serde_json::from_slice(&json)
        .map_err(|e| NagdError::Checkpoint(format!("header decode: {e}")))?;

    let hyper = HyperParams {
        d_k: header.d_k,
        heads: header.heads,
        focal_gamma: header.focal_gamma,
        depth_cap: header.depth_cap,
        lr: header.lr,
        type_loss_weight: header.type_loss_weight,
        cross_goal: header.cross_goal,
    };
    let vocab = Vocab::from_tokens(header.vocab.iter().cloned());
    if vocab.tokens() != header.vocab.as_slice() {
        return Err(NagdError::Checkpoint("vocabulary not sorted/deduplicated".to_string()));
    }
    let constants = header
        .constants
        .iter()
        .map(|s| {
            BigRational::from_str(s)
                .map_err(|e| NagdError::Checkpoint(format!("constant '{s}': {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let expected = param_specs(&hyper, vocab.len(), constants.len());
    if expected.len() != header.params.len() {
        return Err(NagdError::Checkpoint("parameter list mismatch".to_string()));
    }
    let mut params = std::collections::BTreeMap::new();
    for ((want_name, (want_r, want_c)), meta) in expected.iter().zip(&header.params) {
        if *want_name != meta.name || *want_r != meta.rows || *want_c != meta.cols {
            return Err(NagdError::Checkpoint(format!(
                "parameter '{}' has shape {}×{}, expected '{}' {}×{}",
                meta.name, meta.rows, meta.cols, want_name, want_r, want_c
            )));
        }
        let count = meta.rows * meta.cols;
        let mut bytes = vec![0u8; count * 8];
        f.read_exact(&mut bytes).map_err(io_err)?;
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let v = ndarray::Array2::from_shape_vec((meta.rows, meta.cols), data)
            .map_err(|e| NagdError::Checkpoint(e.to_string()))?;
        params.insert(meta.name.clone(), v);
    }
    let mut rest = Vec::new();
    f.read_to_end(&mut rest).map_err(io_err)?;
    if !rest.is_empty() {
        return Err(NagdError::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    Ok(NagdModel { hyper, vocab, constants, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::BigInt;

    #[test]
    fn round_trip_is_bitwise() {
        let hyper = HyperParams { d_k: 8, heads: 2, ..HyperParams::default() };
        let vocab = Vocab::from_tokens(["+", "N0", "N1", "("].iter().map(|s| s.to_string()));
        let constants = vec![
            BigRational::from_integer(BigInt::from(1)),
            BigRational::new(BigInt::from(1), BigInt::from(4)),
        ];
        let model = NagdModel::new(hyper, vocab, constants, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&model, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.hyper, model.hyper);
        assert_eq!(back.vocab, model.vocab);
        assert_eq!(back.constants, model.constants);
        assert_eq!(back.params.len(), model.params.len());
        for (name, v) in &model.params {
            assert_eq!(&back.params[name], v, "parameter {name} drifted");
        }
    }

    #[test]
    fn rejects_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"NOTCKPT!xxxx").unwrap();
        assert!(matches!(load(&path), Err(NagdError::Checkpoint(_))));

        let hyper = HyperParams { d_k: 8, heads: 2, ..HyperParams::default() };
        let vocab = Vocab::from_tokens(["+"].iter().map(|s| s.to_string()));
        let model = NagdModel::new(hyper, vocab, vec![], 1).unwrap();
        let good = dir.path().join("good.ckpt");
        save(&model, &good).unwrap();
        let mut bytes = std::fs::read(&good).unwrap();
        bytes.truncate(bytes.len() - 9);
        std::fs::write(&good, &bytes).unwrap();
        assert!(matches!(load(&good), Err(NagdError::Io(_))));
    }
}
