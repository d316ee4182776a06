//! Checkpoint layout: `GKMLP` magic, u32 format version, u32 header length, JSON header,
//! then the tensors listed in the header as little-endian float32 (matrices row-major).

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::mlp::{Dense, MlpModel};
use super::LearnerError;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 5] = b"GKMLP";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub version: u32,
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub config_hash: String,
    pub tensors: Vec<TensorInfo>,
}

fn tensors(model: &MlpModel) -> Vec<(TensorInfo, Vec<f64>)> {
    let mut out = Vec::new();
    let mat = |name: String, m: &DMatrix<f64>| {
        (
            TensorInfo {
                name,
                shape: vec![m.nrows(), m.ncols()],
            },
            m.transpose().as_slice().to_vec(),
        )
    };
    let vec = |name: String, v: &DVector<f64>| {
        (
            TensorInfo {
                name,
                shape: vec![v.len()],
            },
            v.as_slice().to_vec(),
        )
    };
    for (i, l) in model.hidden.iter().enumerate() {
        out.push(mat(format!("hidden{i}.weight"), &l.dense.w));
        out.push(vec(format!("hidden{i}.bias"), &l.dense.b));
        out.push(vec(format!("hidden{i}.bn_scale"), &l.gamma));
        out.push(vec(format!("hidden{i}.bn_shift"), &l.beta));
        out.push(vec(format!("hidden{i}.prelu"), &l.alpha));
        out.push(vec(format!("hidden{i}.running_mean"), &l.running_mean));
        out.push(vec(format!("hidden{i}.running_var"), &l.running_var));
    }
    out.push(mat("output.weight".into(), &model.output.w));
    out.push(vec("output.bias".into(), &model.output.b));
    out
}

pub fn save_checkpoint(model: &MlpModel, config_hash: &str, path: &Path) -> Result<(), LearnerError> {
    let ts = tensors(model);
    let header = CheckpointHeader {
        version: CHECKPOINT_VERSION,
        input_dim: model.input_dim,
        hidden: model.hidden_widths(),
        config_hash: config_hash.to_string(),
        tensors: ts.iter().map(|(i, _)| i.clone()).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(MAGIC)?;
    f.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    f.write_all(&(json.len() as u32).to_le_bytes())?;
    f.write_all(&json)?;
    for (_, data) in &ts {
        for v in data {
            f.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(MlpModel, CheckpointHeader), LearnerError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |m: &str| LearnerError::Checkpoint(m.to_string());
    if bytes.len() < 13 || &bytes[..5] != MAGIC {
        return Err(bad("missing magic"));
    }
    let version = u32::from_le_bytes(bytes[5..9].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(LearnerError::Checkpoint(format!("unsupported version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let body = bytes.get(13..13 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    let mut model = MlpModel::zeros(header.input_dim, &header.hidden);
    let expected = tensors(&model);
    if expected.iter().map(|(i, _)| i).ne(header.tensors.iter()) {
        return Err(bad("tensor list does not match the declared architecture"));
    }
    let floats: Vec<f64> = bytes[13 + hlen..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let total: usize = expected.iter().map(|(_, d)| d.len()).sum();
    if floats.len() != total || (bytes.len() - 13 - hlen) % 4 != 0 {
        return Err(LearnerError::Checkpoint(format!(
            "expected {total} float32 values, found {}",
            floats.len()
        )));
    }
    let mut it = floats.into_iter();
    let mut take = |n: usize| -> Vec<f64> { it.by_ref().take(n).collect() };
    let read_dense = |d: &mut Dense, take: &mut dyn FnMut(usize) -> Vec<f64>| {
        let (r, c) = d.w.shape();
        d.w = DMatrix::from_row_slice(r, c, &take(r * c));
        d.b = DVector::from_vec(take(r));
    };
    for l in &mut model.hidden {
        read_dense(&mut l.dense, &mut take);
        let h = l.gamma.len();
        l.gamma = DVector::from_vec(take(h));
        l.beta = DVector::from_vec(take(h));
        l.alpha = DVector::from_vec(take(h));
        l.running_mean = DVector::from_vec(take(h));
        l.running_var = DVector::from_vec(take(h));
        if l.running_var.iter().any(|v| !(*v > 0.0)) {
            return Err(bad("batchnorm variance must be positive"));
        }
    }
    read_dense(&mut model.output, &mut take);
    Ok((model, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> MlpModel {
        let mut m = MlpModel::init(7, &[6, 4], &mut ChaCha8Rng::seed_from_u64(1));
        for l in &mut m.hidden {
            l.running_var.iter_mut().enumerate().for_each(|(i, v)| *v = 0.5 + i as f64);
            l.running_mean.fill(0.125);
        }
        m
    }

    #[test]
    fn round_trip_matches_to_float32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = model();
        save_checkpoint(&m, "abc", &path).unwrap();
        let (back, header) = load_checkpoint(&path).unwrap();
        assert_eq!(header.config_hash, "abc");
        assert_eq!(header.hidden, vec![6, 4]);
        assert_eq!(header.tensors.len(), 2 * 7 + 2);
        assert_eq!(header.tensors[0], TensorInfo { name: "hidden0.weight".into(), shape: vec![6, 7] });
        for (a, b) in m.flat_params().iter().zip(back.flat_params()) {
            assert_eq!(*a as f32 as f64, b);
        }
        assert_eq!(back.hidden[1].running_var, m.hidden[1].running_var);
        // Saving the reloaded model is byte-stable.
        let again = dir.path().join("n.ckpt");
        save_checkpoint(&back, "abc", &again).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&model(), "x", &path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut bytes = good.clone();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(LearnerError::Checkpoint(_))));

        std::fs::write(&path, &good[..good.len() - 4]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(LearnerError::Checkpoint(_))));

        // Zero out the last running variance of the first layer.
        let hlen = u32::from_le_bytes(good[9..13].try_into().unwrap()) as usize;
        let offset = 13 + hlen + 4 * (6 * 7 + 6 * 6 - 1);
        let mut bytes = good.clone();
        bytes[offset..offset + 4].copy_from_slice(&0f32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(LearnerError::Checkpoint(_))));

        let mut bytes = good;
        bytes[5] = 9;
        std::fs::write(&path, &bytes).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
