use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DropoutRecord, FeatureError, FeatureFamily, FeatureMatrix};

/// JSON description stored next to the raw float32 matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSidecar {
    pub family: FeatureFamily,
    pub dims: usize,
    pub rows: usize,
    pub row_hand: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closest_part: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout: Option<DropoutRecord>,
}

/// Writes the values as little-endian float32, row-major, plus the JSON sidecar.
pub fn write_features(fm: &FeatureMatrix, bin: &Path, json: &Path) -> Result<(), FeatureError> {
    let mut bytes = Vec::with_capacity(fm.as_slice().len() * 4);
    for &v in fm.as_slice() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(bin, bytes)?;
    let sidecar = FeatureSidecar {
        family: fm.family(),
        dims: fm.dims(),
        rows: fm.rows(),
        row_hand: fm.row_hand().to_vec(),
        closest_part: fm.closest_part().map(|p| p.to_vec()),
        dropout: fm.dropout.clone(),
    };
    std::fs::write(json, serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read_features(bin: &Path, json: &Path) -> Result<FeatureMatrix, FeatureError> {
    let sidecar: FeatureSidecar = serde_json::from_slice(&std::fs::read(json)?)?;
    if sidecar.dims != sidecar.family.dims() {
        return Err(FeatureError::Invalid(format!(
            "{} features have {} dims, sidecar says {}",
            sidecar.family,
            sidecar.family.dims(),
            sidecar.dims
        )));
    }
    let bytes = std::fs::read(bin)?;
    let expected = sidecar.rows * sidecar.dims * 4;
    if bytes.len() != expected {
        return Err(FeatureError::Invalid(format!(
            "binary has {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let mut fm = FeatureMatrix::new(sidecar.family, data, sidecar.row_hand, sidecar.closest_part)?;
    fm.dropout = sidecar.dropout;
    Ok(fm)
}
