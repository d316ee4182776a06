use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::reconstruct::{reconstruct_all, ReconstructConfig};

use super::{generate, SynthError, SynthScenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Pixel noise sigma.
    Noise,
    /// Fraction of frames with corrupted object poses.
    Outliers,
    /// Number of cameras.
    Cameras,
}

impl std::str::FromStr for SweepAxis {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "noise" => Ok(Self::Noise),
            "outliers" => Ok(Self::Outliers),
            "cameras" => Ok(Self::Cameras),
            _ => Err(SynthError::InvalidScenario(format!("unknown sweep axis {s:?}"))),
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::Noise => "noise",
            SweepAxis::Outliers => "outliers",
            SweepAxis::Cameras => "cameras",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub runs: usize,
    pub failures: usize,
    /// Mean joint error over the successful runs (meters).
    pub mean_error_m: Option<f64>,
}

impl SweepAxis {
    fn apply(self, template: &SynthScenario, value: f64) -> Result<SynthScenario, SynthError> {
        let mut s = template.clone();
        match self {
            SweepAxis::Noise => s.noise.pixel_sigma = value,
            SweepAxis::Outliers => s.noise.corrupted_pose_fraction = value,
            SweepAxis::Cameras => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(SynthError::InvalidScenario(format!("camera count {value} is not a positive integer")));
                }
                s.rig.cameras = value as usize;
            }
        }
        s.validate()?;
        Ok(s)
    }
}

/// Mean object-frame joint error of a full reconstruction of one scenario.
fn run_cell(scenario: &SynthScenario, config: &ReconstructConfig) -> Result<f64, SynthError> {
    let grasp = generate(scenario)?;
    let config = ReconstructConfig {
        seed: scenario.seed,
        ..config.clone()
    };
    let results = reconstruct_all(&grasp.observation, &config)?;
    let mut total = 0.0;
    for r in &results {
        let sk = grasp
            .skeletons
            .iter()
            .find(|s| s.handedness == r.hand)
            .expect("every reconstructed hand was generated");
        total += r.joints.iter().zip(sk.joints()).map(|(a, b)| (a - b).norm()).sum::<f64>() / r.joints.len() as f64;
    }
    Ok(total / results.len() as f64)
}

/// One generate + reconstruct per (value, seed) cell. Failed cells are counted and the
/// sweep continues.
pub fn sweep(
    template: &SynthScenario,
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
    config: &ReconstructConfig,
) -> Vec<SweepRow> {
    let cells: Vec<(usize, u64)> = (0..values.len()).flat_map(|v| seeds.iter().map(move |&s| (v, s))).collect();
    let results: Vec<Result<f64, SynthError>> = cells
        .par_iter()
        .map(|&(v, seed)| {
            let s = axis.apply(&SynthScenario { seed, ..template.clone() }, values[v])?;
            run_cell(&s, config)
        })
        .collect();
    values
        .iter()
        .enumerate()
        .map(|(v, &value)| {
            let ok: Vec<f64> = cells
                .iter()
                .zip(&results)
                .filter(|((cv, _), _)| *cv == v)
                .filter_map(|(_, r)| r.as_ref().ok().copied())
                .collect();
            SweepRow {
                value,
                runs: seeds.len(),
                failures: seeds.len() - ok.len(),
                mean_error_m: (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64),
            }
        })
        .collect()
}

/// `axis,value,runs,failures,mean_error_m`; the error column is empty when every run failed.
pub fn sweep_csv(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let mut out = String::from("axis,value,runs,failures,mean_error_m\n");
    for r in rows {
        let err = r.mean_error_m.map(|e| format!("{e:.9}")).unwrap_or_default();
        writeln!(out, "{axis},{},{},{},{err}", r.value, r.runs, r.failures).unwrap();
    }
    out
}
