use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use graspkit_core::contact::BIN_COUNT;
use graspkit_core::features::{compute_features, occlusion_dropout, write_features};
use graspkit_core::handmodel::{HandProxy, ProxyConfig};
use graspkit_core::learner::{
    load_checkpoint, predict as predict_contact, rotated_features, save_checkpoint, train as train_model, EpochStats,
    GraspExample, TrainConfig, TrainingSet,
};
use graspkit_core::FeatureFamily;

use crate::config::{resolve, Overrides};
use crate::formats::{mesh_ply, GraspDir, CONTACT_FIELD};
use crate::run::{usage, Run};
use crate::Common;

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    /// hands.json to use instead of the directory's own.
    #[arg(long, value_name = "PATH")]
    hands: Option<PathBuf>,
    /// simple-joints | relative-joints | skeleton | mesh
    #[arg(long)]
    family: Option<FeatureFamily>,
    /// Apply seeded occlusion dropout.
    #[arg(long)]
    dropout: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FeaturesConfig {
    family: FeatureFamily,
    dropout: bool,
    seed: u64,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        Self {
            family: FeatureFamily::Skeleton,
            dropout: false,
            seed: 0,
        }
    }
}

/// Writes `features.f32` (row-major little-endian float32) and its `features.json` sidecar.
pub fn features(a: FeaturesArgs) -> Result<()> {
    let mut run = Run::with_out("features", a.common.out.as_deref())?;
    let mut o = Overrides::default();
    o.opt("seed", a.common.seed).opt("family", a.family);
    if a.dropout {
        o.set("dropout", true);
    }
    let (config, echoed): (FeaturesConfig, _) = resolve(&mut run, a.common.config.as_deref(), o)?;
    let g = GraspDir::load(&mut run, &a.input, a.hands.as_deref())?;
    let proxies = g
        .hands
        .iter()
        .map(|h| HandProxy::from_skeleton(h, &ProxyConfig::default()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut fm = compute_features(config.family, &g.points(), &g.hands, &proxies)?;
    if config.dropout {
        fm = occlusion_dropout(&fm, &g.hands, config.seed)?;
    }
    write_features(&fm, &run.path("features.f32"), &run.path("features.json"))?;
    run.record("features.f32")?;
    run.record("features.json")?;
    run.finish(&echoed)
}

/// Training parameters plus the feature family; echoed as the model directory's
/// `config.json`, which `predict` reads back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ModelConfig {
    family: FeatureFamily,
    train: TrainConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            family: FeatureFamily::Skeleton,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Training grasp directories (with contact).
    #[arg(long, value_name = "DIR", num_args = 1.., required = true)]
    data: Vec<PathBuf>,
    /// Validation grasp directories for early stopping.
    #[arg(long, value_name = "DIR", num_args = 1..)]
    val: Vec<PathBuf>,
    #[arg(long)]
    family: Option<FeatureFamily>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

fn examples(run: &mut Run, dirs: &[PathBuf]) -> Result<Vec<GraspExample>> {
    dirs.iter()
        .map(|d| {
            let g = GraspDir::load(run, d, None)?;
            Ok(GraspExample {
                points: g.points(),
                contact: g.contact()?.clone(),
                hands: g.hands,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct TrainReport<'a> {
    best_epoch: usize,
    rows: usize,
    class_weights: [f64; BIN_COUNT],
    history: &'a [EpochStats],
}

/// Writes `model.bin` (float32 checkpoint) and `history.json`.
pub fn train(a: TrainArgs) -> Result<()> {
    let mut run = Run::with_out("train", a.common.out.as_deref())?;
    let mut o = Overrides::default();
    o.opt("family", a.family)
        .opt("train.seed", a.common.seed)
        .opt("train.epochs", a.epochs)
        .opt("train.learning_rate", a.learning_rate);
    let (config, echoed): (ModelConfig, _) = resolve(&mut run, a.common.config.as_deref(), o)?;
    config.train.validate()?;
    let train_set = TrainingSet::from_grasps(&examples(&mut run, &a.data)?, config.family, &config.train)?;
    let val_set = if a.val.is_empty() {
        None
    } else {
        let val_config = TrainConfig {
            dropout: false,
            ..config.train.clone()
        };
        Some(TrainingSet::from_grasps(&examples(&mut run, &a.val)?, config.family, &val_config)?)
    };
    let outcome = train_model(&train_set, val_set.as_ref(), &config.train)?;
    save_checkpoint(&outcome.model, &config.train.hash(), &run.path("model.bin"))?;
    run.record("model.bin")?;
    run.write_json(
        "history.json",
        &TrainReport {
            best_epoch: outcome.best_epoch,
            rows: train_set.len(),
            class_weights: outcome.class_weights,
            history: &outcome.history,
        },
    )?;
    run.finish(&echoed)
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[command(flatten)]
    common: Common,
    /// Model directory written by `train`.
    #[arg(long, value_name = "DIR")]
    model: PathBuf,
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    /// hands.json to use instead of the directory's own.
    #[arg(long, value_name = "PATH")]
    hands: Option<PathBuf>,
}

fn load_model_config(run: &mut Run, dir: &Path) -> Result<ModelConfig> {
    let path = dir.join("config.json");
    run.read_json(&path).with_context(|| format!("{} is not a model directory", dir.display()))
}

/// Writes `contact.ply` (decoded prediction) and `distribution.f32` (`points × 10`
/// rotation-averaged bin probabilities, little-endian float32).
pub fn predict(a: PredictArgs) -> Result<()> {
    let mut run = Run::with_out("predict", a.common.out.as_deref())?;
    if a.common.seed.is_some() || a.common.config.is_some() {
        return usage("predict takes its configuration from the model directory; drop --seed/--config");
    }
    let model_config = load_model_config(&mut run, &a.model)?;
    let ckpt = a.model.join("model.bin");
    run.read(&ckpt)?;
    let (model, header) = load_checkpoint(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    if header.config_hash != model_config.train.hash() {
        anyhow::bail!("{} was not trained with {}", ckpt.display(), a.model.join("config.json").display());
    }
    let echoed = serde_json::to_value(&model_config)?;
    let config = TrainConfig {
        dropout: false,
        ..model_config.train.clone()
    };
    let g = GraspDir::load(&mut run, &a.input, a.hands.as_deref())?;
    let rotated = rotated_features(&g.points(), &g.hands, model_config.family, &config, config.seed)?;
    let (dist, map) = predict_contact(&model, &rotated)?;
    let mut bytes = Vec::with_capacity(dist.len() * BIN_COUNT * 4);
    for row in dist.rows() {
        for &p in row {
            bytes.extend_from_slice(&(p as f32).to_le_bytes());
        }
    }
    run.write_ply("contact.ply", &mesh_ply(&g.mesh, &[(CONTACT_FIELD, map.values())]))?;
    run.write("distribution.f32", &bytes)?;
    run.finish(&echoed)
}
