use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contact::{class_weights, decode_annealed_mean, discretize, ContactDistribution, ContactMap, BIN_COUNT, DEFAULT_TEMPERATURE};
use crate::features::{compute_features, occlusion_dropout, FeatureFamily, FeatureMatrix};
use crate::geom::{PointCloud, RigidTransform, Vec3};
use crate::handmodel::{HandProxy, HandSkeleton, ProxyConfig};

use super::mlp::{softmax_rows, weighted_cross_entropy, MlpModel, Mode};
use super::{LearnerError, TrainConfig};

pub const GRAD_CHECK_STEP: f64 = 1e-5;
pub const GRAD_CHECK_PARAMS: usize = 200;
const PREDICT_CHUNK: usize = 1024;

/// One grasp: object points with normals, the hands, and measured contact per point.
#[derive(Clone, Debug)]
pub struct GraspExample {
    pub points: PointCloud,
    pub hands: Vec<HandSkeleton>,
    pub contact: ContactMap,
}

/// Rotation by `degrees` about the object's up axis (+z).
pub fn rotation_about_up(degrees: f64) -> RigidTransform {
    RigidTransform::from_axis_angle(Vec3::z() * degrees.to_radians(), Vec3::zeros())
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E3779B97F4A7C15) ^ b.wrapping_mul(0xC2B2AE3D27D4EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Features of `points`/`hands` after each of the `config.rotations()` up-axis rotations,
/// recomputed from the rotated geometry. With `config.dropout`, each copy gets its own
/// seeded occlusion dropout derived from `seed`.
pub fn rotated_features(
    points: &PointCloud,
    hands: &[HandSkeleton],
    family: FeatureFamily,
    config: &TrainConfig,
    seed: u64,
) -> Result<Vec<FeatureMatrix>, LearnerError> {
    (0..config.rotations())
        .map(|k| {
            let t = rotation_about_up(k as f64 * config.rotation_step_deg);
            let pts = points.transformed(&t);
            let hs: Vec<HandSkeleton> = hands.iter().map(|h| h.transformed(&t)).collect();
            let proxies = if family == FeatureFamily::Mesh {
                hs.iter()
                    .map(|h| HandProxy::from_skeleton(h, &ProxyConfig::default()))
                    .collect::<Result<Vec<_>, _>>()?
            } else {
                Vec::new()
            };
            let fm = compute_features(family, &pts, &hs, &proxies)?;
            if config.dropout {
                Ok(occlusion_dropout(&fm, &hs, mix_seed(seed, k as u64, 1))?)
            } else {
                Ok(fm)
            }
        })
        .collect()
}

/// Flat row-major design matrix with bin labels.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TrainingSet {
    pub dim: usize,
    pub x: Vec<f64>,
    pub labels: Vec<u8>,
}

impl TrainingSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            x: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn push(&mut self, fm: &FeatureMatrix, labels: &[u8]) -> Result<(), LearnerError> {
        if fm.dims() != self.dim {
            return Err(LearnerError::DimMismatch {
                expected: self.dim,
                actual: fm.dims(),
            });
        }
        if fm.rows() != labels.len() {
            return Err(LearnerError::LabelCount {
                rows: fm.rows(),
                labels: labels.len(),
            });
        }
        self.x.extend_from_slice(fm.as_slice());
        self.labels.extend_from_slice(labels);
        Ok(())
    }

    /// Every grasp contributes one copy per rotation; copies are independent samples.
    pub fn from_grasps(grasps: &[GraspExample], family: FeatureFamily, config: &TrainConfig) -> Result<Self, LearnerError> {
        let per_grasp = grasps
            .par_iter()
            .enumerate()
            .map(|(g, ex)| {
                let fms = rotated_features(&ex.points, &ex.hands, family, config, mix_seed(config.seed, g as u64, 0))?;
                Ok((fms, discretize(&ex.contact)))
            })
            .collect::<Result<Vec<_>, LearnerError>>()?;
        let mut set = Self::new(family.dims());
        for (fms, labels) in &per_grasp {
            for fm in fms {
                set.push(fm, labels)?;
            }
        }
        Ok(set)
    }

    fn batch(&self, idx: &[usize]) -> (DMatrix<f64>, Vec<u8>) {
        let x = DMatrix::from_fn(idx.len(), self.dim, |i, j| self.x[idx[i] * self.dim + j]);
        (x, idx.iter().map(|&i| self.labels[i]).collect())
    }
}

/// Adam with decoupled weight decay: `p ← p·(1 − lr·wd) − lr·m̂/(√v̂ + ε)`.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    pub fn new(config: &TrainConfig, parameter_count: usize) -> Self {
        Self {
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            weight_decay: config.weight_decay,
            m: vec![0.0; parameter_count],
            v: vec![0.0; parameter_count],
            t: 0,
        }
    }

    pub fn step(&mut self, model: &mut MlpModel, grads: &[Vec<f64>]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let decay = 1.0 - self.learning_rate * self.weight_decay;
        let mut k = 0;
        for (p, g) in model.params_mut().into_iter().zip(grads) {
            for (pi, gi) in p.iter_mut().zip(g) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                *pi = *pi * decay - self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + self.epsilon);
                k += 1;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub history: Vec<EpochStats>,
    /// Epoch whose model was kept (best validation loss, or the last epoch).
    pub best_epoch: usize,
    pub class_weights: [f64; BIN_COUNT],
}

fn eval_loss(model: &MlpModel, set: &TrainingSet, weights: &[f64; BIN_COUNT]) -> f64 {
    let idx: Vec<usize> = (0..set.len()).collect();
    let (x, y) = set.batch(&idx);
    weighted_cross_entropy(&model.forward_eval(&x), &y, weights)
}

/// Mini-batch AdamW on the weighted cross-entropy. Single-threaded and deterministic for
/// a fixed seed. With `val`, stops after `patience` epochs without improvement and
/// returns the best model.
pub fn train(set: &TrainingSet, val: Option<&TrainingSet>, config: &TrainConfig) -> Result<TrainOutcome, LearnerError> {
    config.validate()?;
    if set.len() < 2 {
        return Err(LearnerError::NoData);
    }
    if let Some(v) = val {
        if v.dim != set.dim {
            return Err(LearnerError::DimMismatch {
                expected: set.dim,
                actual: v.dim,
            });
        }
    }
    let weights = class_weights(&set.labels, config.lambda)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MlpModel::init(set.dim, &config.hidden, &mut rng);
    let mut adam = AdamW::new(config, model.parameter_count());
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, MlpModel)> = None;
    let mut last_good = model.clone();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(config.batch_size).filter(|c| c.len() >= 2) {
            let (x, y) = set.batch(idx);
            let (loss, grads) = model.loss_and_grad(&x, &y, &weights)?;
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(LearnerError::NonFiniteLoss {
                    epoch,
                    checkpoint: Box::new(last_good),
                });
            }
            model.forward(&x, Mode::Train)?;
            adam.step(&mut model, &grads);
            total += loss;
            batches += 1;
        }
        if batches == 0 {
            return Err(LearnerError::NoData);
        }
        last_good = model.clone();
        let val_loss = val.filter(|v| !v.is_empty()).map(|v| eval_loss(&model, v, &weights));
        history.push(EpochStats {
            epoch,
            train_loss: total / batches as f64,
            val_loss,
        });
        if let Some(vl) = val_loss {
            let improved = best.as_ref().is_none_or(|(b, _, _)| vl < *b);
            if improved {
                best = Some((vl, epoch, model.clone()));
            } else if epoch - best.as_ref().unwrap().1 >= config.patience {
                break;
            }
        }
    }
    let (model, best_epoch) = match best {
        Some((_, e, m)) => (m, e),
        None => (model, history.len() - 1),
    };
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        class_weights: weights,
    })
}

/// Eval-mode softmax probabilities for row-major `rows`, computed in parallel chunks.
pub fn predict_rows(model: &MlpModel, rows: &[f64], dim: usize) -> Result<Vec<[f64; BIN_COUNT]>, LearnerError> {
    if dim != model.input_dim {
        return Err(LearnerError::DimMismatch {
            expected: model.input_dim,
            actual: dim,
        });
    }
    let out = rows
        .par_chunks(PREDICT_CHUNK * dim)
        .map(|chunk| {
            let n = chunk.len() / dim;
            let x = DMatrix::from_row_slice(n, dim, chunk);
            let p = softmax_rows(&model.forward_eval(&x));
            (0..n)
                .map(|i| std::array::from_fn(|k| p[(i, k)]))
                .collect::<Vec<[f64; BIN_COUNT]>>()
        })
        .collect::<Vec<_>>()
        .concat();
    Ok(out)
}

/// Averages the class probabilities over the rotated copies and decodes each point with
/// the annealed mean (T = 0.1).
pub fn predict(model: &MlpModel, rotated: &[FeatureMatrix]) -> Result<(ContactDistribution, ContactMap), LearnerError> {
    let first = rotated.first().ok_or(LearnerError::NoData)?;
    let n = first.rows();
    let mut acc = vec![[0.0; BIN_COUNT]; n];
    for fm in rotated {
        if fm.rows() != n {
            return Err(LearnerError::LabelCount {
                rows: n,
                labels: fm.rows(),
            });
        }
        for (a, p) in acc.iter_mut().zip(predict_rows(model, fm.as_slice(), fm.dims())?) {
            for k in 0..BIN_COUNT {
                a[k] += p[k];
            }
        }
    }
    for a in &mut acc {
        let s: f64 = a.iter().sum();
        for v in a.iter_mut() {
            *v /= s;
        }
    }
    let dist = ContactDistribution::new(acc)?;
    let map = decode_annealed_mean(&dist, DEFAULT_TEMPERATURE)?;
    Ok((dist, map))
}

/// Largest relative difference between analytic gradients and central finite differences
/// over `GRAD_CHECK_PARAMS` randomly chosen parameters.
pub fn grad_check(
    model: &MlpModel,
    x: &DMatrix<f64>,
    labels: &[u8],
    weights: &[f64; BIN_COUNT],
    seed: u64,
) -> Result<f64, LearnerError> {
    grad_check_with(model, x, labels, weights, seed, |m, x, y, w| m.loss_and_grad(x, y, w).map(|r| r.1))
}

/// [`grad_check`] against an arbitrary gradient implementation.
pub fn grad_check_with<G>(
    model: &MlpModel,
    x: &DMatrix<f64>,
    labels: &[u8],
    weights: &[f64; BIN_COUNT],
    seed: u64,
    gradient: G,
) -> Result<f64, LearnerError>
where
    G: Fn(&MlpModel, &DMatrix<f64>, &[u8], &[f64; BIN_COUNT]) -> Result<Vec<Vec<f64>>, LearnerError>,
{
    let analytic: Vec<f64> = gradient(model, x, labels, weights)?.concat();
    let base = model.flat_params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = GRAD_CHECK_PARAMS.min(base.len());
    let chosen = rand::seq::index::sample(&mut rng, base.len(), count).into_vec();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in chosen {
        let mut at = |delta: f64| -> Result<f64, LearnerError> {
            let mut p = base.clone();
            p[i] += delta;
            probe.set_flat_params(&p);
            Ok(probe.loss_and_grad(x, labels, weights)?.0)
        };
        let numeric = (at(GRAD_CHECK_STEP)? - at(-GRAD_CHECK_STEP)?) / (2.0 * GRAD_CHECK_STEP);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}
