use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::contact::BIN_COUNT;

use super::LearnerError;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const PRELU_INIT: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `out × in`.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Dense {
    fn zeros(inp: usize, out: usize) -> Self {
        Self {
            w: DMatrix::zeros(out, inp),
            b: DVector::zeros(out),
        }
    }

    /// Rows of `x` are samples.
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x * self.w.transpose();
        for mut row in z.row_iter_mut() {
            row += self.b.transpose();
        }
        z
    }
}

/// Affine → batchnorm → PReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenLayer {
    pub dense: Dense,
    pub gamma: DVector<f64>,
    pub beta: DVector<f64>,
    /// Per-unit PReLU slopes for negative inputs.
    pub alpha: DVector<f64>,
    pub running_mean: DVector<f64>,
    pub running_var: DVector<f64>,
}

impl HiddenLayer {
    fn new(inp: usize, out: usize) -> Self {
        Self {
            dense: Dense::zeros(inp, out),
            gamma: DVector::from_element(out, 1.0),
            beta: DVector::zeros(out),
            alpha: DVector::from_element(out, PRELU_INIT),
            running_mean: DVector::zeros(out),
            running_var: DVector::from_element(out, 1.0),
        }
    }

    fn width(&self) -> usize {
        self.gamma.len()
    }
}

/// Multi-layer perceptron over per-point features producing 10 contact-bin logits.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub input_dim: usize,
    pub hidden: Vec<HiddenLayer>,
    pub output: Dense,
}

/// Values cached by a training-mode forward pass for backpropagation.
struct LayerCache {
    input: DMatrix<f64>,
    xhat: DMatrix<f64>,
    inv_std: DVector<f64>,
    /// Batchnorm output (PReLU input).
    y: DMatrix<f64>,
}

impl MlpModel {
    /// All weights, biases and shifts zero; batchnorm scale 1; PReLU slopes 0.25.
    pub fn zeros(input_dim: usize, hidden: &[usize]) -> Self {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut inp = input_dim;
        for &h in hidden {
            layers.push(HiddenLayer::new(inp, h));
            inp = h;
        }
        Self {
            input_dim,
            hidden: layers,
            output: Dense::zeros(inp, BIN_COUNT),
        }
    }

    /// He-normal weights, zero biases.
    pub fn init<R: Rng>(input_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut m = Self::zeros(input_dim, hidden);
        let he = |w: &mut DMatrix<f64>, rng: &mut R| {
            let n = Normal::new(0.0, (2.0 / w.ncols() as f64).sqrt()).unwrap();
            for v in w.iter_mut() {
                *v = n.sample(rng);
            }
        };
        for l in &mut m.hidden {
            he(&mut l.dense.w, rng);
        }
        he(&mut m.output.w, rng);
        m
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.hidden.iter().map(|l| l.width()).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|s| s.len()).sum()
    }

    /// Trainable tensors in a fixed order.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.hidden {
            out.extend([
                l.dense.w.as_slice(),
                l.dense.b.as_slice(),
                l.gamma.as_slice(),
                l.beta.as_slice(),
                l.alpha.as_slice(),
            ]);
        }
        out.extend([self.output.w.as_slice(), self.output.b.as_slice()]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.hidden {
            out.push(l.dense.w.as_mut_slice());
            out.push(l.dense.b.as_mut_slice());
            out.push(l.gamma.as_mut_slice());
            out.push(l.beta.as_mut_slice());
            out.push(l.alpha.as_mut_slice());
        }
        out.push(self.output.w.as_mut_slice());
        out.push(self.output.b.as_mut_slice());
        out
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().concat()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut k = 0;
        for s in self.params_mut() {
            let n = s.len();
            s.copy_from_slice(&flat[k..k + n]);
            k += n;
        }
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<(), LearnerError> {
        if x.ncols() != self.input_dim {
            return Err(LearnerError::DimMismatch {
                expected: self.input_dim,
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    /// Logits for each row of `x`. Train mode normalizes with batch statistics and
    /// updates the running statistics; eval mode uses the running statistics.
    pub fn forward(&mut self, x: &DMatrix<f64>, mode: Mode) -> Result<DMatrix<f64>, LearnerError> {
        self.check_input(x)?;
        match mode {
            Mode::Eval => Ok(self.forward_eval(x)),
            Mode::Train => {
                let (logits, caches, _) = self.forward_train(x);
                let n = x.nrows() as f64;
                for (l, c) in self.hidden.iter_mut().zip(&caches) {
                    let (mean, var) = batch_stats(&c.pre_bn);
                    let unbiased = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
                    l.running_mean = &l.running_mean * (1.0 - BN_MOMENTUM) + mean * BN_MOMENTUM;
                    l.running_var = &l.running_var * (1.0 - BN_MOMENTUM) + var * (BN_MOMENTUM * unbiased);
                }
                Ok(logits)
            }
        }
    }

    /// Pure eval-mode forward pass.
    pub fn forward_eval(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut a = x.clone();
        for l in &self.hidden {
            let mut z = l.dense.apply(&a);
            for j in 0..z.ncols() {
                let inv = 1.0 / (l.running_var[j] + BN_EPSILON).sqrt();
                for i in 0..z.nrows() {
                    let y = l.gamma[j] * (z[(i, j)] - l.running_mean[j]) * inv + l.beta[j];
                    z[(i, j)] = prelu(y, l.alpha[j]);
                }
            }
            a = z;
        }
        self.output.apply(&a)
    }

    fn forward_train(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<TrainCache>, DMatrix<f64>) {
        let mut caches = Vec::with_capacity(self.hidden.len());
        let mut a = x.clone();
        for l in &self.hidden {
            let z = l.dense.apply(&a);
            let (mean, var) = batch_stats(&z);
            let inv_std = var.map(|v| 1.0 / (v + BN_EPSILON).sqrt());
            let mut xhat = z.clone();
            let mut y = z.clone();
            let mut out = z.clone();
            for j in 0..z.ncols() {
                for i in 0..z.nrows() {
                    let h = (z[(i, j)] - mean[j]) * inv_std[j];
                    xhat[(i, j)] = h;
                    y[(i, j)] = l.gamma[j] * h + l.beta[j];
                    out[(i, j)] = prelu(y[(i, j)], l.alpha[j]);
                }
            }
            caches.push(TrainCache {
                layer: LayerCache {
                    input: a,
                    xhat,
                    inv_std,
                    y,
                },
                pre_bn: z,
            });
            a = out;
        }
        let logits = self.output.apply(&a);
        (logits, caches, a)
    }

    /// Weighted cross-entropy (train-mode batch statistics) and its gradient with respect
    /// to every trainable tensor, in [`MlpModel::params`] order. Running statistics are
    /// not touched.
    pub fn loss_and_grad(
        &self,
        x: &DMatrix<f64>,
        labels: &[u8],
        class_weights: &[f64; BIN_COUNT],
    ) -> Result<(f64, Vec<Vec<f64>>), LearnerError> {
        self.check_input(x)?;
        if labels.len() != x.nrows() {
            return Err(LearnerError::LabelCount {
                rows: x.nrows(),
                labels: labels.len(),
            });
        }
        let (logits, caches, a_last) = self.forward_train(x);
        let n = x.nrows() as f64;
        let probs = softmax_rows(&logits);
        let mut loss = 0.0;
        let mut dlogits = probs.clone();
        for (i, &y) in labels.iter().enumerate() {
            let w = class_weights[y as usize];
            loss += w * -log_softmax_at(&logits, i, y as usize);
            for k in 0..BIN_COUNT {
                let t = if k == y as usize { 1.0 } else { 0.0 };
                dlogits[(i, k)] = w * (probs[(i, k)] - t) / n;
            }
        }
        loss /= n;

        let mut grads: Vec<Vec<f64>> = Vec::new();
        let dw_out = dlogits.transpose() * &a_last;
        let db_out: Vec<f64> = (0..BIN_COUNT).map(|k| dlogits.column(k).sum()).collect();
        let mut da = &dlogits * &self.output.w;
        let mut rev: Vec<Vec<Vec<f64>>> = Vec::new();
        for (l, c) in self.hidden.iter().zip(caches.iter()).rev() {
            let c = &c.layer;
            let (rows, cols) = (da.nrows(), da.ncols());
            let mut dy = da.clone();
            let mut dalpha = vec![0.0; cols];
            for j in 0..cols {
                for i in 0..rows {
                    let y = c.y[(i, j)];
                    if y <= 0.0 {
                        dalpha[j] += y * da[(i, j)];
                        dy[(i, j)] = l.alpha[j] * da[(i, j)];
                    }
                }
            }
            let mut dgamma = vec![0.0; cols];
            let mut dbeta = vec![0.0; cols];
            let mut dz = DMatrix::zeros(rows, cols);
            for j in 0..cols {
                let mut sum_dxhat = 0.0;
                let mut sum_dxhat_xhat = 0.0;
                for i in 0..rows {
                    dgamma[j] += dy[(i, j)] * c.xhat[(i, j)];
                    dbeta[j] += dy[(i, j)];
                    let dxh = dy[(i, j)] * l.gamma[j];
                    sum_dxhat += dxh;
                    sum_dxhat_xhat += dxh * c.xhat[(i, j)];
                }
                for i in 0..rows {
                    let dxh = dy[(i, j)] * l.gamma[j];
                    dz[(i, j)] = c.inv_std[j] / n * (n * dxh - sum_dxhat - c.xhat[(i, j)] * sum_dxhat_xhat);
                }
            }
            let dw = dz.transpose() * &c.input;
            let db: Vec<f64> = (0..cols).map(|j| dz.column(j).sum()).collect();
            da = &dz * &l.dense.w;
            rev.push(vec![dw.as_slice().to_vec(), db, dgamma, dbeta, dalpha]);
        }
        for layer in rev.into_iter().rev() {
            grads.extend(layer);
        }
        grads.push(dw_out.as_slice().to_vec());
        grads.push(db_out);
        Ok((loss, grads))
    }
}

struct TrainCache {
    layer: LayerCache,
    pre_bn: DMatrix<f64>,
}

#[inline]
fn prelu(y: f64, alpha: f64) -> f64 {
    if y > 0.0 {
        y
    } else {
        alpha * y
    }
}

/// Column means and biased variances.
fn batch_stats(z: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = z.nrows() as f64;
    let mean = DVector::from_iterator(z.ncols(), z.column_iter().map(|c| c.sum() / n));
    let var = DVector::from_iterator(
        z.ncols(),
        z.column_iter()
            .zip(mean.iter())
            .map(|(c, m)| c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n),
    );
    (mean, var)
}

fn log_softmax_at(logits: &DMatrix<f64>, i: usize, k: usize) -> f64 {
    let row = logits.row(i);
    let m = row.max();
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    logits[(i, k)] - lse
}

pub fn softmax_rows(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut p = logits.clone();
    for mut row in p.row_iter_mut() {
        let m = row.max();
        row.apply(|v| *v = (*v - m).exp());
        let s = row.sum();
        row /= s;
    }
    p
}

/// Mean over rows of `w_label · (−log softmax(logits)[label])`.
pub fn weighted_cross_entropy(logits: &DMatrix<f64>, labels: &[u8], class_weights: &[f64; BIN_COUNT]) -> f64 {
    let n = labels.len() as f64;
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| class_weights[y as usize] * -log_softmax_at(logits, i, y as usize))
        .sum::<f64>()
        / n
}
