//! Contact values: thermal normalization, thresholding, 10-bin discretization,
//! rebalancing weights and annealed-mean decoding.

use serde::{Deserialize, Serialize};

pub const BIN_COUNT: usize = 10;
pub const DEFAULT_THRESHOLD: f64 = 0.4;
pub const DEFAULT_LAMBDA: f64 = 0.4;
pub const DEFAULT_TEMPERATURE: f64 = 0.1;
/// Normalized values of the warmest and coldest raw readings.
pub const SIGMOID_HIGH: f64 = 0.95;
pub const SIGMOID_LOW: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ContactError {
    #[error("raw values are constant or empty; no sigmoid fit")]
    Constant,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("contact value {value} at index {index} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("distribution {0} is not a probability vector")]
    InvalidDistribution(usize),
    #[error("distribution {0} is all zeros")]
    ZeroDistribution(usize),
    #[error("no labels")]
    EmptyLabels,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Per-vertex (or per-point) contact intensity in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ContactMap {
    values: Vec<f64>,
}

impl ContactMap {
    pub fn new(values: Vec<f64>) -> Result<Self, ContactError> {
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(ContactError::NonFinite(index));
            }
            if !(0.0..=1.0).contains(&value) {
                return Err(ContactError::OutOfRange { index, value });
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl<'de> Deserialize<'de> for ContactMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        ContactMap::new(Vec::<f64>::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Logistic `v ↦ 1 / (1 + exp(-a (v - b)))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sigmoid {
    pub a: f64,
    pub b: f64,
}

impl Sigmoid {
    /// The logistic curve through `(min, SIGMOID_LOW)` and `(max, SIGMOID_HIGH)`.
    pub fn fit(min: f64, max: f64) -> Result<Self, ContactError> {
        if !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(ContactError::Constant);
        }
        let logit = (SIGMOID_HIGH / (1.0 - SIGMOID_HIGH)).ln();
        Ok(Self {
            a: 2.0 * logit / (max - min),
            b: 0.5 * (min + max),
        })
    }

    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        1.0 / (1.0 + (-self.a * (v - self.b)).exp())
    }
}

pub fn normalize_thermal(raw: &[f64]) -> Result<ContactMap, ContactError> {
    if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
        return Err(ContactError::NonFinite(i));
    }
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s = Sigmoid::fit(min, max)?;
    let values = raw
        .iter()
        .map(|&v| {
            // Pin the extremes exactly rather than trusting exp/ln round trips.
            if v == max {
                SIGMOID_HIGH
            } else if v == min {
                SIGMOID_LOW
            } else {
                s.eval(v)
            }
        })
        .collect();
    Ok(ContactMap { values })
}

/// `value >= tau` counts as contact.
pub fn binarize(map: &ContactMap, tau: f64) -> Vec<bool> {
    map.values.iter().map(|&v| v >= tau).collect()
}

#[inline]
pub fn bin_of(v: f64) -> u8 {
    ((10.0 * v).floor().max(0.0) as usize).min(BIN_COUNT - 1) as u8
}

#[inline]
pub fn bin_center(bin: usize) -> f64 {
    (bin as f64 + 0.5) / BIN_COUNT as f64
}

pub fn discretize(map: &ContactMap) -> Vec<u8> {
    map.values.iter().map(|&v| bin_of(v)).collect()
}

/// Empirical frequency of each bin.
pub fn bin_frequencies(labels: &[u8]) -> Result<[f64; BIN_COUNT], ContactError> {
    if labels.is_empty() {
        return Err(ContactError::EmptyLabels);
    }
    let mut counts = [0usize; BIN_COUNT];
    for &l in labels {
        let l = l as usize;
        if l >= BIN_COUNT {
            return Err(ContactError::InvalidParameter(format!("label {l} out of range")));
        }
        counts[l] += 1;
    }
    Ok(counts.map(|c| c as f64 / labels.len() as f64))
}

/// Rebalancing weights `w_b ∝ ((1-λ) p_b + λ/10)^-1`, normalized so that `Σ p_b w_b = 1`.
///
/// With `λ = 0` an empty bin has no finite weight; it is assigned 0 since no sample uses it.
pub fn class_weights(labels: &[u8], lambda: f64) -> Result<[f64; BIN_COUNT], ContactError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(ContactError::InvalidParameter(format!("lambda {lambda} outside [0, 1]")));
    }
    let p = bin_frequencies(labels)?;
    let raw = p.map(|pb| {
        let m = (1.0 - lambda) * pb + lambda / BIN_COUNT as f64;
        if m > 0.0 {
            1.0 / m
        } else {
            0.0
        }
    });
    let norm: f64 = p.iter().zip(&raw).map(|(pb, wb)| pb * wb).sum();
    Ok(raw.map(|w| w / norm))
}

/// Per-point 10-bin probability vectors.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ContactDistribution {
    probs: Vec<[f64; BIN_COUNT]>,
}

impl ContactDistribution {
    /// Each row must be non-negative and sum to 1 within 1e-6.
    pub fn new(probs: Vec<[f64; BIN_COUNT]>) -> Result<Self, ContactError> {
        for (i, row) in probs.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
                return Err(if sum == 0.0 {
                    ContactError::ZeroDistribution(i)
                } else {
                    ContactError::InvalidDistribution(i)
                });
            }
        }
        Ok(Self { probs })
    }

    pub fn one_hot(labels: &[u8]) -> Self {
        Self {
            probs: labels
                .iter()
                .map(|&l| {
                    let mut row = [0.0; BIN_COUNT];
                    row[(l as usize).min(BIN_COUNT - 1)] = 1.0;
                    row
                })
                .collect(),
        }
    }

    pub fn rows(&self) -> &[[f64; BIN_COUNT]] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

impl<'de> Deserialize<'de> for ContactDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        ContactDistribution::new(Vec::<[f64; BIN_COUNT]>::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Annealed mean of one probability vector. Zero-probability bins are excluded.
pub fn annealed_mean(p: &[f64; BIN_COUNT], temperature: f64) -> Option<f64> {
    let logs: Vec<(usize, f64)> = p
        .iter()
        .enumerate()
        .filter(|(_, &pb)| pb > 0.0)
        .map(|(b, &pb)| (b, pb.ln() / temperature))
        .collect();
    let top = logs.iter().map(|&(_, l)| l).fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return None;
    }
    let mut z = 0.0;
    let mut acc = 0.0;
    for &(b, l) in &logs {
        let q = (l - top).exp();
        z += q;
        acc += q * bin_center(b);
    }
    Some(acc / z)
}

pub fn decode_annealed_mean(dist: &ContactDistribution, temperature: f64) -> Result<ContactMap, ContactError> {
    if !(temperature > 0.0) {
        return Err(ContactError::InvalidParameter(format!("temperature {temperature} must be positive")));
    }
    let values = dist
        .probs
        .iter()
        .enumerate()
        .map(|(i, row)| annealed_mean(row, temperature).ok_or(ContactError::ZeroDistribution(i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ContactMap { values })
}
