//! Appearance descriptors: unit-norm embeddings, the scaled cosine-softmax
//! classifier and cosine distance.

use alloc::vec::Vec;

use crate::detmath::{clamped_neg_log, softmax};
use crate::error::{input, Result};

/// Descriptor length produced by the appearance network.
pub const DESCRIPTOR_DIM: usize = 128;
/// Default classifier temperature.
pub const DEFAULT_KAPPA: f64 = 10.0;

const UNIT_TOLERANCE: f64 = 1e-6;

/// A unit-L2-norm appearance embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceDescriptor(Vec<f64>);

impl AppearanceDescriptor {
    /// Scales `v` to unit length. Fails on empty, zero or non-finite input.
    pub fn normalize(v: &[f64]) -> Result<Self> {
        if v.is_empty() {
            return Err(input("descriptor must have at least one component"));
        }
        let norm = l2(v);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(input("cannot normalize a zero or non-finite vector"));
        }
        Ok(Self(v.iter().map(|x| x / norm).collect()))
    }

    /// Wraps a vector that is already unit length (within 1e-6).
    pub fn from_unit(v: Vec<f64>) -> Result<Self> {
        let norm = l2(&v);
        if v.is_empty() || (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(input(alloc::format!("descriptor norm {norm} is not 1")));
        }
        Ok(Self(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &AppearanceDescriptor) -> f64 {
        dot(&self.0, &other.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2(v: &[f64]) -> f64 {
    libm::sqrt(dot(v, v))
}

/// `1 - <a, b>`, clamped to `[0, 2]` against rounding.
pub fn cosine_distance(a: &AppearanceDescriptor, b: &AppearanceDescriptor) -> f64 {
    (1.0 - a.dot(b)).clamp(0.0, 2.0)
}

/// Softmax over `kappa`-scaled cosine similarities to per-class unit weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineClassifier {
    weights: Vec<AppearanceDescriptor>,
    kappa: f64,
}

impl CosineClassifier {
    pub fn new(weights: Vec<AppearanceDescriptor>, kappa: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(input("classifier needs at least one class"));
        }
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(input("kappa must be positive"));
        }
        let dim = weights[0].dim();
        if weights.iter().any(|w| w.dim() != dim) {
            return Err(input("classifier weights differ in dimension"));
        }
        Ok(Self { weights, kappa })
    }

    /// Normalizes raw class weight vectors before building the classifier.
    pub fn from_raw(weights: &[Vec<f64>], kappa: f64) -> Result<Self> {
        let weights = weights
            .iter()
            .map(|w| AppearanceDescriptor::normalize(w))
            .collect::<Result<Vec<_>>>()?;
        Self::new(weights, kappa)
    }

    pub fn classes(&self) -> usize {
        self.weights.len()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Class probabilities `p_k ∝ exp(kappa * <w_k, r>)`.
    pub fn classify(&self, r: &AppearanceDescriptor) -> Result<Vec<f64>> {
        if r.dim() != self.weights[0].dim() {
            return Err(input(alloc::format!(
                "descriptor has dimension {}, classifier expects {}",
                r.dim(),
                self.weights[0].dim()
            )));
        }
        let logits: Vec<f64> = self.weights.iter().map(|w| self.kappa * w.dot(r)).collect();
        Ok(softmax(&logits))
    }
}

/// Summed cross-entropy of `predictions` against integer `labels`.
pub fn classifier_loss(predictions: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(input("predictions and labels differ in length"));
    }
    predictions
        .iter()
        .zip(labels)
        .map(|(p, &label)| {
            p.get(label)
                .map(|&q| clamped_neg_log(q))
                .ok_or_else(|| input(alloc::format!("label {label} out of range")))
        })
        .sum()
}
