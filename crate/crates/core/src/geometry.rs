//! Similarity primitives.

use crate::embedding::Embedding;
use crate::error::{Error, Result};

/// A cosine similarity between two unit embeddings.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Similarity(f64);

impl Similarity {
    const SLACK: f64 = 1e-9;

    /// Accepts values in `[-1, 1]` up to rounding slack.
    pub fn new(value: f64) -> Option<Self> {
        (value.is_finite() && value.abs() <= 1.0 + Self::SLACK).then_some(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The similarity clamped into `[0, 1]`.
    pub fn non_negative(self) -> f64 {
        self.0.clamp(0.0, 1.0)
    }
}

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<Similarity> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    // Elementwise products commute exactly and the summation order is fixed,
    // so the result is bitwise symmetric.
    let value = a.dot(b);
    Ok(Similarity::new(value).unwrap_or(Similarity(value.clamp(-1.0, 1.0))))
}

/// Two-tower score `text . image / tau`.
pub fn scaled_score(text: &Embedding, image: &Embedding, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::NonPositiveTemperature(tau));
    }
    Ok(cosine_similarity(text, image)?.value() / tau)
}

/// Degree of containment: `clamp(sim / theta, 0, 1)`.
pub fn threshold_containment(sim: Similarity, theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::NonPositiveThreshold(theta));
    }
    Ok((sim.value() / theta).clamp(0.0, 1.0))
}
