//! Unit-norm embedding vectors.
//!
//! Every embedding is normalized exactly once, on construction, so that all
//! downstream similarities reduce to plain dot products.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms at or below this are treated as the zero vector.
pub const MIN_NORM: f64 = 1e-12;

/// Vectors whose norm is already this close to 1 are returned untouched,
/// which makes normalization idempotent bit-for-bit.
const UNIT_TOLERANCE: f64 = 1e-10;

/// Unit-norm tolerance for vectors loaded from f32 storage.
const STORED_UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    /// Normalizes `values` into a unit vector.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        normalize_embedding(values)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        dot(&self.values, &other.values)
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        normalize_embedding(v)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.values
    }
}

impl AsRef<[f64]> for Embedding {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Ingests a vector read from 32-bit storage. Vectors already unit-norm to
/// f32 precision are kept as stored so that a write of the loaded values
/// reproduces the original bytes; anything else is normalized.
pub(crate) fn from_stored(v: Vec<f64>) -> Result<Embedding> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    if (l2_norm(&v) - 1.0).abs() <= STORED_UNIT_TOLERANCE {
        return Ok(Embedding { values: v });
    }
    normalize_embedding(v)
}

pub fn normalize_embedding(mut v: Vec<f64>) -> Result<Embedding> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let norm = l2_norm(&v);
    if !(norm > MIN_NORM) {
        return Err(Error::ZeroVector);
    }
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    Ok(Embedding { values: v })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_four_five() {
        let e = normalize_embedding(vec![3.0, 4.0]).unwrap();
        assert!((e.as_slice()[0] - 0.6).abs() < 1e-15);
        assert!((e.as_slice()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn unit_vector_passes_through() {
        let v = vec![0.0, 1.0, 0.0];
        let e = normalize_embedding(v.clone()).unwrap();
        assert_eq!(e.as_slice(), v.as_slice());
    }

    #[test]
    fn zero_and_non_finite_rejected() {
        assert!(matches!(
            normalize_embedding(vec![0.0, 0.0]),
            Err(Error::ZeroVector)
        ));
        assert!(matches!(
            normalize_embedding(vec![1e-13, 0.0]),
            Err(Error::ZeroVector)
        ));
        assert!(matches!(
            normalize_embedding(vec![1.0, f64::NAN]),
            Err(Error::NonFinite)
        ));
        assert!(matches!(
            normalize_embedding(vec![f64::INFINITY, 1.0]),
            Err(Error::NonFinite)
        ));
    }

    #[test]
    fn serde_normalizes_on_the_way_in() {
        let e: Embedding = serde_json::from_str("[3.0, 4.0]").unwrap();
        assert!((e.as_slice()[1] - 0.8).abs() < 1e-15);
        assert!(serde_json::from_str::<Embedding>("[0.0, 0.0]").is_err());
    }

    proptest! {
        #[test]
        fn idempotent_bitwise(v in prop::collection::vec(-1e3f64..1e3, 2..256)) {
            prop_assume!(l2_norm(&v) > 1e-6);
            let once = normalize_embedding(v).unwrap();
            let twice = normalize_embedding(once.as_slice().to_vec()).unwrap();
            let a: Vec<u64> = once.as_slice().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u64> = twice.as_slice().iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert!((l2_norm(once.as_slice()) - 1.0).abs() < 1e-6);
        }

        #[test]
        fn direction_preserved(v in prop::collection::vec(-10f64..10.0, 2..32)) {
            let n = l2_norm(&v);
            prop_assume!(n > 1e-6);
            let e = normalize_embedding(v.clone()).unwrap();
            for (x, y) in e.as_slice().iter().zip(&v) {
                prop_assert!((x * n - y).abs() < 1e-9 * n.max(1.0));
            }
        }
    }
}
