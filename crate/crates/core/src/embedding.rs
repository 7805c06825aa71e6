//! Dense vectors in the shared audio–text space and the two numeric
//! primitives the rest of the engine is built on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fixed-dimension real vector produced by an audio–text matcher.
///
/// Stored unnormalized; [`cosine_similarity`] normalizes on the fly so
/// fixture files keep exactly what the exporter wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("embedding"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding"));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Elementwise sum; both sides must share a dimension.
    pub fn add(&self, other: &Embedding) -> Result<Embedding> {
        check_dims(self, other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Embedding::new(values)
    }

    /// Rescale to unit length.
    pub fn normalized(&self) -> Result<Embedding> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(Error::DegenerateVector("cannot normalize a zero vector"));
        }
        Embedding::new(self.values.iter().map(|v| v / norm).collect())
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Embedding::new(values)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.values
    }
}

fn check_dims(x: &Embedding, y: &Embedding) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::Dimension {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    Ok(())
}

/// `x·y / (‖x‖‖y‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(x: &Embedding, y: &Embedding) -> Result<f64> {
    check_dims(x, y)?;
    let nx = x.norm();
    let ny = y.norm();
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::DegenerateVector("cosine similarity of a zero vector"));
    }
    let dot: f64 = x.values.iter().zip(&y.values).map(|(a, b)| a * b).sum();
    Ok((dot / (nx * ny)).clamp(-1.0, 1.0))
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("softmax"));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax input"));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}
