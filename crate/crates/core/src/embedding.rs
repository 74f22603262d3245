use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Tolerance on `|‖v‖ - 1|` for stored vectors.
pub const NORM_TOLERANCE: f64 = 1e-6;

/// An L2-normalized embedding, so cosine similarity is a plain dot product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Normalizes `values` to unit length.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(CoreError::Precondition("embedding has no dimensions".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Precondition("embedding has non-finite values".into()));
        }
        let norm = l2_norm(&values);
        if norm == 0.0 {
            return Err(CoreError::Precondition("cannot normalize a zero embedding".into()));
        }
        for v in &mut values {
            *v /= norm;
        }
        Ok(Self { values })
    }

    /// Wraps values that are already unit length, checking the norm.
    pub fn from_unit(values: Vec<f64>) -> Result<Self> {
        let v = Self { values };
        v.check_unit()?;
        Ok(v)
    }

    pub fn check_unit(&self) -> Result<()> {
        if self.values.is_empty() || self.values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Precondition("embedding is empty or non-finite".into()));
        }
        let norm = self.norm();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(CoreError::Precondition(alloc::format!(
                "embedding norm {norm} is not 1"
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    /// Cosine similarity with another unit vector.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        dot(&self.values, &other.values)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    libm::sqrt(dot(v, v))
}
