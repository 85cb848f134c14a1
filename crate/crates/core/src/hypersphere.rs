//! Vector geometry on the unit hypersphere.
//!
//! Embeddings enter the system as raw [`FeatureVector`]s; everything that
//! compares directions first maps them onto the sphere with
//! [`l2_normalize`]. [`UnitVector`] witnesses that the normalization has
//! happened, so cosine similarity is a plain dot product.

use thiserror::Error;

/// Norms at or below this are treated as zero and refused by normalization.
pub const EPS_NORM: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum HypersphereError {
    #[error("cannot normalize a vector with norm <= {EPS_NORM:e}")]
    ZeroNormVector,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("non-finite entry at index {index}")]
    NonFiniteEntry { index: usize },
}

/// A raw embedding vector; directions carry meaning only after normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    /// Wraps the values, rejecting NaN and infinities.
    pub fn new(values: Vec<f64>) -> Result<Self, HypersphereError> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(HypersphereError::NonFiniteEntry { index });
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &FeatureVector) -> Result<f64, HypersphereError> {
        check_dims(self.dim(), other.dim())?;
        Ok(dot(&self.0, &other.0))
    }
}

impl From<UnitVector> for FeatureVector {
    fn from(u: UnitVector) -> Self {
        FeatureVector(u.0)
    }
}

/// An l2-normalized embedding; `||values|| = 1` within 1e-9.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Unclamped dot product; equals the cosine of the angle between two
    /// unit vectors up to rounding.
    pub fn dot(&self, other: &UnitVector) -> f64 {
        dot(&self.0, &other.0)
    }
}

fn check_dims(left: usize, right: usize) -> Result<(), HypersphereError> {
    if left != right {
        return Err(HypersphereError::DimensionMismatch { left, right });
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Normalizes onto the unit sphere.
///
/// Fails with [`HypersphereError::ZeroNormVector`] when the norm is at or
/// below [`EPS_NORM`]; degenerate embeddings have no direction to report.
pub fn l2_normalize(v: &FeatureVector) -> Result<UnitVector, HypersphereError> {
    let n = v.norm();
    if n <= EPS_NORM {
        return Err(HypersphereError::ZeroNormVector);
    }
    Ok(UnitVector(v.0.iter().map(|x| x / n).collect()))
}

/// Dot product of two unit vectors, clamped to [-1, 1] so downstream margin
/// comparisons never see |cos| > 1 from rounding.
pub fn cosine_similarity(u: &UnitVector, w: &UnitVector) -> Result<f64, HypersphereError> {
    check_dims(u.dim(), w.dim())?;
    Ok(dot(&u.0, &w.0).clamp(-1.0, 1.0))
}

/// Concatenates two feature vectors, `a` first.
pub fn concat_embeddings(a: &FeatureVector, b: &FeatureVector) -> FeatureVector {
    let mut values = Vec::with_capacity(a.dim() + b.dim());
    values.extend_from_slice(&a.0);
    values.extend_from_slice(&b.0);
    FeatureVector(values)
}
