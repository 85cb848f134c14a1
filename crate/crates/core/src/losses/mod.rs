//! Metric-learning losses with hand-derived gradients.
//!
//! Every loss reports the batch mean, the unreduced per-example values, and
//! gradients of the mean with respect to the raw (pre-normalization) inputs.
//! Losses that compare directions normalize internally and propagate
//! gradients through the normalization Jacobian `(I - u u^T) / ||f||`, so a
//! trainer can attach them directly behind a projection layer.
//!
//! Exponential ratios are evaluated in softplus / log-sum-exp form; the
//! closed expressions overflow once scaled cosines get large.

mod classifier;
mod gradcheck;
mod pairwise;
mod triplet;

pub use classifier::{lmcl, softmax_ce, ClassifierLossResult, ClassifierParams};
pub use gradcheck::{
    grad_check, grad_check_batch, sample_check_batch, CheckBatch, GradCheckReport,
    GradCheckSettings,
};
pub use pairwise::{cmc_loss, contrastive_loss, PairGrads, PairLossResult};
pub use triplet::{cmt_loss, dot_triplet_loss, triplet_loss, TripletGrads, TripletLossResult};

use crate::hypersphere::{FeatureVector, HypersphereError, UnitVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("zero-norm vector cannot be placed on the hypersphere")]
    ZeroNormVector,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("empty batch has no mean loss")]
    EmptyBatch,
    #[error("invalid margin/scale: {0}")]
    InvalidMarginScale(String),
    #[error("{0} does not take a bias term")]
    BiasNotSupported(&'static str),
    #[error("check batch shape does not fit loss {0}")]
    BatchKindMismatch(&'static str),
}

impl From<HypersphereError> for LossError {
    fn from(e: HypersphereError) -> Self {
        match e {
            HypersphereError::ZeroNormVector => LossError::ZeroNormVector,
            HypersphereError::DimensionMismatch { left, right } => {
                LossError::DimensionMismatch { left, right }
            }
            HypersphereError::NonFiniteEntry { .. } => {
                LossError::InvalidMarginScale("non-finite input".into())
            }
        }
    }
}

/// Additive cosine margin `m` and hypersphere radius `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginScale {
    margin: f64,
    scale: f64,
}

impl MarginScale {
    /// Requires `s > 0`, `0 <= m < 2`; a cosine margin of 2 or more pushes
    /// `cos(theta) - m` below -1 for every input.
    pub fn new(margin: f64, scale: f64) -> Result<Self, LossError> {
        if !margin.is_finite() || !scale.is_finite() {
            return Err(LossError::InvalidMarginScale("must be finite".into()));
        }
        if scale <= 0.0 {
            return Err(LossError::InvalidMarginScale(format!(
                "scale must be positive, got {scale}"
            )));
        }
        if !(0.0..2.0).contains(&margin) {
            return Err(LossError::InvalidMarginScale(format!(
                "margin must be in [0, 2), got {margin}"
            )));
        }
        Ok(Self { margin, scale })
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Default margin and scale for the car class: m 0.15, s 8.
    pub fn car() -> Self {
        Self::new(0.15, 8.0).expect("car defaults valid")
    }

    /// Default margin and scale for the pedestrian class: m 0, s 1.
    pub fn pedestrian() -> Self {
        Self::new(0.0, 1.0).expect("pedestrian defaults valid")
    }
}

/// Anchor, same-identity positive, same-class different-identity negative.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub anchor: FeatureVector,
    pub positive: FeatureVector,
    pub negative: FeatureVector,
}

impl Triplet {
    pub fn new(
        anchor: FeatureVector,
        positive: FeatureVector,
        negative: FeatureVector,
    ) -> Result<Self, LossError> {
        check_dims(anchor.dim(), positive.dim())?;
        check_dims(anchor.dim(), negative.dim())?;
        Ok(Self {
            anchor,
            positive,
            negative,
        })
    }

    pub fn dim(&self) -> usize {
        self.anchor.dim()
    }
}

/// A pair of embeddings with the binary same-identity label `y_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub left: FeatureVector,
    pub right: FeatureVector,
    pub same_identity: bool,
}

impl LabeledPair {
    pub fn new(
        left: FeatureVector,
        right: FeatureVector,
        same_identity: bool,
    ) -> Result<Self, LossError> {
        check_dims(left.dim(), right.dim())?;
        Ok(Self {
            left,
            right,
            same_identity,
        })
    }

    pub fn dim(&self) -> usize {
        self.left.dim()
    }
}

/// Which algebraic form of the cosine-margin-contrastive loss to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CmcForm {
    /// Bounded negative-sigmoid form; value lies in [-2, 0].
    Direct,
    /// Two-class softmax reformulation; value is nonnegative.
    #[default]
    TwoClassSoftmax,
}

/// Loss selector shared by the gradient checker, trainer, and CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Softmax,
    Lmcl,
    Contrastive,
    Triplet,
    DotTriplet,
    Cmt,
    Cmc,
}

impl LossKind {
    pub const ALL: [LossKind; 7] = [
        LossKind::Softmax,
        LossKind::Lmcl,
        LossKind::Contrastive,
        LossKind::Triplet,
        LossKind::DotTriplet,
        LossKind::Cmt,
        LossKind::Cmc,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Softmax => "softmax",
            LossKind::Lmcl => "lmcl",
            LossKind::Contrastive => "contrastive",
            LossKind::Triplet => "triplet",
            LossKind::DotTriplet => "dot-triplet",
            LossKind::Cmt => "cmt",
            LossKind::Cmc => "cmc",
        }
    }

    pub fn parse(name: &str) -> Option<LossKind> {
        match name {
            "softmax" => Some(LossKind::Softmax),
            "lmcl" => Some(LossKind::Lmcl),
            "contrastive" => Some(LossKind::Contrastive),
            "triplet" => Some(LossKind::Triplet),
            "dot-triplet" | "dot_triplet" => Some(LossKind::DotTriplet),
            "cmt" => Some(LossKind::Cmt),
            "cmc" => Some(LossKind::Cmc),
            _ => None,
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub(crate) fn check_dims(left: usize, right: usize) -> Result<(), LossError> {
    if left != right {
        return Err(LossError::DimensionMismatch { left, right });
    }
    Ok(())
}

/// Normalizes and also returns the original norm, as both are needed to
/// push gradients back through the normalization.
pub(crate) fn normalize_with_norm(v: &FeatureVector) -> Result<(UnitVector, f64), LossError> {
    let n = v.norm();
    let unit = crate::hypersphere::l2_normalize(v)?;
    Ok((unit, n))
}

/// Gradient of `cos = u . other` with respect to the raw vector behind `u`:
/// `(other - cos * u) / norm`.
pub(crate) fn cosine_back(unit: &UnitVector, other: &UnitVector, cos: f64, norm: f64) -> Vec<f64> {
    unit.values()
        .iter()
        .zip(other.values())
        .map(|(&u, &o)| (o - cos * u) / norm)
        .collect()
}

pub(crate) fn axpy(acc: &mut [f64], coeff: f64, v: &[f64]) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += coeff * x;
    }
}
