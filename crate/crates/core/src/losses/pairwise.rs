//! Pairwise losses over labeled pairs: Euclidean contrastive and the
//! cosine-margin-contrastive loss in both of its algebraic forms.

use super::{axpy, cosine_back, normalize_with_norm, CmcForm, LabeledPair, LossError, MarginScale};
use crate::numeric::{sigmoid, sigmoid_grad, softplus};

/// Gradients of the batch loss for one pair's raw inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrads {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairLossResult {
    pub value: f64,
    /// Unreduced per-pair terms, batch order. For the cosine-margin form the
    /// batch value averages positives and negatives separately, so it is not
    /// simply the mean of this vector.
    pub per_example: Vec<f64>,
    pub grads: Vec<PairGrads>,
}

/// Euclidean contrastive loss on raw vectors:
/// `y * D^2 + (1 - y) * max(0, m - D)^2` with `D = ||l - r||`.
///
/// A coincident negative pair (`D = 0`) sits at a non-differentiable point;
/// its gradient is taken as zero.
pub fn contrastive_loss(pairs: &[LabeledPair], margin: f64) -> Result<PairLossResult, LossError> {
    if !margin.is_finite() || margin < 0.0 {
        return Err(LossError::InvalidMarginScale(format!(
            "contrastive margin must be nonnegative, got {margin}"
        )));
    }
    if pairs.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let inv_n = 1.0 / pairs.len() as f64;
    let mut per_example = Vec::with_capacity(pairs.len());
    let mut grads = Vec::with_capacity(pairs.len());
    let mut total = 0.0;
    for pair in pairs {
        let diff: Vec<f64> = pair
            .left
            .values()
            .iter()
            .zip(pair.right.values())
            .map(|(&l, &r)| l - r)
            .collect();
        let d2: f64 = diff.iter().map(|d| d * d).sum();
        let dist = d2.sqrt();
        let mut gl = vec![0.0; pair.dim()];
        let mut gr = vec![0.0; pair.dim()];
        let value = if pair.same_identity {
            axpy(&mut gl, 2.0 * inv_n, &diff);
            axpy(&mut gr, -2.0 * inv_n, &diff);
            d2
        } else {
            let gap = margin - dist;
            if gap > 0.0 && dist > 0.0 {
                let coeff = -2.0 * gap / dist * inv_n;
                axpy(&mut gl, coeff, &diff);
                axpy(&mut gr, -coeff, &diff);
            }
            if gap > 0.0 {
                gap * gap
            } else {
                0.0
            }
        };
        total += value;
        per_example.push(value);
        grads.push(PairGrads {
            left: gl,
            right: gr,
        });
    }
    Ok(PairLossResult {
        value: total * inv_n,
        per_example,
        grads,
    })
}

/// Cosine-margin-contrastive loss on internally normalized vectors.
///
/// Positives and negatives are averaged as separate groups and the two
/// means are summed; an absent group contributes zero. `Direct` scores a
/// pair with signed sigmoids and lies in [-2, 0]; `TwoClassSoftmax` wraps
/// the two-class posterior gap in softplus and is nonnegative.
pub fn cmc_loss(
    pairs: &[LabeledPair],
    ms: &MarginScale,
    form: CmcForm,
) -> Result<PairLossResult, LossError> {
    if pairs.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let (m, s) = (ms.margin(), ms.scale());
    let n_pos = pairs.iter().filter(|p| p.same_identity).count();
    let n_neg = pairs.len() - n_pos;
    let mut per_example = Vec::with_capacity(pairs.len());
    let mut grads = Vec::with_capacity(pairs.len());
    let mut pos_sum = 0.0;
    let mut neg_sum = 0.0;
    for pair in pairs {
        let (ul, nl) = normalize_with_norm(&pair.left)?;
        let (ur, nr) = normalize_with_norm(&pair.right)?;
        let cos = ul.dot(&ur);
        // Per-pair term and its derivative with respect to the cosine.
        let (value, dcos) = match form {
            CmcForm::Direct => {
                let u = s * (cos - m);
                if pair.same_identity {
                    (-sigmoid(u), -s * sigmoid_grad(u))
                } else {
                    (sigmoid(u) - 1.0, s * sigmoid_grad(u))
                }
            }
            CmcForm::TwoClassSoftmax => {
                let p_raw = sigmoid(s * cos);
                let p_margin = sigmoid(s * (cos - m));
                let dp_raw = s * sigmoid_grad(s * cos);
                let dp_margin = s * sigmoid_grad(s * (cos - m));
                if pair.same_identity {
                    let arg = (1.0 - p_raw) - p_margin;
                    (softplus(arg), sigmoid(arg) * (-dp_raw - dp_margin))
                } else {
                    let arg = p_raw - (1.0 - p_margin);
                    (softplus(arg), sigmoid(arg) * (dp_raw + dp_margin))
                }
            }
        };
        let group_scale = if pair.same_identity {
            pos_sum += value;
            1.0 / n_pos as f64
        } else {
            neg_sum += value;
            1.0 / n_neg as f64
        };
        let coeff = dcos * group_scale;
        let mut gl = vec![0.0; pair.dim()];
        axpy(&mut gl, coeff, &cosine_back(&ul, &ur, cos, nl));
        let mut gr = vec![0.0; pair.dim()];
        axpy(&mut gr, coeff, &cosine_back(&ur, &ul, cos, nr));
        per_example.push(value);
        grads.push(PairGrads {
            left: gl,
            right: gr,
        });
    }
    let mut value = 0.0;
    if n_pos > 0 {
        value += pos_sum / n_pos as f64;
    }
    if n_neg > 0 {
        value += neg_sum / n_neg as f64;
    }
    Ok(PairLossResult {
        value,
        per_example,
        grads,
    })
}
