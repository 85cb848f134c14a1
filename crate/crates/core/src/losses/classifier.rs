//! Classification losses over a linear class-weight matrix: plain softmax
//! cross-entropy and its large-margin-cosine variant.

use super::{LossError, MarginScale};
use crate::hypersphere::FeatureVector;
use crate::numeric::{log_sum_exp, softmax};
use ndarray::Array2;

/// Class weights, one column per class, with an optional bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    weights: Array2<f64>,
    bias: Option<Vec<f64>>,
}

impl ClassifierParams {
    /// `weights` is `d x n` (feature dim by class count); `bias`, when
    /// present, has one entry per class.
    pub fn new(weights: Array2<f64>, bias: Option<Vec<f64>>) -> Result<Self, LossError> {
        if weights.nrows() == 0 || weights.ncols() < 2 {
            return Err(LossError::InvalidMarginScale(format!(
                "classifier needs d >= 1 and n >= 2 classes, got {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(LossError::InvalidMarginScale(
                "non-finite classifier weight".into(),
            ));
        }
        if let Some(b) = &bias {
            if b.len() != weights.ncols() {
                return Err(LossError::DimensionMismatch {
                    left: b.len(),
                    right: weights.ncols(),
                });
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(LossError::InvalidMarginScale("non-finite bias".into()));
            }
        }
        Ok(Self { weights, bias })
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn classes(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierLossResult {
    pub value: f64,
    pub per_example: Vec<f64>,
    /// Gradient of the mean loss with respect to each input, batch order.
    pub grad_inputs: Vec<Vec<f64>>,
    pub grad_weights: Array2<f64>,
    /// Present exactly when the params carry a bias.
    pub grad_bias: Option<Vec<f64>>,
}

fn check_batch(
    batch: &[(FeatureVector, usize)],
    params: &ClassifierParams,
) -> Result<(), LossError> {
    if batch.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    for (x, label) in batch {
        super::check_dims(x.dim(), params.dim())?;
        if *label >= params.classes() {
            return Err(LossError::LabelOutOfRange {
                label: *label,
                classes: params.classes(),
            });
        }
    }
    Ok(())
}

/// Softmax cross-entropy with logits `w_j . x + b_j`. The bias sits inside
/// the exponent alongside the dot product.
pub fn softmax_ce(
    batch: &[(FeatureVector, usize)],
    params: &ClassifierParams,
) -> Result<ClassifierLossResult, LossError> {
    check_batch(batch, params)?;
    let (d, n) = (params.dim(), params.classes());
    let inv_n = 1.0 / batch.len() as f64;
    let mut per_example = Vec::with_capacity(batch.len());
    let mut grad_inputs = Vec::with_capacity(batch.len());
    let mut grad_weights = Array2::zeros((d, n));
    let mut grad_bias = params.bias().map(|_| vec![0.0; n]);
    let mut total = 0.0;

    for (x, label) in batch {
        let xv = x.values();
        let mut logits: Vec<f64> = (0..n)
            .map(|j| params.weights().column(j).iter().zip(xv).map(|(w, x)| w * x).sum())
            .collect();
        if let Some(b) = params.bias() {
            for (z, bj) in logits.iter_mut().zip(b) {
                *z += bj;
            }
        }
        let value = log_sum_exp(&logits) - logits[*label];
        let mut g = softmax(&logits);
        g[*label] -= 1.0;

        let mut gx = vec![0.0; d];
        for (j, &gj) in g.iter().enumerate() {
            let coeff = gj * inv_n;
            for (k, w) in params.weights().column(j).iter().enumerate() {
                gx[k] += coeff * w;
            }
            for (k, &xk) in xv.iter().enumerate() {
                grad_weights[(k, j)] += coeff * xk;
            }
            if let Some(gb) = &mut grad_bias {
                gb[j] += coeff;
            }
        }
        total += value;
        per_example.push(value);
        grad_inputs.push(gx);
    }
    Ok(ClassifierLossResult {
        value: total * inv_n,
        per_example,
        grad_inputs,
        grad_weights,
        grad_bias,
    })
}

/// Large-margin-cosine loss: logits `s * cos(theta_j)` with the label
/// logit lowered to `s * (cos(theta_y) - m)`. Weight columns and inputs are
/// normalized internally; no bias term exists in this formulation.
pub fn lmcl(
    batch: &[(FeatureVector, usize)],
    params: &ClassifierParams,
    ms: &MarginScale,
) -> Result<ClassifierLossResult, LossError> {
    if params.bias().is_some() {
        return Err(LossError::BiasNotSupported("lmcl"));
    }
    check_batch(batch, params)?;
    let (d, n) = (params.dim(), params.classes());
    let (m, s) = (ms.margin(), ms.scale());
    let inv_n = 1.0 / batch.len() as f64;

    let mut w_norms = Vec::with_capacity(n);
    let mut w_unit = Array2::zeros((d, n));
    for j in 0..n {
        let col = params.weights().column(j);
        let norm = col.iter().map(|w| w * w).sum::<f64>().sqrt();
        if norm <= crate::hypersphere::EPS_NORM {
            return Err(LossError::ZeroNormVector);
        }
        for (k, &w) in col.iter().enumerate() {
            w_unit[(k, j)] = w / norm;
        }
        w_norms.push(norm);
    }

    let mut per_example = Vec::with_capacity(batch.len());
    let mut grad_inputs = Vec::with_capacity(batch.len());
    let mut grad_weights = Array2::zeros((d, n));
    let mut total = 0.0;

    for (x, label) in batch {
        let (ux, xnorm) = super::normalize_with_norm(x)?;
        let uxv = ux.values();
        let cos: Vec<f64> = (0..n)
            .map(|j| w_unit.column(j).iter().zip(uxv).map(|(w, x)| w * x).sum())
            .collect();
        let logits: Vec<f64> = cos
            .iter()
            .enumerate()
            .map(|(j, &c)| if j == *label { s * (c - m) } else { s * c })
            .collect();
        let value = log_sum_exp(&logits) - logits[*label];
        let mut g = softmax(&logits);
        g[*label] -= 1.0;

        let mut gx = vec![0.0; d];
        for (j, &gj) in g.iter().enumerate() {
            // dL/dcos_j, then back through both normalizations.
            let dcos = s * gj * inv_n;
            for k in 0..d {
                gx[k] += dcos * (w_unit[(k, j)] - cos[j] * uxv[k]) / xnorm;
                grad_weights[(k, j)] += dcos * (uxv[k] - cos[j] * w_unit[(k, j)]) / w_norms[j];
            }
        }
        total += value;
        per_example.push(value);
        grad_inputs.push(gx);
    }
    Ok(ClassifierLossResult {
        value: total * inv_n,
        per_example,
        grad_inputs,
        grad_bias: None,
        grad_weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn fv(values: &[f64]) -> FeatureVector {
        FeatureVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn softmax_uniform_logits_is_ln_n() {
        // Zero weights and bias give uniform posteriors for any input.
        let params = ClassifierParams::new(Array2::zeros((3, 2)), Some(vec![0.0, 0.0])).unwrap();
        let batch = vec![(fv(&[0.3, -1.0, 2.0]), 1)];
        let out = softmax_ce(&batch, &params).unwrap();
        assert_abs_diff_eq!(out.value, std::f64::consts::LN_2, epsilon = 1e-12);

        let params4 = ClassifierParams::new(Array2::zeros((2, 4)), None).unwrap();
        let out4 = softmax_ce(&[(fv(&[1.0, 1.0]), 3)], &params4).unwrap();
        assert_abs_diff_eq!(out4.value, 4.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn softmax_confident_example_matches_closed_form() {
        // Logits (10, -10) with label 0: ln(1 + e^-20).
        let params = ClassifierParams::new(array![[10.0, -10.0]], None).unwrap();
        let out = softmax_ce(&[(fv(&[1.0]), 0)], &params).unwrap();
        assert_abs_diff_eq!(out.value, (-20.0f64).exp().ln_1p(), epsilon = 1e-12);
    }

    #[test]
    fn softmax_bias_sits_inside_exponent() {
        // W = 0 but biases (2, 0): posteriors follow the bias alone.
        let params = ClassifierParams::new(Array2::zeros((1, 2)), Some(vec![2.0, 0.0])).unwrap();
        let out = softmax_ce(&[(fv(&[5.0]), 0)], &params).unwrap();
        assert_abs_diff_eq!(out.value, (-2.0f64).exp().ln_1p(), epsilon = 1e-12);
        // Bias gradient entries sum to zero (softmax minus one-hot).
        let gb = out.grad_bias.unwrap();
        assert_abs_diff_eq!(gb.iter().sum::<f64>(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lmcl_aligned_example_matches_closed_form() {
        // cos to the label column is 1, to the other -1; s=8, m=0.35:
        // logits (5.2, -8), loss ln(1 + e^-13.2).
        let params = ClassifierParams::new(array![[2.0, -3.0], [0.0, 0.0]], None).unwrap();
        let ms = MarginScale::new(0.35, 8.0).unwrap();
        let out = lmcl(&[(fv(&[0.5, 0.0]), 0)], &params, &ms).unwrap();
        assert_abs_diff_eq!(out.value, (-13.2f64).exp().ln_1p(), epsilon = 1e-12);
    }

    #[test]
    fn lmcl_zero_margin_equals_softmax_on_normalized_inputs() {
        // With m = 0, lmcl is softmax cross-entropy over s-scaled cosines.
        let w = array![[0.6, -0.2, 0.1], [0.8, 0.9, -0.4], [0.1, 0.3, 1.2]];
        let ms = MarginScale::new(0.0, 8.0).unwrap();
        let batch = vec![(fv(&[0.3, -0.9, 0.5]), 2), (fv(&[1.5, 0.2, 0.1]), 0)];

        let params = ClassifierParams::new(w.clone(), None).unwrap();
        let a = lmcl(&batch, &params, &ms).unwrap();

        // Reference: normalize weight columns and inputs by hand, scale by s.
        let mut wn = w.clone();
        for j in 0..3 {
            let norm = wn.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            wn.column_mut(j).iter_mut().for_each(|v| *v = *v * 8.0 / norm);
        }
        let ref_params = ClassifierParams::new(wn, None).unwrap();
        let norm_batch: Vec<(FeatureVector, usize)> = batch
            .iter()
            .map(|(x, y)| {
                let n = x.norm();
                (fv(&x.values().iter().map(|v| v / n).collect::<Vec<_>>()), *y)
            })
            .collect();
        let b = softmax_ce(&norm_batch, &ref_params).unwrap();
        assert_abs_diff_eq!(a.value, b.value, epsilon = 1e-12);
    }

    #[test]
    fn lmcl_rejects_bias_and_zero_columns() {
        let with_bias =
            ClassifierParams::new(array![[1.0, 0.0], [0.0, 1.0]], Some(vec![0.0, 0.0])).unwrap();
        let ms = MarginScale::new(0.1, 4.0).unwrap();
        assert_eq!(
            lmcl(&[(fv(&[1.0, 0.0]), 0)], &with_bias, &ms),
            Err(LossError::BiasNotSupported("lmcl"))
        );

        let zero_col = ClassifierParams::new(array![[1.0, 0.0], [0.0, 0.0]], None).unwrap();
        assert_eq!(
            lmcl(&[(fv(&[1.0, 0.0]), 0)], &zero_col, &ms),
            Err(LossError::ZeroNormVector)
        );
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let params = ClassifierParams::new(Array2::zeros((2, 2)), None).unwrap();
        assert_eq!(
            softmax_ce(&[(fv(&[1.0, 0.0]), 2)], &params),
            Err(LossError::LabelOutOfRange {
                label: 2,
                classes: 2
            })
        );
    }

    #[test]
    fn bias_length_must_match_classes() {
        assert!(matches!(
            ClassifierParams::new(Array2::zeros((2, 3)), Some(vec![0.0, 0.0])),
            Err(LossError::DimensionMismatch { left: 2, right: 3 })
        ));
    }
}
