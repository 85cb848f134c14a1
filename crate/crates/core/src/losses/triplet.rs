//! Triplet-style losses: hinge on squared distances, softplus on raw dot
//! products, and softplus on scaled cosine margins.

use super::{axpy, cosine_back, normalize_with_norm, LossError, MarginScale, Triplet};
use crate::numeric::{sigmoid, softplus};

/// Gradients of the batch-mean loss for one triplet's raw inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletGrads {
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

impl TripletGrads {
    fn zeros(dim: usize) -> Self {
        Self {
            anchor: vec![0.0; dim],
            positive: vec![0.0; dim],
            negative: vec![0.0; dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletLossResult {
    /// Mean over the batch.
    pub value: f64,
    /// Unreduced per-triplet values, batch order.
    pub per_example: Vec<f64>,
    pub grads: Vec<TripletGrads>,
}

/// Hinge on squared Euclidean distances,
/// `max(0, ||a-p||^2 - ||a-n||^2 + m)`, on raw vectors.
///
/// The subgradient at the kink is taken as zero: a triplet sitting exactly
/// on the margin contributes no update.
pub fn triplet_loss(triplets: &[Triplet], margin: f64) -> Result<TripletLossResult, LossError> {
    if !margin.is_finite() || margin < 0.0 {
        return Err(LossError::InvalidMarginScale(format!(
            "triplet margin must be nonnegative, got {margin}"
        )));
    }
    if triplets.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let inv_n = 1.0 / triplets.len() as f64;
    let mut per_example = Vec::with_capacity(triplets.len());
    let mut grads = Vec::with_capacity(triplets.len());
    let mut total = 0.0;
    for t in triplets {
        let a = t.anchor.values();
        let p = t.positive.values();
        let n = t.negative.values();
        let d_ap: f64 = a.iter().zip(p).map(|(x, y)| (x - y) * (x - y)).sum();
        let d_an: f64 = a.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum();
        let arg = d_ap - d_an + margin;
        let mut g = TripletGrads::zeros(t.dim());
        let value = if arg > 0.0 {
            for i in 0..t.dim() {
                g.anchor[i] = 2.0 * (n[i] - p[i]) * inv_n;
                g.positive[i] = 2.0 * (p[i] - a[i]) * inv_n;
                g.negative[i] = 2.0 * (a[i] - n[i]) * inv_n;
            }
            arg
        } else {
            0.0
        };
        total += value;
        per_example.push(value);
        grads.push(g);
    }
    Ok(TripletLossResult {
        value: total * inv_n,
        per_example,
        grads,
    })
}

/// Smooth ranking loss on raw dot products, `softplus(a.n - a.p)`.
/// No margin, no scale, no normalization.
pub fn dot_triplet_loss(triplets: &[Triplet]) -> Result<TripletLossResult, LossError> {
    if triplets.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let inv_n = 1.0 / triplets.len() as f64;
    let mut per_example = Vec::with_capacity(triplets.len());
    let mut grads = Vec::with_capacity(triplets.len());
    let mut total = 0.0;
    for t in triplets {
        let a = t.anchor.values();
        let p = t.positive.values();
        let n = t.negative.values();
        let arg = t.anchor.dot(&t.negative)? - t.anchor.dot(&t.positive)?;
        let value = softplus(arg);
        let sig = sigmoid(arg) * inv_n;
        let mut g = TripletGrads::zeros(t.dim());
        for i in 0..t.dim() {
            g.anchor[i] = sig * (n[i] - p[i]);
            g.positive[i] = -sig * a[i];
            g.negative[i] = sig * a[i];
        }
        total += value;
        per_example.push(value);
        grads.push(g);
    }
    Ok(TripletLossResult {
        value: total * inv_n,
        per_example,
        grads,
    })
}

/// Cosine-margin-triplet loss,
/// `softplus(s * (cos(theta_an) - cos(theta_ap) + m))` on internally
/// normalized vectors. Gradients flow to the raw inputs through the
/// normalization Jacobian.
pub fn cmt_loss(triplets: &[Triplet], ms: &MarginScale) -> Result<TripletLossResult, LossError> {
    if triplets.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let (m, s) = (ms.margin(), ms.scale());
    let inv_n = 1.0 / triplets.len() as f64;
    let mut per_example = Vec::with_capacity(triplets.len());
    let mut grads = Vec::with_capacity(triplets.len());
    let mut total = 0.0;
    for t in triplets {
        let (ua, na) = normalize_with_norm(&t.anchor)?;
        let (up, np) = normalize_with_norm(&t.positive)?;
        let (un, nn) = normalize_with_norm(&t.negative)?;
        let cos_ap = ua.dot(&up);
        let cos_an = ua.dot(&un);
        let arg = s * (cos_an - cos_ap + m);
        let value = softplus(arg);
        let coeff = s * sigmoid(arg) * inv_n;

        // d(cos_an)/da - d(cos_ap)/da, each through its own Jacobian.
        let mut ga = vec![0.0; t.dim()];
        axpy(&mut ga, coeff, &cosine_back(&ua, &un, cos_an, na));
        axpy(&mut ga, -coeff, &cosine_back(&ua, &up, cos_ap, na));
        let mut gp = vec![0.0; t.dim()];
        axpy(&mut gp, -coeff, &cosine_back(&up, &ua, cos_ap, np));
        let mut gn = vec![0.0; t.dim()];
        axpy(&mut gn, coeff, &cosine_back(&un, &ua, cos_an, nn));

        total += value;
        per_example.push(value);
        grads.push(TripletGrads {
            anchor: ga,
            positive: gp,
            negative: gn,
        });
    }
    Ok(TripletLossResult {
        value: total * inv_n,
        per_example,
        grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypersphere::FeatureVector;
    use approx::assert_abs_diff_eq;

    fn fv(values: &[f64]) -> FeatureVector {
        FeatureVector::new(values.to_vec()).unwrap()
    }

    fn triplet(a: &[f64], p: &[f64], n: &[f64]) -> Triplet {
        Triplet::new(fv(a), fv(p), fv(n)).unwrap()
    }

    #[test]
    fn cmt_symmetric_is_ln_two() {
        // cos+ == cos- makes the argument s * m; with m = 0 this is
        // softplus(0) = ln 2 for every scale.
        let v = triplet(&[1.0, 0.0], &[0.0, 1.0], &[0.0, 1.0]);
        for s in [1.0, 8.0, 30.0] {
            let ms = MarginScale::new(0.0, s).unwrap();
            let out = cmt_loss(&[v.clone()], &ms).unwrap();
            assert_abs_diff_eq!(out.value, std::f64::consts::LN_2, epsilon = 1e-12);
        }
    }

    #[test]
    fn cmt_separated_triplet_matches_closed_form() {
        // cos+ = 1, cos- = -1, s = 8, m = 0.15: softplus(8 * (-2 + 0.15)).
        let t = triplet(&[2.0, 0.0], &[3.0, 0.0], &[-0.5, 0.0]);
        let ms = MarginScale::new(0.15, 8.0).unwrap();
        let out = cmt_loss(&[t], &ms).unwrap();
        let expected = (-14.8f64).exp().ln_1p();
        assert_abs_diff_eq!(out.value, expected, epsilon = 1e-12);
    }

    #[test]
    fn cmt_scale_invariance_of_value() {
        // Internal normalization makes the value invariant to input scale.
        let ms = MarginScale::new(0.3, 5.0).unwrap();
        let base = triplet(&[0.3, -1.2, 0.4], &[1.0, 0.2, -0.3], &[-0.5, 0.8, 0.9]);
        let scaled = triplet(
            &[0.3 * 7.0, -1.2 * 7.0, 0.4 * 7.0],
            &[1.0 * 0.01, 0.2 * 0.01, -0.3 * 0.01],
            &[-0.5 * 40.0, 0.8 * 40.0, 0.9 * 40.0],
        );
        let a = cmt_loss(&[base], &ms).unwrap();
        let b = cmt_loss(&[scaled], &ms).unwrap();
        assert_abs_diff_eq!(a.value, b.value, epsilon = 1e-12);
    }

    #[test]
    fn cmt_rejects_zero_norm() {
        let t = triplet(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]);
        let ms = MarginScale::new(0.1, 2.0).unwrap();
        assert_eq!(cmt_loss(&[t], &ms), Err(LossError::ZeroNormVector));
    }

    #[test]
    fn triplet_hinge_active_and_inactive() {
        // a=(0,0), p=(1,0), n=(0,2): d_ap=1, d_an=4; arg = m - 3.
        let t = triplet(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 2.0]);
        let inactive = triplet_loss(std::slice::from_ref(&t), 1.0).unwrap();
        assert_eq!(inactive.value, 0.0);
        assert!(inactive.grads[0].anchor.iter().all(|&g| g == 0.0));

        let active = triplet_loss(&[t], 3.5).unwrap();
        assert_abs_diff_eq!(active.value, 0.5, epsilon = 1e-12);
        // grad wrt n is 2 * (a - n) = (0, -4).
        assert_abs_diff_eq!(active.grads[0].negative[1], -4.0, epsilon = 1e-12);
    }

    #[test]
    fn triplet_margin_collapse_to_margin() {
        // p == n makes the distances equal; loss is exactly m.
        let t = triplet(&[1.0, 2.0], &[0.5, -0.5], &[0.5, -0.5]);
        let out = triplet_loss(&[t], 0.25).unwrap();
        assert_eq!(out.value, 0.25);
    }

    #[test]
    fn triplet_hinge_boundary_subgradient_is_zero() {
        // d_ap = d_an and m = 0 puts the argument exactly on the kink.
        let t = triplet(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]);
        let out = triplet_loss(&[t], 0.0).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.grads[0].positive.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn triplet_rejects_negative_margin() {
        let t = triplet(&[1.0], &[2.0], &[3.0]);
        assert!(matches!(
            triplet_loss(&[t], -0.1),
            Err(LossError::InvalidMarginScale(_))
        ));
    }

    #[test]
    fn dot_triplet_zero_anchor_is_ln_two() {
        let t = triplet(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]);
        let out = dot_triplet_loss(&[t]).unwrap();
        assert_abs_diff_eq!(out.value, std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn dot_triplet_matches_softplus_of_gap() {
        let t = triplet(&[1.0, 1.0], &[2.0, 0.0], &[0.0, 3.0]);
        // a.n - a.p = 3 - 2 = 1.
        let out = dot_triplet_loss(&[t]).unwrap();
        assert_abs_diff_eq!(out.value, 1.0f64.exp().ln_1p(), epsilon = 1e-12);
    }

    #[test]
    fn batch_mean_and_per_example_agree() {
        let ts = vec![
            triplet(&[1.0, 0.0], &[1.0, 0.1], &[0.0, 1.0]),
            triplet(&[0.0, 1.0], &[0.1, 1.0], &[1.0, 0.0]),
            triplet(&[1.0, 1.0], &[1.0, 0.9], &[-1.0, 1.0]),
        ];
        let ms = MarginScale::new(0.2, 4.0).unwrap();
        let out = cmt_loss(&ts, &ms).unwrap();
        let mean = out.per_example.iter().sum::<f64>() / 3.0;
        assert_abs_diff_eq!(out.value, mean, epsilon = 1e-12);
        assert_eq!(out.grads.len(), 3);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let ms = MarginScale::new(0.1, 2.0).unwrap();
        assert_eq!(cmt_loss(&[], &ms), Err(LossError::EmptyBatch));
        assert_eq!(triplet_loss(&[], 0.5), Err(LossError::EmptyBatch));
        assert_eq!(dot_triplet_loss(&[]), Err(LossError::EmptyBatch));
    }
}
