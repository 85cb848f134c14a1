//! Central-difference validation of the analytical gradients.
//!
//! Each instance's coordinates are checked against a finite difference of
//! that instance's own contribution to the batch value. The contributions
//! are independent, so this is exact and keeps the difference well
//! conditioned even when other instances dominate the batch mean. Shared
//! classifier parameters are the exception: those are differenced through
//! the full batch value.

use super::{
    cmc_loss, cmt_loss, contrastive_loss, dot_triplet_loss, lmcl, softmax_ce, triplet_loss,
    ClassifierParams, CmcForm, LabeledPair, LossError, LossKind, MarginScale, Triplet,
};
use crate::hypersphere::FeatureVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckSettings {
    /// Central-difference step.
    pub eps: f64,
    /// Hinge instances within this distance of their kink are skipped, not
    /// failed: the two-sided difference straddles the non-smooth point.
    pub kink_tol: f64,
    pub triplet_margin: f64,
    pub contrastive_margin: f64,
    pub margin_scale: MarginScale,
    pub cmc_form: CmcForm,
    /// Class count for the classifier losses.
    pub classes: usize,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            kink_tol: 1e-3,
            triplet_margin: 0.25,
            contrastive_margin: 0.75,
            // Moderate scale keeps posteriors away from full saturation, so
            // the difference quotient resolves every coordinate.
            margin_scale: MarginScale::new(0.15, 4.0).expect("default margin/scale"),
            cmc_form: CmcForm::TwoClassSoftmax,
            classes: 4,
        }
    }
}

/// Inputs for one check run; shape follows the loss family.
#[derive(Debug, Clone)]
pub enum CheckBatch {
    Triplets(Vec<Triplet>),
    Pairs(Vec<LabeledPair>),
    Classifier {
        batch: Vec<(FeatureVector, usize)>,
        params: ClassifierParams,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub loss: LossKind,
    /// Max over checked coordinates of
    /// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
    pub max_rel_error: f64,
    pub coords_checked: usize,
    pub skipped_instances: usize,
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Draws a vector with direction uniform on the sphere and norm in
/// [0.7, 1.5], comfortably away from the zero-norm rejection region.
fn sample_vector(dim: usize, rng: &mut impl Rng) -> FeatureVector {
    loop {
        let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        let target = rng.gen_range(0.7..1.5);
        return FeatureVector::new(raw.into_iter().map(|v| v * target / norm).collect())
            .expect("finite sample");
    }
}

/// Samples a batch of the right shape for `kind`.
pub fn sample_check_batch(
    kind: LossKind,
    dim: usize,
    batch_size: usize,
    settings: &GradCheckSettings,
    rng: &mut impl Rng,
) -> CheckBatch {
    match kind {
        LossKind::Triplet | LossKind::DotTriplet | LossKind::Cmt => CheckBatch::Triplets(
            (0..batch_size)
                .map(|_| {
                    Triplet::new(
                        sample_vector(dim, rng),
                        sample_vector(dim, rng),
                        sample_vector(dim, rng),
                    )
                    .expect("sampled dims agree")
                })
                .collect(),
        ),
        LossKind::Contrastive | LossKind::Cmc => CheckBatch::Pairs(
            (0..batch_size)
                .map(|_| {
                    LabeledPair::new(
                        sample_vector(dim, rng),
                        sample_vector(dim, rng),
                        rng.gen_bool(0.5),
                    )
                    .expect("sampled dims agree")
                })
                .collect(),
        ),
        LossKind::Softmax | LossKind::Lmcl => {
            let classes = settings.classes.max(2);
            let batch = (0..batch_size)
                .map(|_| (sample_vector(dim, rng), rng.gen_range(0..classes)))
                .collect();
            let scale = 1.0 / (dim as f64).sqrt();
            let weights = ndarray::Array2::from_shape_fn((dim, classes), |_| {
                let v: f64 = StandardNormal.sample(rng);
                v * scale
            });
            let bias = match kind {
                LossKind::Softmax => Some(
                    (0..classes)
                        .map(|_| {
                            let v: f64 = StandardNormal.sample(rng);
                            v * 0.1
                        })
                        .collect(),
                ),
                _ => None,
            };
            CheckBatch::Classifier {
                batch,
                params: ClassifierParams::new(weights, bias).expect("sampled params valid"),
            }
        }
    }
}

/// Checks every coordinate of `flat` against a central difference of
/// `eval`, which maps one instance's flattened coordinates to its
/// contribution to the batch value.
fn check_instance(
    analytic: &[f64],
    coords: &[f64],
    eps: f64,
    eval: &mut dyn FnMut(&[f64]) -> Result<f64, LossError>,
) -> Result<(f64, usize), LossError> {
    let mut max_err: f64 = 0.0;
    let mut work = coords.to_vec();
    for (i, &a) in analytic.iter().enumerate() {
        let orig = work[i];
        work[i] = orig + eps;
        let hi = eval(&work)?;
        work[i] = orig - eps;
        let lo = eval(&work)?;
        work[i] = orig;
        max_err = max_err.max(rel_err(a, (hi - lo) / (2.0 * eps)));
    }
    Ok((max_err, analytic.len()))
}

fn flat_triplet(t: &Triplet) -> Vec<f64> {
    let mut flat = t.anchor.values().to_vec();
    flat.extend_from_slice(t.positive.values());
    flat.extend_from_slice(t.negative.values());
    flat
}

fn unflat_triplet(flat: &[f64], dim: usize) -> Triplet {
    Triplet::new(
        FeatureVector::new(flat[..dim].to_vec()).expect("finite"),
        FeatureVector::new(flat[dim..2 * dim].to_vec()).expect("finite"),
        FeatureVector::new(flat[2 * dim..].to_vec()).expect("finite"),
    )
    .expect("dims agree")
}

/// Runs the check on a prepared batch.
pub fn grad_check_batch(
    kind: LossKind,
    batch: &CheckBatch,
    settings: &GradCheckSettings,
) -> Result<GradCheckReport, LossError> {
    let eps = settings.eps;
    let mut max_err: f64 = 0.0;
    let mut coords = 0usize;
    let mut skipped = 0usize;

    match (kind, batch) {
        (LossKind::Triplet | LossKind::DotTriplet | LossKind::Cmt, CheckBatch::Triplets(ts)) => {
            let n = ts.len() as f64;
            let full = match kind {
                LossKind::Triplet => triplet_loss(ts, settings.triplet_margin)?,
                LossKind::DotTriplet => dot_triplet_loss(ts)?,
                LossKind::Cmt => cmt_loss(ts, &settings.margin_scale)?,
                _ => unreachable!(),
            };
            for (t, g) in ts.iter().zip(&full.grads) {
                if kind == LossKind::Triplet {
                    let d_ap = t
                        .anchor
                        .values()
                        .iter()
                        .zip(t.positive.values())
                        .map(|(a, p)| (a - p) * (a - p))
                        .sum::<f64>();
                    let d_an = t
                        .anchor
                        .values()
                        .iter()
                        .zip(t.negative.values())
                        .map(|(a, x)| (a - x) * (a - x))
                        .sum::<f64>();
                    if (d_ap - d_an + settings.triplet_margin).abs() < settings.kink_tol {
                        skipped += 1;
                        continue;
                    }
                }
                let dim = t.dim();
                let mut analytic = g.anchor.clone();
                analytic.extend_from_slice(&g.positive);
                analytic.extend_from_slice(&g.negative);
                let mut eval = |flat: &[f64]| -> Result<f64, LossError> {
                    let single = [unflat_triplet(flat, dim)];
                    let value = match kind {
                        LossKind::Triplet => triplet_loss(&single, settings.triplet_margin)?.value,
                        LossKind::DotTriplet => dot_triplet_loss(&single)?.value,
                        LossKind::Cmt => cmt_loss(&single, &settings.margin_scale)?.value,
                        _ => unreachable!(),
                    };
                    Ok(value / n)
                };
                let (err, checked) = check_instance(&analytic, &flat_triplet(t), eps, &mut eval)?;
                max_err = max_err.max(err);
                coords += checked;
            }
        }
        (LossKind::Contrastive | LossKind::Cmc, CheckBatch::Pairs(ps)) => {
            let n_pos = ps.iter().filter(|p| p.same_identity).count();
            let n_neg = ps.len() - n_pos;
            let full = match kind {
                LossKind::Contrastive => contrastive_loss(ps, settings.contrastive_margin)?,
                LossKind::Cmc => cmc_loss(ps, &settings.margin_scale, settings.cmc_form)?,
                _ => unreachable!(),
            };
            for (p, g) in ps.iter().zip(&full.grads) {
                if kind == LossKind::Contrastive && !p.same_identity {
                    let dist = p
                        .left
                        .values()
                        .iter()
                        .zip(p.right.values())
                        .map(|(l, r)| (l - r) * (l - r))
                        .sum::<f64>()
                        .sqrt();
                    if (settings.contrastive_margin - dist).abs() < settings.kink_tol
                        || dist < settings.kink_tol
                    {
                        skipped += 1;
                        continue;
                    }
                }
                // A singleton evaluation reports the pair's own term; its
                // weight in the batch value depends on the loss.
                let divisor = match kind {
                    LossKind::Contrastive => ps.len() as f64,
                    _ => {
                        if p.same_identity {
                            n_pos as f64
                        } else {
                            n_neg as f64
                        }
                    }
                };
                let dim = p.dim();
                let same = p.same_identity;
                let mut analytic = g.left.clone();
                analytic.extend_from_slice(&g.right);
                let mut flat = p.left.values().to_vec();
                flat.extend_from_slice(p.right.values());
                let mut eval = |flat: &[f64]| -> Result<f64, LossError> {
                    let single = [LabeledPair::new(
                        FeatureVector::new(flat[..dim].to_vec()).expect("finite"),
                        FeatureVector::new(flat[dim..].to_vec()).expect("finite"),
                        same,
                    )
                    .expect("dims agree")];
                    let value = match kind {
                        LossKind::Contrastive => {
                            contrastive_loss(&single, settings.contrastive_margin)?.value
                        }
                        LossKind::Cmc => {
                            cmc_loss(&single, &settings.margin_scale, settings.cmc_form)?.value
                        }
                        _ => unreachable!(),
                    };
                    Ok(value / divisor)
                };
                let (err, checked) = check_instance(&analytic, &flat, eps, &mut eval)?;
                max_err = max_err.max(err);
                coords += checked;
            }
        }
        (LossKind::Softmax | LossKind::Lmcl, CheckBatch::Classifier { batch, params }) => {
            let n = batch.len() as f64;
            let run = |b: &[(FeatureVector, usize)],
                       p: &ClassifierParams|
             -> Result<super::ClassifierLossResult, LossError> {
                match kind {
                    LossKind::Softmax => softmax_ce(b, p),
                    LossKind::Lmcl => lmcl(b, p, &settings.margin_scale),
                    _ => unreachable!(),
                }
            };
            let full = run(batch, params)?;
            for ((x, label), g) in batch.iter().zip(&full.grad_inputs) {
                let label = *label;
                let mut eval = |flat: &[f64]| -> Result<f64, LossError> {
                    let single = [(FeatureVector::new(flat.to_vec()).expect("finite"), label)];
                    Ok(run(&single, params)?.value / n)
                };
                let (err, checked) = check_instance(g, x.values(), eps, &mut eval)?;
                max_err = max_err.max(err);
                coords += checked;
            }
            // Weights and bias are shared, so difference the full batch.
            for k in 0..params.dim() {
                for j in 0..params.classes() {
                    let analytic = full.grad_weights[(k, j)];
                    let bump = |delta: f64| -> Result<f64, LossError> {
                        let mut w = params.weights().clone();
                        w[(k, j)] += delta;
                        let p = ClassifierParams::new(w, params.bias().map(|b| b.to_vec()))?;
                        Ok(run(batch, &p)?.value)
                    };
                    let numeric = (bump(eps)? - bump(-eps)?) / (2.0 * eps);
                    max_err = max_err.max(rel_err(analytic, numeric));
                    coords += 1;
                }
            }
            if let Some(gb) = &full.grad_bias {
                for (j, &analytic) in gb.iter().enumerate() {
                    let bump = |delta: f64| -> Result<f64, LossError> {
                        let mut b = params.bias().expect("grad_bias implies bias").to_vec();
                        b[j] += delta;
                        let p = ClassifierParams::new(params.weights().clone(), Some(b))?;
                        Ok(run(batch, &p)?.value)
                    };
                    let numeric = (bump(eps)? - bump(-eps)?) / (2.0 * eps);
                    max_err = max_err.max(rel_err(analytic, numeric));
                    coords += 1;
                }
            }
        }
        _ => return Err(LossError::BatchKindMismatch(kind.name())),
    }

    Ok(GradCheckReport {
        loss: kind,
        max_rel_error: max_err,
        coords_checked: coords,
        skipped_instances: skipped,
    })
}

/// Samples a batch deterministically from `seed` and checks it.
pub fn grad_check(
    kind: LossKind,
    dim: usize,
    batch_size: usize,
    settings: &GradCheckSettings,
    seed: u64,
) -> Result<GradCheckReport, LossError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = sample_check_batch(kind, dim, batch_size, settings, &mut rng);
    grad_check_batch(kind, &batch, settings)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-5;

    fn check(kind: LossKind, settings: &GradCheckSettings, seed: u64) -> GradCheckReport {
        grad_check(kind, 16, 32, settings, seed).unwrap()
    }

    #[test]
    fn all_losses_pass_default_check() {
        let settings = GradCheckSettings::default();
        for kind in LossKind::ALL {
            let report = check(kind, &settings, 7);
            assert!(
                report.max_rel_error < TOL,
                "{kind}: {} after {} coords",
                report.max_rel_error,
                report.coords_checked
            );
            assert!(report.coords_checked > 0);
        }
    }

    #[test]
    fn cmc_direct_form_passes() {
        let settings = GradCheckSettings {
            cmc_form: CmcForm::Direct,
            ..Default::default()
        };
        let report = check(LossKind::Cmc, &settings, 11);
        assert!(report.max_rel_error < TOL, "{}", report.max_rel_error);
    }

    #[test]
    fn cmt_passes_at_reported_operating_point() {
        let settings = GradCheckSettings {
            margin_scale: MarginScale::new(0.15, 8.0).unwrap(),
            ..Default::default()
        };
        let report = check(LossKind::Cmt, &settings, 3);
        assert!(report.max_rel_error < TOL, "{}", report.max_rel_error);
    }

    #[test]
    fn small_dims_pass() {
        let settings = GradCheckSettings::default();
        for kind in LossKind::ALL {
            let report = grad_check(kind, 8, 16, &settings, 5).unwrap();
            assert!(report.max_rel_error < TOL, "{kind}: {}", report.max_rel_error);
        }
    }

    #[test]
    fn near_kink_triplets_are_skipped_not_failed() {
        // p == n puts the hinge argument exactly at the margin; with
        // margin below kink_tol the instance must be skipped.
        let v = |vals: &[f64]| FeatureVector::new(vals.to_vec()).unwrap();
        let t = Triplet::new(
            v(&[1.0, 0.0]),
            v(&[0.5, 0.5]),
            v(&[0.5, 0.5]),
        )
        .unwrap();
        let settings = GradCheckSettings {
            triplet_margin: 5e-4,
            ..Default::default()
        };
        let report =
            grad_check_batch(LossKind::Triplet, &CheckBatch::Triplets(vec![t]), &settings)
                .unwrap();
        assert_eq!(report.skipped_instances, 1);
        assert_eq!(report.coords_checked, 0);
        assert_eq!(report.max_rel_error, 0.0);
    }

    #[test]
    fn mismatched_batch_kind_is_rejected() {
        let settings = GradCheckSettings::default();
        let err = grad_check_batch(LossKind::Cmt, &CheckBatch::Pairs(vec![]), &settings);
        assert!(matches!(err, Err(LossError::BatchKindMismatch(_))));
    }

    #[test]
    fn report_is_deterministic_for_a_seed() {
        let settings = GradCheckSettings::default();
        let a = check(LossKind::Cmt, &settings, 42);
        let b = check(LossKind::Cmt, &settings, 42);
        assert_eq!(a.max_rel_error.to_bits(), b.max_rel_error.to_bits());
        assert_eq!(a.coords_checked, b.coords_checked);
    }
}
