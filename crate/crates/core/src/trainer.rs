//! Linear-projection embedding training with per-step hard mining.
//!
//! The model is a single D x d matrix applied to raw input features; all
//! normalization happens inside the losses, so their input gradients chain
//! directly through the projection. Plain gradient descent with optional
//! momentum.

use crate::evaluator::{match_frame, AnnotatedObject};
use crate::losses::{
    cmc_loss, cmt_loss, contrastive_loss, dot_triplet_loss, lmcl, softmax_ce, triplet_loss,
    ClassifierParams, CmcForm, LossError, LossKind, MarginScale,
};
use crate::hypersphere::FeatureVector;
use crate::mining::{mine_hard_pairs, mine_hard_triplets, DetectionBatch};
use crate::tracker::Detection;
use ndarray::{Array2, ArrayView1};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// One fine-tuning stage appended after the base schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainStage {
    pub margin_scale: MarginScale,
    pub batch_size: usize,
    pub epochs: usize,
}

/// Training hyperparameters. For the hinge and contrastive baselines the
/// margin half of `margin_scale` is the loss margin and the scale half is
/// unused.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub margin_scale: MarginScale,
    /// Zero is allowed and leaves the model at its random initialization.
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Output dimension d of the projection.
    pub embed_dim: usize,
    pub cmc_form: CmcForm,
    pub stages: Vec<TrainStage>,
}

impl TrainConfig {
    pub fn new(loss: LossKind) -> Self {
        Self {
            loss,
            margin_scale: MarginScale::car(),
            learning_rate: 0.05,
            momentum: 0.0,
            epochs: 10,
            batch_size: 16,
            seed: 0,
            embed_dim: 8,
            cmc_form: CmcForm::default(),
            stages: Vec::new(),
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::InvalidConfig(msg));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.epochs < 1 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch size must be >= 2, got {}", self.batch_size));
        }
        if self.embed_dim < 2 {
            return bad(format!("embed dim must be >= 2, got {}", self.embed_dim));
        }
        for (i, st) in self.stages.iter().enumerate() {
            if st.batch_size < 2 || st.epochs < 1 {
                return bad(format!("stage {i} needs batch size >= 2 and epochs >= 1"));
            }
        }
        Ok(())
    }
}

/// A learned D x d linear map from input features to embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionModel {
    weights: Array2<f64>,
}

impl ProjectionModel {
    pub fn new(weights: Array2<f64>) -> Result<Self, TrainError> {
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(TrainError::InvalidConfig("empty projection matrix".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(TrainError::InvalidConfig("non-finite projection weight".into()));
        }
        Ok(Self { weights })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn embed_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn project(&self, x: &FeatureVector) -> Result<FeatureVector, TrainError> {
        if x.dim() != self.input_dim() {
            return Err(TrainError::Dimension { expected: self.input_dim(), got: x.dim() });
        }
        let z = ArrayView1::from(x.values()).dot(&self.weights);
        Ok(FeatureVector::new(z.to_vec()).expect("finite projection of finite input"))
    }

    /// Projects every item, keeping identities and classes.
    pub fn project_batch(&self, data: &DetectionBatch) -> Result<DetectionBatch, TrainError> {
        let mut embeddings = Vec::with_capacity(data.len());
        for item in data.items() {
            embeddings.push(self.project(&item.embedding)?);
        }
        let identities = data.items().iter().map(|i| i.identity).collect();
        let classes = data.items().iter().map(|i| i.class).collect();
        DetectionBatch::from_parts(embeddings, identities, classes)
            .map_err(|e| TrainError::DegenerateBatch(format!("projection collapsed: {e}")))
    }
}

/// One training step as recorded in the loss history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub step: u64,
    pub loss: f64,
    /// Fraction of this step's hard triplets violating cos+ - m > cos-;
    /// zero when the step mined no triplets.
    pub violation_rate: f64,
}

/// Cosine statistics of a projected dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationStats {
    /// Mean cosine over all same-identity pairs.
    pub intra: f64,
    /// Mean cosine over all same-class, different-identity pairs.
    pub inter: f64,
    /// Fraction of hard triplets with cos+ - m <= cos-.
    pub violation_rate: f64,
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let scale = 1.0 / (rows as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| scale * rng.sample::<f64, _>(StandardNormal))
}

fn violation_rate(batch: &DetectionBatch, indices: &[(usize, usize, usize)], margin: f64) -> f64 {
    if indices.is_empty() {
        return 0.0;
    }
    let violated = indices
        .iter()
        .filter(|&&(a, p, n)| batch.cosine(a, p) - margin <= batch.cosine(a, n))
        .count();
    violated as f64 / indices.len() as f64
}

struct StepOutcome {
    loss: f64,
    violation: f64,
    /// d(loss)/d(projected embedding) per chunk position; None when the
    /// batch yields no training signal for the chosen loss.
    grad_z: Option<Vec<Vec<f64>>>,
    grad_w: Option<Array2<f64>>,
}

#[allow(clippy::too_many_arguments)]
fn loss_step(
    loss: LossKind,
    projected: &DetectionBatch,
    labels: &[usize],
    class_weights: Option<&Array2<f64>>,
    ms: &MarginScale,
    cmc_form: CmcForm,
) -> Result<StepOutcome, TrainError> {
    let n = projected.len();
    let d = projected.items()[0].embedding.dim();
    let mut grad_z = vec![vec![0.0; d]; n];
    let mined = mine_hard_triplets(projected);
    let violation = violation_rate(projected, &mined.indices, ms.margin());

    let scatter3 = |grad_z: &mut Vec<Vec<f64>>, idx: &[(usize, usize, usize)], grads: &[crate::losses::TripletGrads]| {
        for (&(a, p, ng), g) in idx.iter().zip(grads) {
            for (acc, v) in grad_z[a].iter_mut().zip(&g.anchor) {
                *acc += v;
            }
            for (acc, v) in grad_z[p].iter_mut().zip(&g.positive) {
                *acc += v;
            }
            for (acc, v) in grad_z[ng].iter_mut().zip(&g.negative) {
                *acc += v;
            }
        }
    };
    let scatter2 = |grad_z: &mut Vec<Vec<f64>>, idx: &[(usize, usize, bool)], grads: &[crate::losses::PairGrads]| {
        for (&(i, j, _), g) in idx.iter().zip(grads) {
            for (acc, v) in grad_z[i].iter_mut().zip(&g.left) {
                *acc += v;
            }
            for (acc, v) in grad_z[j].iter_mut().zip(&g.right) {
                *acc += v;
            }
        }
    };

    match loss {
        LossKind::Cmt | LossKind::Triplet | LossKind::DotTriplet => {
            if mined.triplets.is_empty() {
                return Ok(StepOutcome { loss: 0.0, violation, grad_z: None, grad_w: None });
            }
            let out = match loss {
                LossKind::Cmt => cmt_loss(&mined.triplets, ms)?,
                LossKind::Triplet => triplet_loss(&mined.triplets, ms.margin())?,
                LossKind::DotTriplet => dot_triplet_loss(&mined.triplets)?,
                _ => unreachable!(),
            };
            scatter3(&mut grad_z, &mined.indices, &out.grads);
            Ok(StepOutcome { loss: out.value, violation, grad_z: Some(grad_z), grad_w: None })
        }
        LossKind::Cmc | LossKind::Contrastive => {
            let pairs = mine_hard_pairs(projected);
            if pairs.pairs.is_empty() {
                return Ok(StepOutcome { loss: 0.0, violation, grad_z: None, grad_w: None });
            }
            let out = match loss {
                LossKind::Cmc => cmc_loss(&pairs.pairs, ms, cmc_form)?,
                LossKind::Contrastive => contrastive_loss(&pairs.pairs, ms.margin())?,
                _ => unreachable!(),
            };
            scatter2(&mut grad_z, &pairs.indices, &out.grads);
            Ok(StepOutcome { loss: out.value, violation, grad_z: Some(grad_z), grad_w: None })
        }
        LossKind::Softmax | LossKind::Lmcl => {
            let w = class_weights.expect("classifier losses carry weights");
            let params = ClassifierParams::new(w.clone(), None)?;
            let batch: Vec<(FeatureVector, usize)> = projected
                .items()
                .iter()
                .zip(labels)
                .map(|(item, &l)| (item.embedding.clone(), l))
                .collect();
            let out = match loss {
                LossKind::Softmax => softmax_ce(&batch, &params)?,
                LossKind::Lmcl => lmcl(&batch, &params, ms)?,
                _ => unreachable!(),
            };
            for (acc, g) in grad_z.iter_mut().zip(&out.grad_inputs) {
                for (a, v) in acc.iter_mut().zip(g) {
                    *a += v;
                }
            }
            Ok(StepOutcome {
                loss: out.value,
                violation,
                grad_z: Some(grad_z),
                grad_w: Some(out.grad_weights),
            })
        }
    }
}

/// Trains the projection on the chosen loss with hard mining per step.
/// Deterministic in `cfg.seed`. Batches that mine no training signal are
/// skipped; an entire epoch without signal is an error.
pub fn train(
    cfg: &TrainConfig,
    data: &DetectionBatch,
) -> Result<(ProjectionModel, Vec<HistoryRow>), TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::DegenerateBatch("empty dataset".into()));
    }
    if data.identity_count(2) < 2 {
        return Err(TrainError::DegenerateBatch(
            "need at least 2 identities with at least 2 members each".into(),
        ));
    }
    let input_dim = data.items()[0].embedding.dim();

    // Dense identity indices for the classifier losses.
    let mut id_index: BTreeMap<u64, usize> = BTreeMap::new();
    for item in data.items() {
        let next = id_index.len();
        id_index.entry(item.identity).or_insert(next);
    }
    let labels: Vec<usize> = data.items().iter().map(|i| id_index[&i.identity]).collect();
    let is_classifier = matches!(cfg.loss, LossKind::Softmax | LossKind::Lmcl);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut proj = gaussian_matrix(&mut rng, input_dim, cfg.embed_dim);
    let mut class_w = if is_classifier {
        Some(gaussian_matrix(&mut rng, cfg.embed_dim, id_index.len()))
    } else {
        None
    };
    let mut vel_proj: Array2<f64> = Array2::zeros((input_dim, cfg.embed_dim));
    let mut vel_w: Option<Array2<f64>> = class_w.as_ref().map(|w| Array2::zeros(w.dim()));

    let mut history = Vec::new();
    let mut step = 0u64;
    let base = TrainStage {
        margin_scale: cfg.margin_scale,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
    };
    for stage in std::iter::once(&base).chain(&cfg.stages) {
        for _ in 0..stage.epochs {
            let mut order: Vec<usize> = (0..data.len()).collect();
            order.shuffle(&mut rng);
            let mut epoch_had_signal = false;
            for chunk in order.chunks(stage.batch_size) {
                if chunk.len() < 2 {
                    continue;
                }
                // The shuffle decides batch composition only; items keep
                // dataset order inside a batch so identical compositions
                // yield bit-identical steps.
                let mut chunk = chunk.to_vec();
                chunk.sort_unstable();
                let embeddings: Vec<FeatureVector> = chunk
                    .iter()
                    .map(|&i| {
                        let z = ArrayView1::from(data.items()[i].embedding.values()).dot(&proj);
                        FeatureVector::new(z.to_vec()).map_err(|e| {
                            TrainError::DegenerateBatch(format!("non-finite projection: {e}"))
                        })
                    })
                    .collect::<Result<_, _>>()?;
                let identities = chunk.iter().map(|&i| data.items()[i].identity).collect();
                let classes = chunk.iter().map(|&i| data.items()[i].class).collect();
                let projected = DetectionBatch::from_parts(embeddings, identities, classes)
                    .map_err(|e| TrainError::DegenerateBatch(format!("projection collapsed: {e}")))?;
                let chunk_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();

                let outcome = loss_step(
                    cfg.loss,
                    &projected,
                    &chunk_labels,
                    class_w.as_ref(),
                    &stage.margin_scale,
                    cfg.cmc_form,
                )?;
                let Some(grad_z) = outcome.grad_z else {
                    continue;
                };
                epoch_had_signal = true;

                let mut grad_proj: Array2<f64> = Array2::zeros((input_dim, cfg.embed_dim));
                for (ci, &i) in chunk.iter().enumerate() {
                    let x = data.items()[i].embedding.values();
                    let gz = &grad_z[ci];
                    for (u, &xu) in x.iter().enumerate() {
                        if xu == 0.0 {
                            continue;
                        }
                        for (v, &g) in gz.iter().enumerate() {
                            grad_proj[(u, v)] += xu * g;
                        }
                    }
                }
                vel_proj = cfg.momentum * &vel_proj - cfg.learning_rate * &grad_proj;
                proj += &vel_proj;
                if let (Some(w), Some(vw), Some(gw)) =
                    (class_w.as_mut(), vel_w.as_mut(), outcome.grad_w)
                {
                    *vw = cfg.momentum * &*vw - cfg.learning_rate * &gw;
                    *w += &*vw;
                }

                history.push(HistoryRow {
                    step,
                    loss: outcome.loss,
                    violation_rate: outcome.violation,
                });
                step += 1;
            }
            if !epoch_had_signal {
                return Err(TrainError::DegenerateBatch(
                    "mining produced no triplets or pairs for an entire epoch".into(),
                ));
            }
        }
    }
    Ok((ProjectionModel::new(proj)?, history))
}

/// Measures cluster quality of the data under the model: mean intra and
/// inter identity cosines and the hard-triplet violation rate at `margin`.
pub fn evaluate_separation(
    model: &ProjectionModel,
    data: &DetectionBatch,
    margin: f64,
) -> Result<SeparationStats, TrainError> {
    let projected = model.project_batch(data)?;
    let items = projected.items();
    let mut intra = (0.0, 0usize);
    let mut inter = (0.0, 0usize);
    for i in 0..items.len() {
        for j in (i + 1)..items.len() {
            let cos = projected.cosine(i, j);
            if items[i].identity == items[j].identity {
                intra = (intra.0 + cos, intra.1 + 1);
            } else if items[i].class == items[j].class {
                inter = (inter.0 + cos, inter.1 + 1);
            }
        }
    }
    if intra.1 == 0 || inter.1 == 0 {
        return Err(TrainError::DegenerateBatch(
            "separation needs a same-identity pair and a same-class cross-identity pair".into(),
        ));
    }
    let mined = mine_hard_triplets(&projected);
    if mined.indices.is_empty() {
        return Err(TrainError::DegenerateBatch("no hard triplets to measure".into()));
    }
    Ok(SeparationStats {
        intra: intra.0 / intra.1 as f64,
        inter: inter.0 / inter.1 as f64,
        violation_rate: violation_rate(&projected, &mined.indices, margin),
    })
}

/// Labels detections with ground-truth identities by per-frame IoU
/// matching (strict > threshold), dropping unmatched detections. The
/// returned batch holds the detections' embeddings keyed by the matched
/// ground-truth track id.
pub fn label_detections(
    dets: &[Detection],
    gt: &[AnnotatedObject],
    iou_threshold: f64,
) -> Result<DetectionBatch, TrainError> {
    let mut frames: BTreeMap<u64, (Vec<&AnnotatedObject>, Vec<&Detection>)> = BTreeMap::new();
    for g in gt {
        frames.entry(g.frame).or_default().0.push(g);
    }
    for d in dets {
        frames.entry(d.frame).or_default().1.push(d);
    }
    let mut embeddings = Vec::new();
    let mut identities = Vec::new();
    let mut classes = Vec::new();
    for (gtf, detf) in frames.values() {
        let hyp: Vec<AnnotatedObject> = detf
            .iter()
            .map(|d| AnnotatedObject {
                frame: d.frame,
                track_id: d.det_id,
                class: d.class,
                bbox: d.bbox,
                mask: d.mask.clone(),
            })
            .collect();
        let hyp_refs: Vec<&AnnotatedObject> = hyp.iter().collect();
        let matches = match_frame(gtf, &hyp_refs, iou_threshold)
            .map_err(|e| TrainError::DegenerateBatch(format!("labeling failed: {e}")))?;
        for (gi, hj) in matches {
            embeddings.push(detf[hj].embedding.clone());
            identities.push(gtf[gi].track_id);
            classes.push(detf[hj].class);
        }
    }
    if embeddings.is_empty() {
        return Err(TrainError::DegenerateBatch("no detection matched ground truth".into()));
    }
    DetectionBatch::from_parts(embeddings, identities, classes)
        .map_err(|e| TrainError::DegenerateBatch(format!("labeled batch invalid: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Identity clusters on the sphere, one class, `members` per identity.
    fn clustered(ids: usize, members: usize, dim: usize, noise: f64, seed: u64) -> DetectionBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut embeddings = Vec::new();
        let mut identities = Vec::new();
        let mut classes = Vec::new();
        for id in 0..ids {
            let proto: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            for _ in 0..members {
                let v: Vec<f64> = proto
                    .iter()
                    .map(|&p| p + noise * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                embeddings.push(FeatureVector::new(v).unwrap());
                identities.push(id as u64);
                classes.push(1);
            }
        }
        DetectionBatch::from_parts(embeddings, identities, classes).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_model_and_history_constant() {
        let data = clustered(3, 4, 6, 0.3, 5);
        let mut cfg = TrainConfig::new(LossKind::Cmt);
        cfg.learning_rate = 0.0;
        cfg.batch_size = data.len();
        cfg.epochs = 4;
        cfg.seed = 9;
        let (model, history) = train(&cfg, &data).unwrap();
        assert_eq!(history.len(), 4);
        for row in &history[1..] {
            assert_eq!(row.loss, history[0].loss);
            assert_eq!(row.violation_rate, history[0].violation_rate);
        }
        // One epoch at learning rate zero returns the same (initial) model.
        let (init, _) = train(&TrainConfig { epochs: 1, ..cfg.clone() }, &data).unwrap();
        assert_eq!(model, init);
    }

    #[test]
    fn training_is_bit_deterministic_in_the_seed() {
        let data = clustered(4, 4, 8, 0.4, 2);
        let mut cfg = TrainConfig::new(LossKind::Cmt);
        cfg.learning_rate = 0.1;
        cfg.epochs = 3;
        cfg.batch_size = 8;
        cfg.seed = 42;
        let (m1, h1) = train(&cfg, &data).unwrap();
        let (m2, h2) = train(&cfg, &data).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(h1, h2);
        let (m3, _) = train(&TrainConfig { seed: 43, ..cfg }, &data).unwrap();
        assert_ne!(m1, m3);
    }

    #[test]
    fn first_step_never_increases_the_full_batch_loss() {
        for kind in LossKind::ALL {
            for seed in 0..10u64 {
                let data = clustered(3, 3, 6, 0.5, 100 + seed);
                let mut cfg = TrainConfig::new(kind);
                cfg.learning_rate = 1e-4;
                cfg.batch_size = data.len();
                cfg.epochs = 2;
                cfg.seed = seed;
                cfg.embed_dim = 4;
                let (_, history) = train(&cfg, &data).unwrap();
                assert!(
                    history[1].loss <= history[0].loss + 1e-9,
                    "{kind} seed {seed}: step raised loss {} -> {}",
                    history[0].loss,
                    history[1].loss
                );
            }
        }
    }

    #[test]
    fn degenerate_datasets_are_rejected() {
        // One identity only.
        let one = clustered(1, 4, 6, 0.2, 1);
        let cfg = TrainConfig::new(LossKind::Cmt);
        assert!(matches!(train(&cfg, &one), Err(TrainError::DegenerateBatch(_))));

        // Two identities in different classes: positives exist but no
        // same-class negative, so cmt mines nothing all epoch.
        let embeddings = vec![
            FeatureVector::new(vec![1.0, 0.0, 0.1]).unwrap(),
            FeatureVector::new(vec![1.0, 0.1, 0.0]).unwrap(),
            FeatureVector::new(vec![0.0, 1.0, 0.1]).unwrap(),
            FeatureVector::new(vec![0.1, 1.0, 0.0]).unwrap(),
        ];
        let split = DetectionBatch::from_parts(embeddings, vec![0, 0, 1, 1], vec![1, 1, 2, 2]).unwrap();
        assert!(matches!(train(&cfg, &split), Err(TrainError::DegenerateBatch(_))));
    }

    #[test]
    fn cmt_training_reduces_violation_and_widens_the_gap() {
        let data = clustered(8, 6, 12, 0.9, 3);
        let mut cfg = TrainConfig::new(LossKind::Cmt);
        cfg.learning_rate = 0.05;
        cfg.epochs = 60;
        cfg.batch_size = 16;
        cfg.embed_dim = 6;
        cfg.seed = 1;

        let (init, _) = train(&TrainConfig { learning_rate: 0.0, epochs: 1, ..cfg.clone() }, &data).unwrap();
        let before = evaluate_separation(&init, &data, 0.15).unwrap();
        let (model, history) = train(&cfg, &data).unwrap();
        let after = evaluate_separation(&model, &data, 0.15).unwrap();

        assert!(
            after.violation_rate < before.violation_rate,
            "violation did not drop: {} -> {}",
            before.violation_rate,
            after.violation_rate
        );
        assert!(
            after.intra - after.inter > before.intra - before.inter,
            "gap did not widen: {} -> {}",
            before.intra - before.inter,
            after.intra - after.inter
        );
        assert!(history.last().unwrap().loss < history[0].loss);
    }

    #[test]
    fn classifier_losses_descend() {
        for kind in [LossKind::Softmax, LossKind::Lmcl] {
            let data = clustered(4, 5, 8, 0.4, 7);
            let mut cfg = TrainConfig::new(kind);
            cfg.learning_rate = 0.1;
            cfg.epochs = 30;
            cfg.batch_size = data.len();
            cfg.embed_dim = 6;
            let (_, history) = train(&cfg, &data).unwrap();
            assert!(
                history.last().unwrap().loss < history[0].loss,
                "{kind}: {} -> {}",
                history[0].loss,
                history.last().unwrap().loss
            );
        }
    }

    #[test]
    fn stages_extend_the_schedule() {
        let data = clustered(3, 4, 6, 0.3, 5);
        let mut cfg = TrainConfig::new(LossKind::Cmt);
        cfg.learning_rate = 0.01;
        cfg.epochs = 2;
        cfg.batch_size = data.len();
        cfg.stages = vec![TrainStage {
            margin_scale: MarginScale::pedestrian(),
            batch_size: data.len(),
            epochs: 3,
        }];
        let (_, history) = train(&cfg, &data).unwrap();
        assert_eq!(history.len(), 5);
        assert_eq!(history.last().unwrap().step, 4);
    }

    #[test]
    fn perfect_clusters_have_unit_intra_cosine() {
        // Two identities pinned to orthogonal axes, identical members.
        let e = |v: Vec<f64>| FeatureVector::new(v).unwrap();
        let data = DetectionBatch::from_parts(
            vec![
                e(vec![2.0, 0.0, 0.0]),
                e(vec![1.0, 0.0, 0.0]),
                e(vec![0.0, 3.0, 0.0]),
                e(vec![0.0, 1.0, 0.0]),
            ],
            vec![0, 0, 1, 1],
            vec![1, 1, 1, 1],
        )
        .unwrap();
        let model = ProjectionModel::new(Array2::eye(3)).unwrap();
        let stats = evaluate_separation(&model, &data, 0.15).unwrap();
        assert_eq!(stats.intra, 1.0);
        assert_abs_diff_eq!(stats.inter, 0.0, epsilon = 1e-15);
        assert_eq!(stats.violation_rate, 0.0);
    }

    #[test]
    fn projection_checks_dimensions() {
        let model = ProjectionModel::new(Array2::eye(3)).unwrap();
        let x = FeatureVector::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(model.project(&x), Err(TrainError::Dimension { expected: 3, got: 2 }));
    }

    #[test]
    fn labeling_recovers_identities_from_ground_truth() {
        let scenario = crate::synth::generate(&crate::synth::ScenarioConfig {
            identities: 4,
            frames: 6,
            classes: 2,
            cluster_noise: 0.2,
            occlusion_prob: 0.2,
            max_occlusion_len: 2,
            seed: 12,
            ..Default::default()
        })
        .unwrap();
        let batch = label_detections(&scenario.detections, &scenario.ground_truth, 0.5).unwrap();
        // Detection boxes equal GT boxes, so every detection is labeled.
        assert_eq!(batch.len(), scenario.detections.len());
        for (item, (&label, det)) in batch
            .items()
            .iter()
            .zip(scenario.labels.iter().zip(&scenario.detections))
        {
            assert_eq!(item.identity, label);
            assert_eq!(item.embedding.values(), det.embedding.values());
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let data = clustered(3, 3, 6, 0.3, 5);
        let check = |f: fn(&mut TrainConfig)| {
            let mut c = TrainConfig::new(LossKind::Cmt);
            f(&mut c);
            assert!(matches!(train(&c, &data), Err(TrainError::InvalidConfig(_))));
        };
        check(|c| c.learning_rate = -0.1);
        check(|c| c.momentum = 1.0);
        check(|c| c.epochs = 0);
        check(|c| c.batch_size = 1);
        check(|c| c.embed_dim = 1);
        check(|c| {
            c.stages = vec![TrainStage {
                margin_scale: MarginScale::car(),
                batch_size: 1,
                epochs: 1,
            }]
        });
    }
}
