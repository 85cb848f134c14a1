//! Synthetic tracking scenarios and brute-force association oracles.
//!
//! Scenarios place identity clusters on the unit sphere and move boxes
//! along linear trajectories with multiplicative scale drift. Occlusion
//! deletes detections; ground truth persists through occlusion. The
//! oracles re-derive the association contract by direct enumeration so
//! tracker bugs cannot hide behind shared code.

use crate::evaluator::AnnotatedObject;
use crate::hypersphere::{cosine_similarity, l2_normalize, FeatureVector, UnitVector};
use crate::tracker::{AssocConfig, BBox, Detection, Track, TrackedDetection, TrackerError, TrackingResult};
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("oracle bound exceeded: {objects} objects in a frame across {frames} frames (max 4 x 6)")]
    InstanceTooLarge { objects: usize, frames: usize },
    #[error(transparent)]
    Tracker(#[from] TrackerError),
}

/// Knobs for one generated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub identities: usize,
    pub frames: u64,
    /// Class count; identity i gets class (i mod classes) + 1.
    pub classes: u32,
    pub embedding_dim: usize,
    /// Std dev of the gaussian perturbation around each identity prototype.
    pub cluster_noise: f64,
    /// Per-frame probability that a visible object starts an occlusion.
    pub occlusion_prob: f64,
    /// Occlusion window length is uniform in 1..=max_occlusion_len frames.
    pub max_occlusion_len: u64,
    /// Per-frame multiplicative bbox size factor range, 0 < lo <= hi.
    pub scale_drift: (f64, f64),
    /// Detection confidences drawn uniformly from this range within [0, 1].
    pub confidence_range: (f64, f64),
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            identities: 20,
            frames: 60,
            classes: 2,
            embedding_dim: 16,
            cluster_noise: 0.15,
            occlusion_prob: 0.15,
            max_occlusion_len: 4,
            scale_drift: (0.99, 1.01),
            confidence_range: (0.5, 1.0),
            seed: 7,
        }
    }
}

impl ScenarioConfig {
    fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InvalidConfig(msg));
        if self.identities < 2 {
            return bad(format!("need at least 2 identities, got {}", self.identities));
        }
        if self.frames < 2 {
            return bad(format!("need at least 2 frames, got {}", self.frames));
        }
        if self.classes < 1 {
            return bad("need at least 1 class".into());
        }
        if self.embedding_dim < 2 {
            return bad(format!("embedding dim must be >= 2, got {}", self.embedding_dim));
        }
        if !(self.cluster_noise >= 0.0 && self.cluster_noise.is_finite()) {
            return bad(format!("cluster noise must be finite and >= 0, got {}", self.cluster_noise));
        }
        if !(0.0..=1.0).contains(&self.occlusion_prob) {
            return bad(format!("occlusion probability must lie in [0, 1], got {}", self.occlusion_prob));
        }
        if self.occlusion_prob > 0.0 && self.max_occlusion_len < 1 {
            return bad("max occlusion length must be >= 1 when occlusion is on".into());
        }
        let (lo, hi) = self.scale_drift;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("scale drift range must satisfy 0 < lo <= hi, got ({lo}, {hi})"));
        }
        let (clo, chi) = self.confidence_range;
        if !(0.0 <= clo && clo <= chi && chi <= 1.0) {
            return bad(format!("confidence range must be ordered within [0, 1], got ({clo}, {chi})"));
        }
        Ok(())
    }
}

/// A generated scenario: ground truth, the detection stream the tracker
/// sees, and the true identity of each detection (index-aligned with
/// `detections`) for supervised training.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub ground_truth: Vec<AnnotatedObject>,
    pub detections: Vec<Detection>,
    pub labels: Vec<u64>,
}

struct Trajectory {
    prototype: UnitVector,
    class: u32,
    /// Per-frame bbox.
    boxes: Vec<BBox>,
    /// False inside occlusion windows.
    visible: Vec<bool>,
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> UnitVector {
    loop {
        let raw: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(u) = FeatureVector::new(raw).and_then(|f| l2_normalize(&f)) {
            return u;
        }
    }
}

/// Generates a scenario. Deterministic in `cfg.seed`; identical configs
/// yield bit-identical output. With zero cluster noise every detection
/// embedding is exactly its identity prototype.
pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_frames = cfg.frames as usize;

    let mut trajectories = Vec::with_capacity(cfg.identities);
    for identity in 0..cfg.identities {
        let prototype = random_unit(&mut rng, cfg.embedding_dim);
        let class = (identity as u32 % cfg.classes) + 1;
        let start = (rng.gen_range(200.0..=1800.0), rng.gen_range(200.0..=1800.0));
        // Speed capped at 8 px/frame per axis so a re-link after a gap of
        // up to 10 frames stays inside the default 150 px distance gate.
        let vel = (rng.gen_range(-8.0..=8.0), rng.gen_range(-8.0..=8.0));
        let base = (rng.gen_range(20.0..=60.0), rng.gen_range(20.0..=60.0));

        let mut boxes = Vec::with_capacity(n_frames);
        let (mut w, mut h) = base;
        for f in 0..n_frames {
            if f > 0 {
                let factor = rng.gen_range(cfg.scale_drift.0..=cfg.scale_drift.1);
                w *= factor;
                h *= factor;
            }
            let cx = start.0 + vel.0 * f as f64;
            let cy = start.1 + vel.1 * f as f64;
            boxes.push(BBox::new(cx, cy, w, h).expect("drift keeps extents positive"));
        }

        let mut visible = vec![true; n_frames];
        let mut occluded_until = 0usize;
        for f in 0..n_frames {
            if f < occluded_until {
                visible[f] = false;
                continue;
            }
            if cfg.occlusion_prob > 0.0 && rng.gen::<f64>() < cfg.occlusion_prob {
                let len = rng.gen_range(1..=cfg.max_occlusion_len) as usize;
                visible[f] = false;
                occluded_until = f + len;
            }
        }
        trajectories.push(Trajectory { prototype, class, boxes, visible });
    }

    let mut ground_truth = Vec::new();
    let mut detections = Vec::new();
    let mut labels = Vec::new();
    let mut next_det_id = 0u64;
    for f in 0..n_frames {
        for (identity, traj) in trajectories.iter().enumerate() {
            ground_truth.push(AnnotatedObject {
                frame: f as u64,
                track_id: identity as u64,
                class: traj.class,
                bbox: traj.boxes[f],
                mask: None,
            });
            if !traj.visible[f] {
                continue;
            }
            let embedding = if cfg.cluster_noise == 0.0 {
                FeatureVector::new(traj.prototype.values().to_vec()).expect("unit vector is finite")
            } else {
                loop {
                    let perturbed: Vec<f64> = traj
                        .prototype
                        .values()
                        .iter()
                        .map(|&v| v + cfg.cluster_noise * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    let raw = FeatureVector::new(perturbed).expect("finite perturbation");
                    if let Ok(u) = l2_normalize(&raw) {
                        break FeatureVector::new(u.values().to_vec()).expect("unit vector is finite");
                    }
                }
            };
            let confidence = rng.gen_range(cfg.confidence_range.0..=cfg.confidence_range.1);
            detections.push(
                Detection::new(
                    f as u64,
                    next_det_id,
                    traj.class,
                    confidence,
                    traj.boxes[f],
                    None,
                    embedding,
                )
                .expect("generated detection is valid"),
            );
            labels.push(identity as u64);
            next_det_id += 1;
        }
    }
    Ok(Scenario { ground_truth, detections, labels })
}

/// Best total and one argmax over all partial matchings of unmasked,
/// positive-score cells. Exponential; meant for small test matrices.
pub fn brute_force_assignment(
    scores: &Array2<f64>,
    mask: &Array2<bool>,
) -> (Vec<(usize, usize)>, f64) {
    assert_eq!(scores.dim(), mask.dim(), "score/mask shapes differ");
    let (rows, cols) = scores.dim();
    let mut best_total = 0.0f64;
    let mut best: Vec<(usize, usize)> = Vec::new();
    let mut col_used = vec![false; cols];
    let mut current: Vec<(usize, usize)> = Vec::new();

    fn recurse(
        row: usize,
        rows: usize,
        cols: usize,
        scores: &Array2<f64>,
        mask: &Array2<bool>,
        col_used: &mut [bool],
        current: &mut Vec<(usize, usize)>,
        acc: f64,
        best_total: &mut f64,
        best: &mut Vec<(usize, usize)>,
    ) {
        if row == rows {
            if acc > *best_total {
                *best_total = acc;
                *best = current.clone();
            }
            return;
        }
        recurse(row + 1, rows, cols, scores, mask, col_used, current, acc, best_total, best);
        for j in 0..cols {
            if col_used[j] || !mask[(row, j)] || scores[(row, j)] <= 0.0 {
                continue;
            }
            col_used[j] = true;
            current.push((row, j));
            recurse(
                row + 1,
                rows,
                cols,
                scores,
                mask,
                col_used,
                current,
                acc + scores[(row, j)],
                best_total,
                best,
            );
            current.pop();
            col_used[j] = false;
        }
    }

    recurse(0, rows, cols, scores, mask, &mut col_used, &mut current, 0.0, &mut best_total, &mut best);
    best.sort_unstable();
    (best, best_total)
}

/// Per-frame, per-class oracle record: what the greedy rule picked and the
/// best achievable total for the same instance (same live-track state).
#[derive(Debug, Clone, PartialEq)]
pub struct OracleFrame {
    pub frame: u64,
    pub class: u32,
    /// (track id, det id) pairs the greedy rule selects.
    pub greedy_pairs: Vec<(u64, u64)>,
    pub greedy_total: f64,
    /// Maximum total similarity over every gate-feasible partial matching.
    pub best_total: f64,
}

/// Greedy oracle output plus per-instance totals.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub greedy: TrackingResult,
    pub instances: Vec<OracleFrame>,
}

fn oracle_gate(track: &Track, det: &Detection, unit: &UnitVector, now: u64, cfg: &AssocConfig) -> Option<f64> {
    if track.class != det.class || track.last_frame >= now {
        return None;
    }
    if now - track.last_frame > cfg.alpha {
        return None;
    }
    let dx = det.bbox.cx - track.last_center.0;
    let dy = det.bbox.cy - track.last_center.1;
    if (dx * dx + dy * dy).sqrt() >= cfg.gamma {
        return None;
    }
    let sim = cosine_similarity(unit, &track.last_embedding).ok()?;
    if sim > cfg.delta {
        Some(sim)
    } else {
        None
    }
}

/// Replays the greedy association contract by direct enumeration: a flat
/// candidate list sorted by similarity (ties to lower track id, then lower
/// det id) consumed pair by pair, one config for every class. For each
/// (frame, class) instance it also reports the exhaustive max-total
/// matching for comparison against the Hungarian matcher.
///
/// Bounded to 4 objects per frame and 6 frames.
pub fn oracle_associate(dets: &[Detection], cfg: &AssocConfig) -> Result<OracleReport, SynthError> {
    let mut by_frame: BTreeMap<u64, Vec<&Detection>> = BTreeMap::new();
    for d in dets {
        by_frame.entry(d.frame).or_default().push(d);
    }
    let max_objects = by_frame.values().map(Vec::len).max().unwrap_or(0);
    if by_frame.len() > 6 || max_objects > 4 {
        return Err(SynthError::InstanceTooLarge {
            objects: max_objects,
            frames: by_frame.len(),
        });
    }

    let mut tracks: Vec<Track> = Vec::new();
    let mut records: Vec<TrackedDetection> = Vec::new();
    let mut dropped: Vec<(u64, u64)> = Vec::new();
    let mut instances = Vec::new();

    for (&frame, frame_dets) in &by_frame {
        let classes: BTreeSet<u32> = frame_dets.iter().map(|d| d.class).collect();
        for class in classes {
            let mut kept: Vec<(&Detection, UnitVector)> = Vec::new();
            let mut seen = BTreeSet::new();
            let mut cut: Vec<u64> = Vec::new();
            for d in frame_dets.iter().filter(|d| d.class == class) {
                if !seen.insert(d.det_id) {
                    return Err(TrackerError::DuplicateDetectionId { frame, det_id: d.det_id }.into());
                }
                if d.confidence > cfg.beta {
                    let unit = l2_normalize(&d.embedding).map_err(|_| {
                        TrackerError::ZeroNormEmbedding { frame, det_id: d.det_id }
                    })?;
                    kept.push((d, unit));
                } else {
                    cut.push(d.det_id);
                }
            }
            kept.sort_by_key(|(d, _)| d.det_id);
            cut.sort_unstable();

            let class_track_ids: Vec<u64> = tracks
                .iter()
                .filter(|t| t.class == class)
                .map(|t| t.track_id)
                .collect();

            // Every gate-feasible candidate pair, then the greedy sweep.
            let mut candidates: Vec<(f64, u64, u64)> = Vec::new();
            for &tid in &class_track_ids {
                let t = tracks.iter().find(|t| t.track_id == tid).expect("id listed above");
                for (d, unit) in &kept {
                    if let Some(sim) = oracle_gate(t, d, unit, frame, cfg) {
                        candidates.push((sim, tid, d.det_id));
                    }
                }
            }
            candidates.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .expect("finite similarity")
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            let mut used_tracks = BTreeSet::new();
            let mut used_dets = BTreeSet::new();
            let mut greedy_pairs: Vec<(u64, u64)> = Vec::new();
            let mut greedy_total = 0.0;
            for &(sim, tid, did) in &candidates {
                if used_tracks.contains(&tid) || used_dets.contains(&did) {
                    continue;
                }
                used_tracks.insert(tid);
                used_dets.insert(did);
                greedy_pairs.push((tid, did));
                greedy_total += sim;
            }
            greedy_pairs.sort_unstable();

            // Exhaustive max-total over partial matchings of the same
            // instance: each detection is matched to an unused feasible
            // track or left unmatched.
            let feasible: Vec<Vec<Option<f64>>> = class_track_ids
                .iter()
                .map(|&tid| {
                    let t = tracks.iter().find(|t| t.track_id == tid).expect("id listed above");
                    kept.iter().map(|(d, u)| oracle_gate(t, d, u, frame, cfg)).collect()
                })
                .collect();
            let best_total = best_partial_total(&feasible, kept.len());
            instances.push(OracleFrame {
                frame,
                class,
                greedy_pairs: greedy_pairs.clone(),
                greedy_total,
                best_total,
            });

            for &(tid, did) in &greedy_pairs {
                let (d, unit) = kept
                    .iter()
                    .find(|(d, _)| d.det_id == did)
                    .expect("greedy pairs reference kept detections");
                let t = tracks
                    .iter_mut()
                    .find(|t| t.track_id == tid)
                    .expect("greedy pairs reference live tracks");
                t.history.push((frame, did));
                t.last_frame = frame;
                t.last_center = (d.bbox.cx, d.bbox.cy);
                t.last_embedding = match cfg.ema {
                    Some(lambda) => {
                        let blended: Vec<f64> = t
                            .last_embedding
                            .values()
                            .iter()
                            .zip(unit.values())
                            .map(|(&old, &new)| lambda * old + (1.0 - lambda) * new)
                            .collect();
                        match FeatureVector::new(blended).and_then(|f| l2_normalize(&f)) {
                            Ok(u) => u,
                            Err(_) => unit.clone(),
                        }
                    }
                    None => unit.clone(),
                };
                records.push(TrackedDetection {
                    frame,
                    det_id: did,
                    class,
                    track_id: tid,
                    bbox: d.bbox,
                    mask: d.mask.clone(),
                });
            }
            for (d, unit) in &kept {
                if used_dets.contains(&d.det_id) {
                    continue;
                }
                let track_id = tracks.len() as u64;
                tracks.push(Track {
                    track_id,
                    class,
                    history: vec![(frame, d.det_id)],
                    last_frame: frame,
                    last_embedding: unit.clone(),
                    last_center: (d.bbox.cx, d.bbox.cy),
                });
                records.push(TrackedDetection {
                    frame,
                    det_id: d.det_id,
                    class,
                    track_id,
                    bbox: d.bbox,
                    mask: d.mask.clone(),
                });
            }
            dropped.extend(cut.into_iter().map(|did| (frame, did)));
        }
    }

    Ok(OracleReport {
        greedy: TrackingResult { records, tracks, dropped },
        instances,
    })
}

fn best_partial_total(feasible: &[Vec<Option<f64>>], n_dets: usize) -> f64 {
    fn recurse(j: usize, n_dets: usize, feasible: &[Vec<Option<f64>>], used: &mut [bool], acc: f64) -> f64 {
        if j == n_dets {
            return acc;
        }
        let mut best = recurse(j + 1, n_dets, feasible, used, acc);
        for t in 0..feasible.len() {
            if used[t] {
                continue;
            }
            if let Some(sim) = feasible[t][j] {
                used[t] = true;
                best = best.max(recurse(j + 1, n_dets, feasible, used, acc + sim));
                used[t] = false;
            }
        }
        best
    }
    let mut used = vec![false; feasible.len()];
    recurse(0, n_dets, feasible, &mut used, 0.0)
}
