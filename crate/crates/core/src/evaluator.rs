//! MOTS-style evaluation: sMOTSA, MOTSA, IDS, FP, FN per class.
//!
//! Hypotheses are matched to ground truth frame by frame with a
//! max-total-IoU one-to-one assignment, keeping only pairs above the IoU
//! threshold (strict). An identity switch is a matched ground-truth object
//! whose hypothesis id differs from the id at that ground-truth track's
//! most recent previously matched frame, so misses never hide a switch.

use crate::mask::MaskError;
use crate::tracker::{bbox_iou, hungarian_assign, BBox, TrackedDetection};
use ndarray::Array2;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use thiserror::Error;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("two objects share frame {frame}, track {track_id}")]
    DuplicateObject { frame: u64, track_id: u64 },
}

/// One ground-truth or hypothesis object in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedObject {
    pub frame: u64,
    pub track_id: u64,
    pub class: u32,
    pub bbox: BBox,
    pub mask: Option<crate::mask::RleMask>,
}

impl From<&TrackedDetection> for AnnotatedObject {
    fn from(r: &TrackedDetection) -> Self {
        AnnotatedObject {
            frame: r.frame,
            track_id: r.track_id,
            class: r.class,
            bbox: r.bbox,
            mask: r.mask.clone(),
        }
    }
}

/// Mask IoU when both objects carry masks, bbox IoU otherwise.
pub fn iou(a: &AnnotatedObject, b: &AnnotatedObject) -> Result<f64, EvalError> {
    match (&a.mask, &b.mask) {
        (Some(ma), Some(mb)) => Ok(ma.iou(mb)?),
        _ => Ok(bbox_iou(&a.bbox, &b.bbox)),
    }
}

/// One-to-one matching maximizing total IoU; pairs with IoU <= threshold
/// are never matched. Returns (gt index, hyp index) pairs.
pub fn match_frame(
    gt: &[&AnnotatedObject],
    hyp: &[&AnnotatedObject],
    threshold: f64,
) -> Result<Vec<(usize, usize)>, EvalError> {
    let mut scores = Array2::zeros((gt.len(), hyp.len()));
    let mut mask = Array2::from_elem((gt.len(), hyp.len()), false);
    for (i, g) in gt.iter().enumerate() {
        for (j, h) in hyp.iter().enumerate() {
            let v = iou(g, h)?;
            if v > threshold {
                scores[(i, j)] = v;
                mask[(i, j)] = true;
            }
        }
    }
    Ok(hungarian_assign(&scores, &mask))
}

/// Per-class accumulated counts and scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub class: u32,
    /// Ground-truth object count G.
    pub gt_count: u64,
    pub tp: u64,
    /// Sum of matched IoUs.
    pub soft_tp: f64,
    pub fp: u64,
    pub fn_count: u64,
    pub ids: u64,
    /// (TP - FP - IDS) / G.
    pub motsa: f64,
    /// (soft TP - FP - IDS) / G.
    pub smotsa: f64,
}

/// Metrics for every class that has ground truth; classes without ground
/// truth have undefined metrics and are absent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub classes: Vec<ClassMetrics>,
}

impl MetricsReport {
    pub fn class(&self, class: u32) -> Option<&ClassMetrics> {
        self.classes.iter().find(|c| c.class == class)
    }
}

fn check_unique(objects: &[AnnotatedObject]) -> Result<(), EvalError> {
    let mut seen = HashSet::new();
    for o in objects {
        if !seen.insert((o.frame, o.track_id)) {
            return Err(EvalError::DuplicateObject {
                frame: o.frame,
                track_id: o.track_id,
            });
        }
    }
    Ok(())
}

/// Scores a hypothesis sequence against ground truth.
pub fn compute_metrics(
    gt: &[AnnotatedObject],
    hyp: &[AnnotatedObject],
    threshold: f64,
) -> Result<MetricsReport, EvalError> {
    check_unique(gt)?;
    check_unique(hyp)?;

    let classes: BTreeSet<u32> = gt.iter().map(|o| o.class).collect();
    let mut report = MetricsReport::default();
    for class in classes {
        let gt_c: Vec<&AnnotatedObject> = gt.iter().filter(|o| o.class == class).collect();
        let hyp_c: Vec<&AnnotatedObject> = hyp.iter().filter(|o| o.class == class).collect();

        let mut frames: BTreeSet<u64> = gt_c.iter().map(|o| o.frame).collect();
        frames.extend(hyp_c.iter().map(|o| o.frame));

        let mut m = ClassMetrics {
            class,
            gt_count: gt_c.len() as u64,
            tp: 0,
            soft_tp: 0.0,
            fp: 0,
            fn_count: 0,
            ids: 0,
            motsa: 0.0,
            smotsa: 0.0,
        };
        // Ground-truth track id -> hypothesis id at its most recent match.
        let mut last_match: BTreeMap<u64, u64> = BTreeMap::new();
        for &frame in &frames {
            let gtf: Vec<&AnnotatedObject> =
                gt_c.iter().filter(|o| o.frame == frame).copied().collect();
            let hypf: Vec<&AnnotatedObject> =
                hyp_c.iter().filter(|o| o.frame == frame).copied().collect();
            let matches = match_frame(&gtf, &hypf, threshold)?;
            m.tp += matches.len() as u64;
            m.fp += (hypf.len() - matches.len()) as u64;
            m.fn_count += (gtf.len() - matches.len()) as u64;
            for &(gi, hj) in &matches {
                m.soft_tp += iou(gtf[gi], hypf[hj])?;
                let gt_id = gtf[gi].track_id;
                let hyp_id = hypf[hj].track_id;
                if let Some(&prev) = last_match.get(&gt_id) {
                    if prev != hyp_id {
                        m.ids += 1;
                    }
                }
                last_match.insert(gt_id, hyp_id);
            }
        }
        let g = m.gt_count as f64;
        m.motsa = (m.tp as f64 - m.fp as f64 - m.ids as f64) / g;
        m.smotsa = (m.soft_tp - m.fp as f64 - m.ids as f64) / g;
        report.classes.push(m);
    }
    Ok(report)
}
