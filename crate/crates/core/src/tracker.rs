//! Online tracking-by-detection with gated similarity matching.
//!
//! Association runs per frame and per class: low-confidence detections are
//! dropped, the remaining (track, detection) pairs are gated on temporal
//! gap, center distance, and embedding cosine, and the gated pairs are
//! matched greedily (default) or by the Hungarian algorithm. Unmatched
//! surviving detections start new tracks.

use crate::hypersphere::{cosine_similarity, l2_normalize, FeatureVector, UnitVector};
use crate::mask::RleMask;
use ndarray::Array2;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrackerError {
    #[error("duplicate detection id {det_id} in frame {frame}")]
    DuplicateDetectionId { frame: u64, det_id: u64 },
    #[error("detection {det_id} carries frame {got}, expected {expected}")]
    FrameMismatch { det_id: u64, expected: u64, got: u64 },
    #[error("zero-norm embedding on detection {det_id} in frame {frame}")]
    ZeroNormEmbedding { frame: u64, det_id: u64 },
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
}

/// Axis-aligned box as center plus extent, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, TrackerError> {
        if ![cx, cy, w, h].iter().all(|v| v.is_finite()) {
            return Err(TrackerError::InvalidConfig("non-finite bbox".into()));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(TrackerError::InvalidConfig(format!(
                "bbox extent must be positive, got {w}x{h}"
            )));
        }
        Ok(Self { cx, cy, w, h })
    }

    pub fn center_distance(&self, other: &BBox) -> f64 {
        ((self.cx - other.cx).powi(2) + (self.cy - other.cy).powi(2)).sqrt()
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// Axis-aligned intersection over union. Clamped to [0, 1]: rounding in the
/// corner arithmetic can push the overlap of identical boxes past the area.
pub fn bbox_iou(a: &BBox, b: &BBox) -> f64 {
    let ix = ((a.cx + a.w / 2.0).min(b.cx + b.w / 2.0)
        - (a.cx - a.w / 2.0).max(b.cx - b.w / 2.0))
    .max(0.0);
    let iy = ((a.cy + a.h / 2.0).min(b.cy + b.h / 2.0)
        - (a.cy - a.h / 2.0).max(b.cy - b.h / 2.0))
    .max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).min(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame: u64,
    pub det_id: u64,
    pub class: u32,
    pub confidence: f64,
    pub bbox: BBox,
    pub mask: Option<RleMask>,
    pub embedding: FeatureVector,
}

impl Detection {
    pub fn new(
        frame: u64,
        det_id: u64,
        class: u32,
        confidence: f64,
        bbox: BBox,
        mask: Option<RleMask>,
        embedding: FeatureVector,
    ) -> Result<Self, TrackerError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(TrackerError::InvalidConfig(format!(
                "confidence must lie in [0, 1], got {confidence}"
            )));
        }
        Ok(Self {
            frame,
            det_id,
            class,
            confidence,
            bbox,
            mask,
            embedding,
        })
    }
}

/// A live trajectory. The representative embedding is the most recent
/// matched detection's (optionally blended, see [`AssocConfig::with_ema`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u64,
    pub class: u32,
    /// (frame, det id) pairs, frames strictly increasing.
    pub history: Vec<(u64, u64)>,
    pub last_frame: u64,
    pub last_embedding: UnitVector,
    pub last_center: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Matcher {
    Greedy,
    Hungarian,
}

impl Matcher {
    pub fn name(&self) -> &'static str {
        match self {
            Matcher::Greedy => "greedy",
            Matcher::Hungarian => "hungarian",
        }
    }

    pub fn parse(name: &str) -> Option<Matcher> {
        match name {
            "greedy" => Some(Matcher::Greedy),
            "hungarian" => Some(Matcher::Hungarian),
            _ => None,
        }
    }
}

impl std::fmt::Display for Matcher {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Gates and matcher choice for one class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssocConfig {
    /// Temporal window: a track may re-match up to `alpha` frames after its
    /// last detection.
    pub alpha: u64,
    /// Confidence threshold; detections are kept iff confidence > beta.
    pub beta: f64,
    /// Center-distance gate in pixels, strict <.
    pub gamma: f64,
    /// Cosine-similarity gate, strict >.
    pub delta: f64,
    pub matcher: Matcher,
    /// Blend weight on the previous track embedding; None keeps only the
    /// latest detection's direction.
    pub ema: Option<f64>,
}

impl AssocConfig {
    pub fn new(
        alpha: u64,
        beta: f64,
        gamma: f64,
        delta: f64,
        matcher: Matcher,
    ) -> Result<Self, TrackerError> {
        if alpha < 1 {
            return Err(TrackerError::InvalidConfig("alpha must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(TrackerError::InvalidConfig(format!(
                "beta must lie in [0, 1], got {beta}"
            )));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(TrackerError::InvalidConfig(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        if !(-1.0..=1.0).contains(&delta) {
            return Err(TrackerError::InvalidConfig(format!(
                "delta must lie in [-1, 1], got {delta}"
            )));
        }
        Ok(Self {
            alpha,
            beta,
            gamma,
            delta,
            matcher,
            ema: None,
        })
    }

    pub fn with_ema(mut self, lambda: f64) -> Result<Self, TrackerError> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(TrackerError::InvalidConfig(format!(
                "ema weight must lie in [0, 1), got {lambda}"
            )));
        }
        self.ema = Some(lambda);
        Ok(self)
    }

    /// Default car gates: alpha 10, beta 0.32, gamma 150, delta 0.3.
    pub fn car(matcher: Matcher) -> Self {
        Self::new(10, 0.32, 150.0, 0.3, matcher).expect("car defaults valid")
    }

    /// Default pedestrian gates: alpha 6, beta 0.345, gamma 150, delta 0.3.
    pub fn pedestrian(matcher: Matcher) -> Self {
        Self::new(6, 0.345, 150.0, 0.3, matcher).expect("pedestrian defaults valid")
    }
}

/// Class id conventions used by the default gates.
pub const CLASS_CAR: u32 = 1;
pub const CLASS_PEDESTRIAN: u32 = 2;

/// Per-class association configs with a fallback for unlisted classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassConfigs {
    default: AssocConfig,
    per_class: BTreeMap<u32, AssocConfig>,
}

impl ClassConfigs {
    pub fn uniform(cfg: AssocConfig) -> Self {
        Self {
            default: cfg,
            per_class: BTreeMap::new(),
        }
    }

    /// Baked-in per-class gates: car and pedestrian presets, car gates as
    /// the fallback for other classes.
    pub fn default_gates(matcher: Matcher) -> Self {
        let mut per_class = BTreeMap::new();
        per_class.insert(CLASS_CAR, AssocConfig::car(matcher));
        per_class.insert(CLASS_PEDESTRIAN, AssocConfig::pedestrian(matcher));
        Self {
            default: AssocConfig::car(matcher),
            per_class,
        }
    }

    pub fn insert(&mut self, class: u32, cfg: AssocConfig) {
        self.per_class.insert(class, cfg);
    }

    pub fn for_class(&self, class: u32) -> &AssocConfig {
        self.per_class.get(&class).unwrap_or(&self.default)
    }
}

fn gate_with_unit(
    det: &Detection,
    unit: &UnitVector,
    track: &Track,
    now: u64,
    cfg: &AssocConfig,
) -> bool {
    if det.class != track.class || track.last_frame >= now {
        return false;
    }
    if now - track.last_frame > cfg.alpha {
        return false;
    }
    let dist = ((det.bbox.cx - track.last_center.0).powi(2)
        + (det.bbox.cy - track.last_center.1).powi(2))
    .sqrt();
    if dist >= cfg.gamma {
        return false;
    }
    match cosine_similarity(unit, &track.last_embedding) {
        Ok(sim) => sim > cfg.delta,
        Err(_) => false,
    }
}

/// True iff the detection may link to the track: same class, frame gap
/// within alpha, center distance under gamma, cosine above delta. The
/// confidence cut is not part of the gate; it is applied before matching.
pub fn gate(det: &Detection, track: &Track, now: u64, cfg: &AssocConfig) -> bool {
    match l2_normalize(&det.embedding) {
        Ok(unit) => gate_with_unit(det, &unit, track, now, cfg),
        Err(_) => false,
    }
}

/// Maximum-total-score one-to-one assignment over unmasked cells.
///
/// The optimum is taken over partial matchings: a cell with nonpositive
/// score never improves the total, so such cells are never reported and
/// rows/columns may stay unmatched. Returns (row, col) pairs in row order.
pub fn hungarian_assign(scores: &Array2<f64>, mask: &Array2<bool>) -> Vec<(usize, usize)> {
    assert_eq!(scores.dim(), mask.dim(), "score/mask shapes differ");
    let (rows, cols) = scores.dim();
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let n = rows.max(cols);
    // Square min-cost problem: admissible cells cost -score, everything
    // else (masked, nonpositive, padding) costs 0, same as staying
    // unmatched.
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols && mask[(i, j)] && scores[(i, j)] > 0.0 {
            -scores[(i, j)]
        } else {
            0.0
        }
    };

    // Potentials-based Hungarian algorithm, O(n^3); p[j] is the row
    // matched to column j, 1-indexed with 0 as the virtual root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out = Vec::new();
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= rows && j <= cols {
            let (r, c) = (i - 1, j - 1);
            if mask[(r, c)] && scores[(r, c)] > 0.0 {
                out.push((r, c));
            }
        }
    }
    out.sort_unstable();
    out
}

/// Greedy matching: accept unmasked cells in order of descending score,
/// ties to the lower row then lower column, each row/column used once.
pub fn greedy_assign(scores: &Array2<f64>, mask: &Array2<bool>) -> Vec<(usize, usize)> {
    assert_eq!(scores.dim(), mask.dim(), "score/mask shapes differ");
    let (rows, cols) = scores.dim();
    let mut cells: Vec<(usize, usize)> = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .filter(|&(i, j)| mask[(i, j)])
        .collect();
    cells.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    let mut out = Vec::new();
    for (i, j) in cells {
        if !row_used[i] && !col_used[j] {
            row_used[i] = true;
            col_used[j] = true;
            out.push((i, j));
        }
    }
    out.sort_unstable();
    out
}

/// Outcome of associating one frame's detections of one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameAssociation {
    /// (track id, det id) matches.
    pub assignments: Vec<(u64, u64)>,
    /// Surviving detections that matched no track, in det-id order.
    pub new_tracks: Vec<u64>,
    /// Detections cut by the confidence gate.
    pub dropped: Vec<u64>,
}

/// Matches one frame's detections against the given tracks.
///
/// Tracks and detections are ordered by id before scoring, so greedy
/// tie-breaking is by (lower track id, lower det id) regardless of input
/// order.
pub fn associate_frame(
    tracks: &[Track],
    dets: &[Detection],
    now: u64,
    cfg: &AssocConfig,
) -> Result<FrameAssociation, TrackerError> {
    let mut seen = BTreeSet::new();
    for d in dets {
        if d.frame != now {
            return Err(TrackerError::FrameMismatch {
                det_id: d.det_id,
                expected: now,
                got: d.frame,
            });
        }
        if !seen.insert(d.det_id) {
            return Err(TrackerError::DuplicateDetectionId {
                frame: now,
                det_id: d.det_id,
            });
        }
    }

    let mut dropped = Vec::new();
    let mut live: Vec<(&Detection, UnitVector)> = Vec::new();
    for d in dets {
        if d.confidence > cfg.beta {
            let unit = l2_normalize(&d.embedding).map_err(|_| {
                TrackerError::ZeroNormEmbedding {
                    frame: now,
                    det_id: d.det_id,
                }
            })?;
            live.push((d, unit));
        } else {
            dropped.push(d.det_id);
        }
    }
    dropped.sort_unstable();
    live.sort_by_key(|(d, _)| d.det_id);

    let mut track_order: Vec<&Track> = tracks.iter().collect();
    track_order.sort_by_key(|t| t.track_id);

    let mut scores = Array2::zeros((track_order.len(), live.len()));
    let mut gated = Array2::from_elem((track_order.len(), live.len()), false);
    for (ti, t) in track_order.iter().enumerate() {
        for (dj, (d, unit)) in live.iter().enumerate() {
            if gate_with_unit(d, unit, t, now, cfg) {
                gated[(ti, dj)] = true;
                scores[(ti, dj)] = cosine_similarity(unit, &t.last_embedding)
                    .expect("dims checked by gate");
            }
        }
    }

    let matched = match cfg.matcher {
        Matcher::Greedy => greedy_assign(&scores, &gated),
        Matcher::Hungarian => hungarian_assign(&scores, &gated),
    };

    let mut det_matched = vec![false; live.len()];
    let mut assignments = Vec::with_capacity(matched.len());
    for (ti, dj) in matched {
        det_matched[dj] = true;
        assignments.push((track_order[ti].track_id, live[dj].0.det_id));
    }
    let new_tracks = live
        .iter()
        .enumerate()
        .filter(|(dj, _)| !det_matched[*dj])
        .map(|(_, (d, _))| d.det_id)
        .collect();
    Ok(FrameAssociation {
        assignments,
        new_tracks,
        dropped,
    })
}

/// One detection as placed on a track.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedDetection {
    pub frame: u64,
    pub det_id: u64,
    pub class: u32,
    pub track_id: u64,
    pub bbox: BBox,
    pub mask: Option<RleMask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingResult {
    /// Every kept detection with its assigned track, in processing order
    /// (frame, then class, then det id).
    pub records: Vec<TrackedDetection>,
    /// All tracks ever opened, id order.
    pub tracks: Vec<Track>,
    /// (frame, det id) pairs cut by the confidence gate.
    pub dropped: Vec<(u64, u64)>,
}

impl TrackingResult {
    pub fn track_of(&self, frame: u64, det_id: u64) -> Option<u64> {
        self.records
            .iter()
            .find(|r| r.frame == frame && r.det_id == det_id)
            .map(|r| r.track_id)
    }
}

fn update_track(track: &mut Track, det: &Detection, unit: &UnitVector, cfg: &AssocConfig) {
    track.history.push((det.frame, det.det_id));
    track.last_frame = det.frame;
    track.last_center = (det.bbox.cx, det.bbox.cy);
    track.last_embedding = match cfg.ema {
        Some(lambda) => {
            let blended: Vec<f64> = track
                .last_embedding
                .values()
                .iter()
                .zip(unit.values())
                .map(|(&old, &new)| lambda * old + (1.0 - lambda) * new)
                .collect();
            match FeatureVector::new(blended).and_then(|f| l2_normalize(&f)) {
                Ok(u) => u,
                // Antipodal blend cancels out; keep the fresh direction.
                Err(_) => unit.clone(),
            }
        }
        None => unit.clone(),
    };
}

/// Runs association over a whole sequence. Detections are grouped by their
/// frame field and processed in ascending frame order, each class matched
/// independently under its config. Track ids are allocated sequentially
/// from 0 in creation order.
pub fn run_sequence(
    dets: &[Detection],
    configs: &ClassConfigs,
) -> Result<TrackingResult, TrackerError> {
    let mut by_frame: BTreeMap<u64, Vec<&Detection>> = BTreeMap::new();
    for d in dets {
        by_frame.entry(d.frame).or_default().push(d);
    }

    let mut tracks: Vec<Track> = Vec::new();
    let mut records = Vec::new();
    let mut dropped = Vec::new();

    for (&frame, frame_dets) in &by_frame {
        let classes: BTreeSet<u32> = frame_dets.iter().map(|d| d.class).collect();
        for class in classes {
            let cfg = configs.for_class(class);
            let class_dets: Vec<Detection> = frame_dets
                .iter()
                .filter(|d| d.class == class)
                .map(|d| (*d).clone())
                .collect();
            let class_tracks: Vec<Track> = tracks
                .iter()
                .filter(|t| t.class == class)
                .cloned()
                .collect();
            let assoc = associate_frame(&class_tracks, &class_dets, frame, cfg)?;

            let det_of = |id: u64| {
                class_dets
                    .iter()
                    .find(|d| d.det_id == id)
                    .expect("association reports known det ids")
            };
            for &(track_id, det_id) in &assoc.assignments {
                let det = det_of(det_id);
                let unit = l2_normalize(&det.embedding).expect("validated in associate_frame");
                let track = tracks
                    .iter_mut()
                    .find(|t| t.track_id == track_id)
                    .expect("association reports known track ids");
                update_track(track, det, &unit, cfg);
                records.push(TrackedDetection {
                    frame,
                    det_id,
                    class,
                    track_id,
                    bbox: det.bbox,
                    mask: det.mask.clone(),
                });
            }
            for &det_id in &assoc.new_tracks {
                let det = det_of(det_id);
                let unit = l2_normalize(&det.embedding).expect("validated in associate_frame");
                let track_id = tracks.len() as u64;
                tracks.push(Track {
                    track_id,
                    class,
                    history: vec![(frame, det_id)],
                    last_frame: frame,
                    last_embedding: unit,
                    last_center: (det.bbox.cx, det.bbox.cy),
                });
                records.push(TrackedDetection {
                    frame,
                    det_id,
                    class,
                    track_id,
                    bbox: det.bbox,
                    mask: det.mask.clone(),
                });
            }
            dropped.extend(assoc.dropped.iter().map(|&d| (frame, d)));
        }
    }
    Ok(TrackingResult {
        records,
        tracks,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn fv(values: &[f64]) -> FeatureVector {
        FeatureVector::new(values.to_vec()).unwrap()
    }

    fn det(frame: u64, det_id: u64, class: u32, conf: f64, cx: f64, cy: f64, emb: &[f64]) -> Detection {
        Detection::new(
            frame,
            det_id,
            class,
            conf,
            BBox::new(cx, cy, 40.0, 30.0).unwrap(),
            None,
            fv(emb),
        )
        .unwrap()
    }

    fn track(track_id: u64, class: u32, last_frame: u64, center: (f64, f64), emb: &[f64]) -> Track {
        Track {
            track_id,
            class,
            history: vec![(last_frame, 0)],
            last_frame,
            last_embedding: l2_normalize(&fv(emb)).unwrap(),
            last_center: center,
        }
    }

    #[test]
    fn bbox_iou_basics() {
        let a = BBox::new(0.5, 0.5, 1.0, 1.0).unwrap();
        assert_eq!(bbox_iou(&a, &a), 1.0);
        let far = BBox::new(10.0, 0.5, 1.0, 1.0).unwrap();
        assert_eq!(bbox_iou(&a, &far), 0.0);
        // Unit squares offset by half a width: 0.5 over 1.5.
        let shifted = BBox::new(1.0, 0.5, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(bbox_iou(&a, &shifted), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn gate_accepts_just_inside_every_threshold() {
        let cfg = AssocConfig::car(Matcher::Greedy);
        let t = track(0, 1, 0, (0.0, 0.0), &[1.0, 0.0]);
        // Distance 149.9 < 150; cosine 0.31 > 0.3; gap 1 <= 10.
        let c = 0.31;
        let d = det(1, 0, 1, 0.9, 149.9, 0.0, &[c, (1.0f64 - c * c).sqrt()]);
        assert!(gate(&d, &t, 1, &cfg));
    }

    #[test]
    fn gate_rejects_stale_tracks() {
        let cfg = AssocConfig::car(Matcher::Greedy);
        let t = track(0, 1, 0, (0.0, 0.0), &[1.0, 0.0]);
        let d = det(11, 0, 1, 0.9, 0.0, 0.0, &[1.0, 0.0]);
        assert!(!gate(&d, &t, 11, &cfg));
        assert!(gate(&det(10, 0, 1, 0.9, 0.0, 0.0, &[1.0, 0.0]), &t, 10, &cfg));
    }

    #[test]
    fn gate_boundaries_are_strict() {
        let cfg = AssocConfig::car(Matcher::Greedy);
        let t = track(0, 1, 0, (0.0, 0.0), &[1.0, 0.0]);
        // Similarity exactly delta.
        let c = cfg.delta;
        let at_delta = det(1, 0, 1, 0.9, 0.0, 0.0, &[c, (1.0f64 - c * c).sqrt()]);
        assert!(!gate(&at_delta, &t, 1, &cfg));
        // Distance exactly gamma.
        let at_gamma = det(1, 0, 1, 0.9, 150.0, 0.0, &[1.0, 0.0]);
        assert!(!gate(&at_gamma, &t, 1, &cfg));
        // Class mismatch.
        let other_class = det(1, 0, 2, 0.9, 0.0, 0.0, &[1.0, 0.0]);
        assert!(!gate(&other_class, &t, 1, &cfg));
    }

    #[test]
    fn hungarian_identity_matrix_is_diagonal() {
        let scores = Array2::from_shape_fn((3, 3), |(i, j)| if i == j { 1.0 } else { 0.0 });
        let mask = Array2::from_elem((3, 3), true);
        assert_eq!(hungarian_assign(&scores, &mask), vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn hungarian_fully_masked_is_empty() {
        let scores = Array2::from_elem((2, 2), 1.0);
        let mask = Array2::from_elem((2, 2), false);
        assert!(hungarian_assign(&scores, &mask).is_empty());
    }

    #[test]
    fn hungarian_skips_nonpositive_cells() {
        let scores = ndarray::array![[-0.5, 0.9], [0.0, -0.2]];
        let mask = Array2::from_elem((2, 2), true);
        assert_eq!(hungarian_assign(&scores, &mask), vec![(0, 1)]);
    }

    #[test]
    fn hungarian_handles_rectangles() {
        let scores = ndarray::array![[0.2, 0.9, 0.5]];
        let mask = Array2::from_elem((1, 3), true);
        assert_eq!(hungarian_assign(&scores, &mask), vec![(0, 1)]);

        let tall = ndarray::array![[0.2], [0.9], [0.5]];
        let mask = Array2::from_elem((3, 1), true);
        assert_eq!(hungarian_assign(&tall, &mask), vec![(1, 0)]);
    }

    #[test]
    fn greedy_and_hungarian_agree_on_dominant_diagonal() {
        let scores = ndarray::array![[0.9, 0.2], [0.1, 0.8]];
        let mask = Array2::from_elem((2, 2), true);
        let expected = vec![(0, 0), (1, 1)];
        assert_eq!(greedy_assign(&scores, &mask), expected);
        assert_eq!(hungarian_assign(&scores, &mask), expected);
    }

    #[test]
    fn greedy_and_hungarian_differ_on_crafted_matrix() {
        // Greedy grabs 0.9 first and is left with 0.1; the optimal pairing
        // crosses for 0.85 + 0.8.
        let scores = ndarray::array![[0.9, 0.85], [0.8, 0.1]];
        let mask = Array2::from_elem((2, 2), true);
        let greedy = greedy_assign(&scores, &mask);
        let optimal = hungarian_assign(&scores, &mask);
        assert_eq!(greedy, vec![(0, 0), (1, 1)]);
        assert_eq!(optimal, vec![(0, 1), (1, 0)]);
        let total = |assign: &[(usize, usize)]| -> f64 {
            assign.iter().map(|&c| scores[c]).sum()
        };
        assert_abs_diff_eq!(total(&greedy), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(total(&optimal), 1.65, epsilon = 1e-12);
    }

    #[test]
    fn greedy_ties_break_to_lower_indices() {
        let scores = ndarray::array![[0.5, 0.5], [0.5, 0.5]];
        let mask = Array2::from_elem((2, 2), true);
        assert_eq!(greedy_assign(&scores, &mask), vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn associate_frame_matches_both_objects() {
        // Embeddings realizing cosines [[0.9, 0.2], [0.1, 0.8]] against the
        // two track directions e1, e2.
        let cfg = AssocConfig::new(10, 0.3, 150.0, 0.05, Matcher::Greedy).unwrap();
        let tracks = vec![
            track(0, 1, 0, (0.0, 0.0), &[1.0, 0.0, 0.0, 0.0]),
            track(1, 1, 0, (50.0, 0.0), &[0.0, 1.0, 0.0, 0.0]),
        ];
        let dets = vec![
            det(1, 0, 1, 0.9, 0.0, 0.0, &[0.9, 0.1, 0.18f64.sqrt(), 0.0]),
            det(1, 1, 1, 0.9, 50.0, 0.0, &[0.2, 0.8, 0.0, 0.32f64.sqrt()]),
        ];
        let out = associate_frame(&tracks, &dets, 1, &cfg).unwrap();
        assert_eq!(out.assignments, vec![(0, 0), (1, 1)]);
        assert!(out.new_tracks.is_empty());

        let hungarian = AssocConfig {
            matcher: Matcher::Hungarian,
            ..cfg
        };
        let out = associate_frame(&tracks, &dets, 1, &hungarian).unwrap();
        assert_eq!(out.assignments, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn associate_frame_drops_low_confidence() {
        let cfg = AssocConfig::car(Matcher::Greedy);
        let dets = vec![det(0, 5, 1, 0.30, 0.0, 0.0, &[1.0, 0.0])];
        let out = associate_frame(&[], &dets, 0, &cfg).unwrap();
        assert_eq!(out.dropped, vec![5]);
        assert!(out.new_tracks.is_empty());
        // Exactly beta is still dropped (strict >).
        let at_beta = vec![det(0, 6, 1, 0.32, 0.0, 0.0, &[1.0, 0.0])];
        let out = associate_frame(&[], &at_beta, 0, &cfg).unwrap();
        assert_eq!(out.dropped, vec![6]);
    }

    #[test]
    fn associate_frame_rejects_duplicate_ids() {
        let cfg = AssocConfig::car(Matcher::Greedy);
        let dets = vec![
            det(0, 3, 1, 0.9, 0.0, 0.0, &[1.0, 0.0]),
            det(0, 3, 1, 0.9, 10.0, 0.0, &[0.0, 1.0]),
        ];
        assert_eq!(
            associate_frame(&[], &dets, 0, &cfg),
            Err(TrackerError::DuplicateDetectionId { frame: 0, det_id: 3 })
        );
    }

    #[test]
    fn associate_frame_reports_zero_norm_embedding() {
        let cfg = AssocConfig::car(Matcher::Greedy);
        let dets = vec![det(0, 1, 1, 0.9, 0.0, 0.0, &[0.0, 0.0])];
        assert_eq!(
            associate_frame(&[], &dets, 0, &cfg),
            Err(TrackerError::ZeroNormEmbedding { frame: 0, det_id: 1 })
        );
    }

    #[test]
    fn run_sequence_links_a_single_chain() {
        let cfg = ClassConfigs::uniform(AssocConfig::car(Matcher::Greedy));
        let dets: Vec<Detection> = (0..5)
            .map(|f| det(f, 0, 1, 0.9, f as f64 * 3.0, 0.0, &[1.0, 0.0]))
            .collect();
        let out = run_sequence(&dets, &cfg).unwrap();
        assert_eq!(out.tracks.len(), 1);
        assert!(out.records.iter().all(|r| r.track_id == 0));
        assert_eq!(out.tracks[0].history.len(), 5);
    }

    #[test]
    fn run_sequence_splits_on_embedding_flip() {
        let cfg = ClassConfigs::uniform(AssocConfig::car(Matcher::Greedy));
        let mut dets: Vec<Detection> = (0..3)
            .map(|f| det(f, 0, 1, 0.9, 0.0, 0.0, &[1.0, 0.0]))
            .collect();
        dets.extend((3..6).map(|f| det(f, 0, 1, 0.9, 0.0, 0.0, &[0.0, 1.0])));
        let out = run_sequence(&dets, &cfg).unwrap();
        assert_eq!(out.tracks.len(), 2);
        assert_eq!(out.track_of(2, 0), Some(0));
        assert_eq!(out.track_of(3, 0), Some(1));
    }

    #[test]
    fn run_sequence_respects_temporal_window() {
        let cfg = ClassConfigs::uniform(AssocConfig::car(Matcher::Greedy));
        let dets = vec![
            det(0, 0, 1, 0.9, 0.0, 0.0, &[1.0, 0.0]),
            det(11, 0, 1, 0.9, 0.0, 0.0, &[1.0, 0.0]),
        ];
        let out = run_sequence(&dets, &cfg).unwrap();
        assert_eq!(out.tracks.len(), 2);
        // A gap within alpha re-links instead.
        let dets = vec![
            det(0, 0, 1, 0.9, 0.0, 0.0, &[1.0, 0.0]),
            det(10, 0, 1, 0.9, 0.0, 0.0, &[1.0, 0.0]),
        ];
        let out = run_sequence(&dets, &cfg).unwrap();
        assert_eq!(out.tracks.len(), 1);
    }

    #[test]
    fn run_sequence_keeps_classes_apart() {
        let cfg = ClassConfigs::default_gates(Matcher::Greedy);
        let dets = vec![
            det(0, 0, 1, 0.9, 0.0, 0.0, &[1.0, 0.0]),
            det(1, 0, 2, 0.9, 0.0, 0.0, &[1.0, 0.0]),
        ];
        let out = run_sequence(&dets, &cfg).unwrap();
        assert_eq!(out.tracks.len(), 2);
        assert_eq!(out.tracks[0].class, 1);
        assert_eq!(out.tracks[1].class, 2);
    }

    #[test]
    fn ema_blends_track_embedding() {
        let cfg = ClassConfigs::uniform(
            AssocConfig::car(Matcher::Greedy).with_ema(0.5).unwrap(),
        );
        let dets = vec![
            det(0, 0, 1, 0.9, 0.0, 0.0, &[1.0, 0.0]),
            det(1, 0, 1, 0.9, 0.0, 0.0, &[0.8, 0.6]),
        ];
        let out = run_sequence(&dets, &cfg).unwrap();
        let emb = out.tracks[0].last_embedding.values();
        // Halfway blend of (1,0) and (0.8,0.6), renormalized.
        let expected = l2_normalize(&fv(&[0.9, 0.3])).unwrap();
        assert_abs_diff_eq!(emb[0], expected.values()[0], epsilon = 1e-12);
        assert_abs_diff_eq!(emb[1], expected.values()[1], epsilon = 1e-12);
    }

    proptest! {
        /// The optimal matcher never totals less than greedy on the same
        /// gated matrix.
        #[test]
        fn hungarian_total_dominates_greedy(
            (rows, cols, cells) in (1usize..5, 1usize..5).prop_flat_map(|(r, c)| {
                (
                    Just(r),
                    Just(c),
                    prop::collection::vec((0.0f64..1.0, any::<bool>()), r * c),
                )
            })
        ) {
            let scores = Array2::from_shape_fn((rows, cols), |(i, j)| cells[i * cols + j].0);
            let mask = Array2::from_shape_fn((rows, cols), |(i, j)| cells[i * cols + j].1);
            let total = |assign: &[(usize, usize)]| -> f64 {
                assign.iter().map(|&c| scores[c]).sum()
            };
            let g = total(&greedy_assign(&scores, &mask));
            let h = total(&hungarian_assign(&scores, &mask));
            prop_assert!(h >= g - 1e-9, "hungarian {h} < greedy {g}");
        }

        /// Assignments are one-to-one and only over unmasked cells.
        #[test]
        fn hungarian_output_is_a_matching(
            (rows, cols, cells) in (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
                (
                    Just(r),
                    Just(c),
                    prop::collection::vec((-1.0f64..1.0, any::<bool>()), r * c),
                )
            })
        ) {
            let scores = Array2::from_shape_fn((rows, cols), |(i, j)| cells[i * cols + j].0);
            let mask = Array2::from_shape_fn((rows, cols), |(i, j)| cells[i * cols + j].1);
            let out = hungarian_assign(&scores, &mask);
            let mut rs = BTreeSet::new();
            let mut cs = BTreeSet::new();
            for (i, j) in out {
                prop_assert!(mask[(i, j)]);
                prop_assert!(scores[(i, j)] > 0.0);
                prop_assert!(rs.insert(i));
                prop_assert!(cs.insert(j));
            }
        }
    }
}
