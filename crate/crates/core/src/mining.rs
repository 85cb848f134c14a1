//! In-batch hard-example mining over detections with tracking identities.
//!
//! Hardness is measured in cosine similarity on the normalized embeddings:
//! the hard positive is the same-identity item the anchor agrees with
//! least, the hard negative is the same-class different-identity item it
//! agrees with most. Anchors missing a side are skipped and counted, never
//! an error.

use crate::hypersphere::{FeatureVector, HypersphereError, UnitVector};
use crate::losses::{LabeledPair, Triplet};

/// One detection with the labels mining needs. `source` points back at the
/// caller's detection record (batch position by default).
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionItem {
    pub embedding: FeatureVector,
    pub identity: u64,
    pub class: u32,
    pub source: usize,
}

/// A batch of labeled detections with embeddings of one common dimension.
/// Unit directions are cached at construction, so every embedding must
/// have nonzero norm.
#[derive(Debug, Clone)]
pub struct DetectionBatch {
    items: Vec<DetectionItem>,
    units: Vec<UnitVector>,
}

impl DetectionBatch {
    pub fn new(items: Vec<DetectionItem>) -> Result<Self, HypersphereError> {
        let mut units = Vec::with_capacity(items.len());
        for item in &items {
            if let Some(first) = items.first() {
                if item.embedding.dim() != first.embedding.dim() {
                    return Err(HypersphereError::DimensionMismatch {
                        left: first.embedding.dim(),
                        right: item.embedding.dim(),
                    });
                }
            }
            units.push(crate::hypersphere::l2_normalize(&item.embedding)?);
        }
        Ok(Self { items, units })
    }

    pub fn from_parts(
        embeddings: Vec<FeatureVector>,
        identities: Vec<u64>,
        classes: Vec<u32>,
    ) -> Result<Self, HypersphereError> {
        assert_eq!(embeddings.len(), identities.len());
        assert_eq!(embeddings.len(), classes.len());
        let items = embeddings
            .into_iter()
            .zip(identities)
            .zip(classes)
            .enumerate()
            .map(|(source, ((embedding, identity), class))| DetectionItem {
                embedding,
                identity,
                class,
                source,
            })
            .collect();
        Self::new(items)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[DetectionItem] {
        &self.items
    }

    pub fn unit(&self, i: usize) -> &UnitVector {
        &self.units[i]
    }

    pub fn cosine(&self, i: usize, j: usize) -> f64 {
        self.units[i].dot(&self.units[j]).clamp(-1.0, 1.0)
    }

    /// Identities present with at least `min_members` items each.
    pub fn identity_count(&self, min_members: usize) -> usize {
        let mut ids: Vec<u64> = self.items.iter().map(|i| i.identity).collect();
        ids.sort_unstable();
        let mut count = 0;
        let mut run = 0;
        let mut prev: Option<u64> = None;
        for id in ids {
            if prev == Some(id) {
                run += 1;
            } else {
                if run >= min_members {
                    count += 1;
                }
                run = 1;
                prev = Some(id);
            }
        }
        if run >= min_members {
            count += 1;
        }
        count
    }
}

/// Anchor, positive, negative positions in the batch.
pub type TripletIndices = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct MinedTriplets {
    pub triplets: Vec<Triplet>,
    /// Batch positions behind each triplet, for scattering gradients.
    pub indices: Vec<TripletIndices>,
    /// Anchors lacking a positive or a negative.
    pub skipped_anchors: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinedPairs {
    pub pairs: Vec<LabeledPair>,
    /// (anchor, partner, same_identity) positions behind each pair.
    pub indices: Vec<(usize, usize, bool)>,
    /// Positive or negative sides that had no eligible partner.
    pub skipped_sides: usize,
}

/// Hardest same-identity partner of `anchor`, ties to the lowest index.
fn hard_positive(batch: &DetectionBatch, anchor: usize) -> Option<usize> {
    let a = &batch.items()[anchor];
    let mut best: Option<(usize, f64)> = None;
    for (j, item) in batch.items().iter().enumerate() {
        if j == anchor || item.identity != a.identity {
            continue;
        }
        let cos = batch.cosine(anchor, j);
        if best.map_or(true, |(_, c)| cos < c) {
            best = Some((j, cos));
        }
    }
    best.map(|(j, _)| j)
}

/// Hardest same-class different-identity partner, ties to the lowest index.
fn hard_negative(batch: &DetectionBatch, anchor: usize) -> Option<usize> {
    let a = &batch.items()[anchor];
    let mut best: Option<(usize, f64)> = None;
    for (j, item) in batch.items().iter().enumerate() {
        if item.identity == a.identity || item.class != a.class {
            continue;
        }
        let cos = batch.cosine(anchor, j);
        if best.map_or(true, |(_, c)| cos > c) {
            best = Some((j, cos));
        }
    }
    best.map(|(j, _)| j)
}

/// One triplet per anchor that has both a hard positive and a hard
/// negative, in anchor order.
pub fn mine_hard_triplets(batch: &DetectionBatch) -> MinedTriplets {
    let mut triplets = Vec::new();
    let mut indices = Vec::new();
    let mut skipped = 0;
    for anchor in 0..batch.len() {
        match (hard_positive(batch, anchor), hard_negative(batch, anchor)) {
            (Some(p), Some(n)) => {
                let items = batch.items();
                triplets.push(
                    Triplet::new(
                        items[anchor].embedding.clone(),
                        items[p].embedding.clone(),
                        items[n].embedding.clone(),
                    )
                    .expect("batch dims agree"),
                );
                indices.push((anchor, p, n));
            }
            _ => skipped += 1,
        }
    }
    MinedTriplets {
        triplets,
        indices,
        skipped_anchors: skipped,
    }
}

/// Per anchor, a positive pair with its hard positive and a negative pair
/// with its hard negative; sides without a partner are counted as skipped.
pub fn mine_hard_pairs(batch: &DetectionBatch) -> MinedPairs {
    let mut pairs = Vec::new();
    let mut indices = Vec::new();
    let mut skipped = 0;
    for anchor in 0..batch.len() {
        let items = batch.items();
        match hard_positive(batch, anchor) {
            Some(p) => {
                pairs.push(
                    LabeledPair::new(
                        items[anchor].embedding.clone(),
                        items[p].embedding.clone(),
                        true,
                    )
                    .expect("batch dims agree"),
                );
                indices.push((anchor, p, true));
            }
            None => skipped += 1,
        }
        match hard_negative(batch, anchor) {
            Some(n) => {
                pairs.push(
                    LabeledPair::new(
                        items[anchor].embedding.clone(),
                        items[n].embedding.clone(),
                        false,
                    )
                    .expect("batch dims agree"),
                );
                indices.push((anchor, n, false));
            }
            None => skipped += 1,
        }
    }
    MinedPairs {
        pairs,
        indices,
        skipped_sides: skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn item(values: &[f64], identity: u64, class: u32, source: usize) -> DetectionItem {
        DetectionItem {
            embedding: FeatureVector::new(values.to_vec()).unwrap(),
            identity,
            class,
            source,
        }
    }

    /// 2-d vector at the given cosine to (1, 0).
    fn at_cosine(c: f64) -> Vec<f64> {
        vec![c, (1.0 - c * c).sqrt()]
    }

    fn batch(items: Vec<DetectionItem>) -> DetectionBatch {
        DetectionBatch::new(items).unwrap()
    }

    #[test]
    fn two_same_one_other_yields_two_triplets() {
        let b = batch(vec![
            item(&[1.0, 0.0], 0, 1, 0),
            item(&[0.9, 0.1], 0, 1, 1),
            item(&[0.0, 1.0], 1, 1, 2),
        ]);
        let mined = mine_hard_triplets(&b);
        assert_eq!(mined.indices, vec![(0, 1, 2), (1, 0, 2)]);
        assert_eq!(mined.skipped_anchors, 1);
    }

    #[test]
    fn picks_min_cosine_positive_and_max_cosine_negative() {
        // Anchor at (1,0); positives at cosines 0.9 and 0.3; negatives at
        // 0.1 and 0.7 under two other identities, all one class.
        let b = batch(vec![
            item(&[1.0, 0.0], 0, 1, 0),
            item(&at_cosine(0.9), 0, 1, 1),
            item(&at_cosine(0.3), 0, 1, 2),
            item(&at_cosine(0.1), 1, 1, 3),
            item(&at_cosine(0.7), 2, 1, 4),
        ]);
        let mined = mine_hard_triplets(&b);
        assert_eq!(mined.indices[0], (0, 2, 4));
    }

    #[test]
    fn single_identity_mines_nothing() {
        let b = batch(vec![
            item(&[1.0, 0.0], 7, 1, 0),
            item(&[0.9, 0.1], 7, 1, 1),
            item(&[0.8, 0.2], 7, 1, 2),
        ]);
        let mined = mine_hard_triplets(&b);
        assert!(mined.triplets.is_empty());
        assert_eq!(mined.skipped_anchors, 3);
    }

    #[test]
    fn pairs_for_two_identities() {
        // {A, A, B}: every anchor has a negative, only the A's have a
        // positive; B's positive side is the one skip.
        let b = batch(vec![
            item(&[1.0, 0.0], 0, 1, 0),
            item(&[0.9, 0.1], 0, 1, 1),
            item(&[0.0, 1.0], 1, 1, 2),
        ]);
        let mined = mine_hard_pairs(&b);
        let positives = mined.indices.iter().filter(|(_, _, s)| *s).count();
        let negatives = mined.indices.len() - positives;
        assert_eq!(positives, 2);
        assert_eq!(negatives, 3);
        assert_eq!(mined.skipped_sides, 1);
    }

    #[test]
    fn distinct_identities_have_no_positive_pairs() {
        let b = batch(vec![
            item(&[1.0, 0.0], 0, 1, 0),
            item(&[0.0, 1.0], 1, 1, 1),
            item(&[0.5, 0.5], 2, 1, 2),
        ]);
        let mined = mine_hard_pairs(&b);
        assert!(mined.indices.iter().all(|(_, _, same)| !same));
    }

    #[test]
    fn negatives_must_share_class() {
        let b = batch(vec![
            item(&[1.0, 0.0], 0, 1, 0),
            item(&[0.0, 1.0], 1, 2, 1),
        ]);
        assert!(mine_hard_triplets(&b).triplets.is_empty());
        let mined = mine_hard_pairs(&b);
        assert!(mined.pairs.is_empty());
        assert_eq!(mined.skipped_sides, 4);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        // Two identical positives and two identical negatives.
        let b = batch(vec![
            item(&[1.0, 0.0], 0, 1, 0),
            item(&at_cosine(0.5), 0, 1, 1),
            item(&at_cosine(0.5), 0, 1, 2),
            item(&at_cosine(0.8), 1, 1, 3),
            item(&at_cosine(0.8), 2, 1, 4),
        ]);
        let mined = mine_hard_triplets(&b);
        assert_eq!(mined.indices[0], (0, 1, 3));
    }

    #[test]
    fn zero_norm_embedding_rejected_at_construction() {
        let err = DetectionBatch::new(vec![item(&[0.0, 0.0], 0, 1, 0)]);
        assert_eq!(err.unwrap_err(), HypersphereError::ZeroNormVector);
    }

    #[test]
    fn identity_count_honors_min_members() {
        let b = batch(vec![
            item(&[1.0, 0.0], 0, 1, 0),
            item(&[0.9, 0.1], 0, 1, 1),
            item(&[0.0, 1.0], 1, 1, 2),
        ]);
        assert_eq!(b.identity_count(1), 2);
        assert_eq!(b.identity_count(2), 1);
    }

    proptest! {
        /// Brute-force hardness on random batches: no eligible positive is
        /// strictly harder than the chosen one, no eligible negative is
        /// strictly easier to confuse; labels satisfy the mining contract.
        #[test]
        fn mined_triplets_are_hardest(
            raw in prop::collection::vec(
                (prop::collection::vec(-1.0f64..1.0, 3), 0u64..4, 1u32..3),
                1..24,
            )
        ) {
            let items: Vec<DetectionItem> = raw
                .into_iter()
                .enumerate()
                .filter(|(_, (v, _, _))| v.iter().map(|x| x * x).sum::<f64>().sqrt() > 1e-3)
                .map(|(i, (v, id, class))| item(&v, id, class, i))
                .collect();
            prop_assume!(!items.is_empty());
            let b = batch(items);
            let mined = mine_hard_triplets(&b);
            prop_assert_eq!(
                mined.indices.len() + mined.skipped_anchors,
                b.len()
            );
            for &(a, p, n) in &mined.indices {
                let items = b.items();
                prop_assert_eq!(items[a].identity, items[p].identity);
                prop_assert_ne!(items[a].identity, items[n].identity);
                prop_assert_eq!(items[a].class, items[n].class);
                for j in 0..b.len() {
                    if j != a && items[j].identity == items[a].identity {
                        prop_assert!(b.cosine(a, j) >= b.cosine(a, p) - 1e-12);
                    }
                    if items[j].identity != items[a].identity && items[j].class == items[a].class {
                        prop_assert!(b.cosine(a, j) <= b.cosine(a, n) + 1e-12);
                    }
                }
            }
        }
    }
}
