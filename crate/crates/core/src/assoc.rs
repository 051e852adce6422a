//! Association-set growing by hierarchical agglomerative clustering.
//!
//! Singleton correspondence hypotheses are created from class-label and
//! descriptor gates, then repeatedly merged: two hypothesis sets fuse only
//! when every cross pair of correspondences has a relative-distance ratio
//! above the `gamma` threshold, so surviving sets are internally consistent
//! injective matchings. A set's score is the sum of the ratio metric over
//! all correspondence pairs inside it, which keeps scores independent of
//! the order in which merges happened.
//!
//! The pool retains merged ancestors but marks them consumed so they do not
//! re-enter the merge search; pruning (duplicate removal, staleness, and a
//! size cap) keeps incremental updates cheap while the camera explores.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{descriptor_distance, ObjectId, ObjectMap};

/// One hypothesized correspondence between a global and a local object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairAssociation {
    /// Global object id.
    pub alpha: ObjectId,
    /// Local object id.
    pub beta: ObjectId,
}

/// A hypothesized set of correspondences with its consistency score.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationSet {
    /// Sorted by `(alpha, beta)`, no duplicates, injective both ways.
    pairs: Vec<PairAssociation>,
    score: f64,
    consumed: bool,
    created_epoch: u64,
    last_merge_epoch: u64,
}

impl AssociationSet {
    /// A one-pair hypothesis with score zero.
    pub fn singleton(alpha: ObjectId, beta: ObjectId, epoch: u64) -> Self {
        Self {
            pairs: vec![PairAssociation { alpha, beta }],
            score: 0.0,
            consumed: false,
            created_epoch: epoch,
            last_merge_epoch: epoch,
        }
    }

    /// Builds a set from explicit pairs, validating uniqueness and
    /// injectivity and computing the canonical score.
    pub fn from_pairs(
        mut pairs: Vec<PairAssociation>,
        global: &ObjectMap,
        local: &ObjectMap,
        params: &ClusterParams,
    ) -> Result<Self> {
        pairs.sort_unstable();
        if pairs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter {
                what: "pairs",
                why: "duplicate correspondence".into(),
            });
        }
        if !is_injective(&pairs) {
            return Err(Error::InvalidParameter {
                what: "pairs",
                why: "two correspondences share a global or local object".into(),
            });
        }
        let score = canonical_score(&pairs, global, local, params)?;
        Ok(Self {
            pairs,
            score,
            consumed: false,
            created_epoch: 0,
            last_merge_epoch: 0,
        })
    }

    pub fn pairs(&self) -> &[PairAssociation] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_singleton(&self) -> bool {
        self.pairs.len() == 1
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn consumed(&self) -> bool {
        self.consumed
    }

    pub fn created_epoch(&self) -> u64 {
        self.created_epoch
    }

    pub fn last_merge_epoch(&self) -> u64 {
        self.last_merge_epoch
    }

    pub fn contains_pair(&self, pair: &PairAssociation) -> bool {
        self.pairs.binary_search(pair).is_ok()
    }

    /// Pairs of `self` that are not in `other`, in canonical order.
    fn difference(&self, other: &AssociationSet) -> Vec<PairAssociation> {
        self.pairs
            .iter()
            .filter(|p| !other.contains_pair(p))
            .copied()
            .collect()
    }

    fn key(&self) -> Vec<(ObjectId, ObjectId)> {
        self.pairs.iter().map(|p| (p.alpha, p.beta)).collect()
    }
}

/// Thresholds and limits steering clustering.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterParams {
    /// Distance-ratio threshold in (0, 1); a cross pair passes when the
    /// metric strictly exceeds it.
    pub gamma: f64,
    /// Descriptor distance gate for singleton creation.
    pub delta: f64,
    /// Pool cap is `cap_factor * |global map|`.
    pub cap_factor: usize,
    /// Non-singleton sets idle for more than this many epochs are dropped.
    pub stale_epochs: u64,
    /// Distances below this count as degenerate (coincident objects), meters.
    pub epsilon_distance: f64,
    /// Top score must exceed `dominance_ratio *` runner-up score to decide.
    pub dominance_ratio: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            gamma: 0.8,
            delta: 0.5,
            cap_factor: 10,
            stale_epochs: 2,
            epsilon_distance: 1e-6,
            dominance_ratio: 1.5,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParameter {
                what: "gamma",
                why: format!("{} is outside (0, 1)", self.gamma),
            });
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParameter {
                what: "delta",
                why: "must be positive".into(),
            });
        }
        if self.cap_factor < 1 {
            return Err(Error::InvalidParameter {
                what: "cap_factor",
                why: "must be at least 1".into(),
            });
        }
        if !(self.epsilon_distance > 0.0) {
            return Err(Error::InvalidParameter {
                what: "epsilon_distance",
                why: "must be positive".into(),
            });
        }
        if !(self.dominance_ratio > 1.0) {
            return Err(Error::InvalidParameter {
                what: "dominance_ratio",
                why: "must exceed 1".into(),
            });
        }
        Ok(())
    }

    /// Disables the cap and staleness pruning; used by oracle cross-checks.
    pub fn without_pruning(mut self) -> Self {
        self.cap_factor = usize::MAX;
        self.stale_epochs = u64::MAX;
        self
    }
}

/// Relative-distance compatibility of one global pair against one local
/// pair: `min(d_local/d_global, d_global/d_local)`, in [0, 1].
///
/// Degenerate distances: both below `epsilon_distance` means both pairs are
/// colocated, which is consistent (1.0); exactly one near-zero distance is
/// maximally inconsistent (0.0).
pub fn merge_metric(d_global: f64, d_local: f64, epsilon_distance: f64) -> f64 {
    let g_zero = d_global < epsilon_distance;
    let l_zero = d_local < epsilon_distance;
    match (g_zero, l_zero) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        (false, false) => (d_local / d_global).min(d_global / d_local),
    }
}

/// All correspondence pairs `(p, q)` with `p` exclusive to `d1` and `q`
/// exclusive to `d2`; these are the pairs a merge has to vet.
pub fn cross_pairs(
    d1: &AssociationSet,
    d2: &AssociationSet,
) -> Vec<(PairAssociation, PairAssociation)> {
    let left = d1.difference(d2);
    let right = d2.difference(d1);
    let mut out = Vec::with_capacity(left.len() * right.len());
    for &p in &left {
        for &q in &right {
            out.push((p, q));
        }
    }
    out
}

/// Sum of the merge metric over all unordered correspondence pairs inside
/// `pairs`; the merge-order-independent form of a set's score.
pub fn canonical_score(
    pairs: &[PairAssociation],
    global: &ObjectMap,
    local: &ObjectMap,
    params: &ClusterParams,
) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..pairs.len() {
        for j in (i + 1)..pairs.len() {
            let d_global = map_distance(global, pairs[i].alpha, pairs[j].alpha, "global")?;
            let d_local = map_distance(local, pairs[i].beta, pairs[j].beta, "local")?;
            total += merge_metric(d_global, d_local, params.epsilon_distance);
        }
    }
    Ok(total)
}

fn map_distance(map: &ObjectMap, a: ObjectId, b: ObjectId, side: &'static str) -> Result<f64> {
    let i = map
        .index_of(a)
        .ok_or(Error::InconsistentPool { id: a, side })?;
    let j = map
        .index_of(b)
        .ok_or(Error::InconsistentPool { id: b, side })?;
    map.pairwise_distance(i, j)
}

/// `pairs` must be sorted; checks that no global or local object is claimed
/// twice.
fn is_injective(pairs: &[PairAssociation]) -> bool {
    // Sorted by (alpha, beta): repeated alphas are adjacent.
    if pairs.windows(2).any(|w| w[0].alpha == w[1].alpha) {
        return false;
    }
    let mut betas: Vec<ObjectId> = pairs.iter().map(|p| p.beta).collect();
    betas.sort_unstable();
    !betas.windows(2).any(|w| w[0] == w[1])
}

/// One singleton hypothesis per (global, local) object pair with matching
/// class label that passes the descriptor gate. Objects without descriptors
/// skip the gate. A local object with several same-class candidates yields
/// several singletons.
pub fn init_singletons(
    global: &ObjectMap,
    local: &ObjectMap,
    params: &ClusterParams,
) -> Result<Vec<AssociationSet>> {
    let betas: Vec<ObjectId> = local.objects().iter().map(|o| o.id).collect();
    singletons_for(global, local, &betas, params, 0)
}

fn singletons_for(
    global: &ObjectMap,
    local: &ObjectMap,
    betas: &[ObjectId],
    params: &ClusterParams,
    epoch: u64,
) -> Result<Vec<AssociationSet>> {
    let mut out = Vec::new();
    for &beta in betas {
        let b = local.get(beta).ok_or(Error::UnknownObject {
            id: beta,
            side: "local",
        })?;
        for g in global.objects() {
            if g.class_label != b.class_label {
                continue;
            }
            if let (Some(fg), Some(fb)) = (g.descriptor.as_ref(), b.descriptor.as_ref()) {
                if descriptor_distance(fg, fb)? >= params.delta {
                    continue;
                }
            }
            out.push(AssociationSet::singleton(g.id, beta, epoch));
        }
    }
    Ok(out)
}

/// Attempts to merge two hypothesis sets.
///
/// Returns the merged set when (a) neither set contains the other, (b) the
/// union claims no global or local object twice, and (c) every cross pair
/// passes the `gamma` ratio test. The merged score is the canonical pairwise
/// sum over the union. Symmetric in its two set arguments.
pub fn try_merge(
    d1: &AssociationSet,
    d2: &AssociationSet,
    global: &ObjectMap,
    local: &ObjectMap,
    params: &ClusterParams,
    epoch: u64,
) -> Result<Option<AssociationSet>> {
    if d1.consumed || d2.consumed {
        return Ok(None);
    }
    let left = d1.difference(d2);
    let right = d2.difference(d1);
    if left.is_empty() || right.is_empty() {
        // Containment: no new object pairs can be formed.
        return Ok(None);
    }

    let mut union = d1.pairs.clone();
    union.extend(right.iter().copied());
    union.sort_unstable();
    if !is_injective(&union) {
        return Ok(None);
    }

    for p in &left {
        for q in &right {
            let d_global = map_distance(global, p.alpha, q.alpha, "global")?;
            let d_local = map_distance(local, p.beta, q.beta, "local")?;
            if merge_metric(d_global, d_local, params.epsilon_distance) <= params.gamma {
                return Ok(None);
            }
        }
    }

    let score = canonical_score(&union, global, local, params)?;
    Ok(Some(AssociationSet {
        pairs: union,
        score,
        consumed: false,
        created_epoch: epoch,
        last_merge_epoch: epoch,
    }))
}

fn canonical_order(a: &AssociationSet, b: &AssociationSet) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| b.pairs.len().cmp(&a.pairs.len()))
        .then_with(|| a.pairs.cmp(&b.pairs))
}

/// All live association sets plus the clustering bookkeeping.
#[derive(Debug, Clone)]
pub struct AssociationPool {
    sets: Vec<AssociationSet>,
    epoch: u64,
    params: ClusterParams,
}

impl AssociationPool {
    pub fn new(params: ClusterParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            sets: Vec::new(),
            epoch: 0,
            params,
        })
    }

    /// Sets in canonical order: score descending, cardinality descending,
    /// pair list ascending.
    pub fn sets(&self) -> &[AssociationSet] {
        &self.sets
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn params(&self) -> &ClusterParams {
        &self.params
    }

    /// Incorporates newly observed local objects: forms their singleton
    /// hypotheses (skipping pair lists the pool already holds) and runs a
    /// clustering epoch.
    pub fn update(
        &mut self,
        global: &ObjectMap,
        local: &ObjectMap,
        new_local_ids: &[ObjectId],
    ) -> Result<()> {
        for &id in new_local_ids {
            if !local.contains(id) {
                return Err(Error::UnknownObject { id, side: "local" });
            }
        }
        self.epoch += 1;
        let mut known: HashSet<Vec<(ObjectId, ObjectId)>> =
            self.sets.iter().map(AssociationSet::key).collect();
        for singleton in singletons_for(global, local, new_local_ids, &self.params, self.epoch)? {
            if known.insert(singleton.key()) {
                self.sets.push(singleton);
            }
        }
        self.cluster_epoch(global, local)
    }

    /// Merges to a fixed point, then prunes and re-sorts the pool.
    ///
    /// Each pass attempts every unordered pair of sets that were unconsumed
    /// when the pass started; successful merges mark both parents consumed
    /// and enqueue the union unless its pair list already exists. Passes
    /// repeat over the enlarged pool until one contributes no new set.
    /// Afterwards duplicates collapse, idle non-singleton sets are dropped,
    /// and the pool is capped at `cap_factor * |global|` sets; singletons
    /// whose local object still exists are exempt from pruning.
    pub fn cluster_epoch(&mut self, global: &ObjectMap, local: &ObjectMap) -> Result<()> {
        loop {
            let eligible: Vec<usize> = (0..self.sets.len())
                .filter(|&i| !self.sets[i].consumed)
                .collect();
            let mut known: HashSet<Vec<(ObjectId, ObjectId)>> =
                self.sets.iter().map(AssociationSet::key).collect();
            let mut merged_parents: Vec<usize> = Vec::new();
            let mut fresh: Vec<AssociationSet> = Vec::new();
            for (pos, &i) in eligible.iter().enumerate() {
                for &j in &eligible[pos + 1..] {
                    if let Some(merged) = try_merge(
                        &self.sets[i],
                        &self.sets[j],
                        global,
                        local,
                        &self.params,
                        self.epoch,
                    )? {
                        merged_parents.push(i);
                        merged_parents.push(j);
                        if known.insert(merged.key()) {
                            fresh.push(merged);
                        }
                    }
                }
            }
            for idx in merged_parents {
                self.sets[idx].consumed = true;
                self.sets[idx].last_merge_epoch = self.epoch;
            }
            if fresh.is_empty() {
                break;
            }
            self.sets.extend(fresh);
        }

        self.collapse_duplicates();
        self.prune(local, global);
        self.sets.sort_by(canonical_order);
        Ok(())
    }

    /// The winning hypothesis, if one dominates.
    ///
    /// Returns the top-scoring set when it has at least 3 pairs and either
    /// no other unconsumed set of 2+ pairs exists or the top score is at
    /// least `dominance_ratio` times the runner-up's.
    pub fn decide(&self) -> Option<&AssociationSet> {
        let top = self.sets.first()?;
        if top.len() < 3 {
            return None;
        }
        match self.sets[1..]
            .iter()
            .find(|s| !s.consumed && s.len() >= 2)
        {
            None => Some(top),
            Some(runner) => {
                (top.score >= self.params.dominance_ratio * runner.score).then_some(top)
            }
        }
    }

    /// The first `k` sets in canonical order (fewer if the pool is smaller).
    pub fn top_k(&self, k: usize) -> &[AssociationSet] {
        &self.sets[..k.min(self.sets.len())]
    }

    /// Snapshot format: `{epoch, sets: [{pairs, score, consumed,
    /// last_merge_epoch}]}`.
    pub fn to_json(&self) -> String {
        let snapshot = PoolSnapshot {
            epoch: self.epoch,
            sets: self
                .sets
                .iter()
                .map(|s| SetSnapshot {
                    pairs: s.key(),
                    score: s.score,
                    consumed: s.consumed,
                    last_merge_epoch: s.last_merge_epoch,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&snapshot).expect("pool serialization cannot fail")
    }

    /// Restores a pool from a snapshot; `params` are not part of the
    /// snapshot and must be supplied.
    pub fn from_json(text: &str, params: ClusterParams) -> Result<Self> {
        params.validate()?;
        let snapshot: PoolSnapshot =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        let mut sets = Vec::with_capacity(snapshot.sets.len());
        for s in snapshot.sets {
            let mut pairs: Vec<PairAssociation> = s
                .pairs
                .into_iter()
                .map(|(alpha, beta)| PairAssociation { alpha, beta })
                .collect();
            pairs.sort_unstable();
            if pairs.windows(2).any(|w| w[0] == w[1]) || !is_injective(&pairs) {
                return Err(Error::Format(
                    "snapshot set has duplicate or conflicting pairs".into(),
                ));
            }
            sets.push(AssociationSet {
                pairs,
                score: s.score,
                consumed: s.consumed,
                created_epoch: s.last_merge_epoch,
                last_merge_epoch: s.last_merge_epoch,
            });
        }
        sets.sort_by(canonical_order);
        Ok(Self {
            sets,
            epoch: snapshot.epoch,
            params,
        })
    }

    /// Exact-duplicate pair lists collapse into one entry, keeping the
    /// earliest creation, the latest merge, and the consumed mark.
    fn collapse_duplicates(&mut self) {
        use std::collections::HashMap;
        let mut first_at: HashMap<Vec<(ObjectId, ObjectId)>, usize> = HashMap::new();
        let mut keep = vec![true; self.sets.len()];
        for idx in 0..self.sets.len() {
            let key = self.sets[idx].key();
            match first_at.get(&key) {
                None => {
                    first_at.insert(key, idx);
                }
                Some(&prev) => {
                    keep[idx] = false;
                    let (score, consumed, created, merged) = {
                        let dup = &self.sets[idx];
                        (dup.score, dup.consumed, dup.created_epoch, dup.last_merge_epoch)
                    };
                    let kept = &mut self.sets[prev];
                    kept.score = kept.score.max(score);
                    kept.consumed |= consumed;
                    kept.created_epoch = kept.created_epoch.min(created);
                    kept.last_merge_epoch = kept.last_merge_epoch.max(merged);
                }
            }
        }
        let mut it = keep.iter();
        self.sets.retain(|_| *it.next().unwrap());
    }

    fn prune(&mut self, local: &ObjectMap, global: &ObjectMap) {
        let exempt =
            |s: &AssociationSet| s.is_singleton() && local.contains(s.pairs[0].beta);

        let epoch = self.epoch;
        let stale = self.params.stale_epochs;
        self.sets
            .retain(|s| exempt(s) || epoch.saturating_sub(s.last_merge_epoch) <= stale);

        let cap = self.params.cap_factor.saturating_mul(global.len());
        let over: usize = self.sets.iter().filter(|s| !exempt(s)).count();
        if over > cap {
            let mut capped: Vec<&AssociationSet> =
                self.sets.iter().filter(|s| !exempt(s)).collect();
            capped.sort_by(|a, b| canonical_order(a, b));
            let cut: HashSet<Vec<(ObjectId, ObjectId)>> = capped[cap..]
                .iter()
                .map(|s| s.key())
                .collect();
            self.sets.retain(|s| exempt(s) || !cut.contains(&s.key()));
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PoolSnapshot {
    epoch: u64,
    sets: Vec<SetSnapshot>,
}

#[derive(Serialize, Deserialize)]
struct SetSnapshot {
    pairs: Vec<(ObjectId, ObjectId)>,
    score: f64,
    consumed: bool,
    last_merge_epoch: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::ObjectRecord;
    use nalgebra::Vector3;

    fn map_with(entries: &[(ObjectId, &str, [f64; 3])]) -> ObjectMap {
        let objects = entries
            .iter()
            .map(|(id, class, p)| {
                ObjectRecord::new(*id, *class, Vector3::new(p[0], p[1], p[2]))
            })
            .collect();
        ObjectMap::new(objects, 4).unwrap()
    }

    fn set_of(pairs: &[(ObjectId, ObjectId)], global: &ObjectMap, local: &ObjectMap) -> AssociationSet {
        let pairs = pairs
            .iter()
            .map(|&(alpha, beta)| PairAssociation { alpha, beta })
            .collect();
        AssociationSet::from_pairs(pairs, global, local, &ClusterParams::default()).unwrap()
    }

    #[test]
    fn merge_metric_examples() {
        assert_eq!(merge_metric(2.0, 2.0, 1e-6), 1.0);
        assert_eq!(merge_metric(1.0, 0.8, 1e-6), 0.8);
        assert_eq!(merge_metric(0.8, 1.0, 1e-6), 0.8);
        assert_eq!(merge_metric(1e-9, 3.0, 1e-6), 0.0);
        assert_eq!(merge_metric(3.0, 1e-9, 1e-6), 0.0);
        assert_eq!(merge_metric(1e-9, 1e-9, 1e-6), 1.0);
    }

    #[test]
    fn cross_pairs_counts() {
        let global = map_with(&[
            (1, "a", [0.0, 0.0, 0.0]),
            (2, "b", [1.0, 0.0, 0.0]),
            (3, "c", [0.0, 2.0, 0.0]),
        ]);
        let local = map_with(&[
            (1, "a", [0.0, 0.0, 0.0]),
            (2, "b", [1.0, 0.0, 0.0]),
            (3, "c", [0.0, 2.0, 0.0]),
        ]);

        let d12 = set_of(&[(1, 1), (2, 2)], &global, &local);
        let d3 = set_of(&[(3, 3)], &global, &local);
        assert_eq!(cross_pairs(&d12, &d3).len(), 2);

        let d23 = set_of(&[(2, 2), (3, 3)], &global, &local);
        let cp = cross_pairs(&d12, &d23);
        assert_eq!(cp.len(), 1);
        assert_eq!(cp[0].0, PairAssociation { alpha: 1, beta: 1 });
        assert_eq!(cp[0].1, PairAssociation { alpha: 3, beta: 3 });

        let d123 = set_of(&[(1, 1), (2, 2), (3, 3)], &global, &local);
        assert!(cross_pairs(&d12, &d123).is_empty());
    }

    #[test]
    fn init_singletons_class_filter() {
        let global = map_with(&[
            (1, "chair", [0.0, 0.0, 0.0]),
            (2, "chair", [2.0, 0.0, 0.0]),
            (3, "table", [0.0, 3.0, 0.0]),
        ]);
        let local = map_with(&[(1, "chair", [0.5, 0.5, 0.0])]);
        let singles = init_singletons(&global, &local, &ClusterParams::default()).unwrap();
        assert_eq!(singles.len(), 2);
        assert!(singles.iter().all(|s| s.score() == 0.0 && !s.consumed()));

        let lonely = map_with(&[(1, "plant", [0.0, 0.0, 0.0])]);
        let none = init_singletons(&global, &lonely, &ClusterParams::default()).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn init_singletons_descriptor_gate() {
        // Unit descriptors with Euclidean distance 0.6, above the 0.5 gate.
        let theta = 2.0 * (0.3_f64).asin();
        let g = ObjectRecord::new(1, "chair", Vector3::zeros())
            .with_descriptor(vec![1.0, 0.0]);
        let l = ObjectRecord::new(1, "chair", Vector3::zeros())
            .with_descriptor(vec![theta.cos(), theta.sin()]);
        let global = ObjectMap::new(vec![g], 2).unwrap();
        let local = ObjectMap::new(vec![l], 2).unwrap();
        let d = descriptor_distance(
            global.get(1).unwrap().descriptor.as_ref().unwrap(),
            local.get(1).unwrap().descriptor.as_ref().unwrap(),
        )
        .unwrap();
        assert!((d - 0.6).abs() < 1e-12);
        let singles = init_singletons(&global, &local, &ClusterParams::default()).unwrap();
        assert!(singles.is_empty());

        // Without descriptors the gate is skipped.
        let g = ObjectRecord::new(1, "chair", Vector3::zeros());
        let l = ObjectRecord::new(1, "chair", Vector3::zeros());
        let global = ObjectMap::new(vec![g], 2).unwrap();
        let local = ObjectMap::new(vec![l], 2).unwrap();
        let singles = init_singletons(&global, &local, &ClusterParams::default()).unwrap();
        assert_eq!(singles.len(), 1);
    }

    #[test]
    fn try_merge_translated_copy() {
        let global = map_with(&[(1, "a", [0.0, 0.0, 0.0]), (2, "b", [2.0, 0.0, 0.0])]);
        let local = map_with(&[(1, "a", [1.0, 1.0, 0.0]), (2, "b", [3.0, 1.0, 0.0])]);
        let params = ClusterParams::default();
        let d1 = AssociationSet::singleton(1, 1, 0);
        let d2 = AssociationSet::singleton(2, 2, 0);
        let merged = try_merge(&d1, &d2, &global, &local, &params, 1)
            .unwrap()
            .expect("equal distances must merge");
        assert_eq!(merged.len(), 2);
        assert_eq!(merged.score(), 1.0);
        assert_eq!(merged.last_merge_epoch(), 1);

        // Symmetry.
        let swapped = try_merge(&d2, &d1, &global, &local, &params, 1)
            .unwrap()
            .unwrap();
        assert_eq!(swapped.pairs(), merged.pairs());
        assert_eq!(swapped.score(), merged.score());
    }

    #[test]
    fn try_merge_ratio_below_gamma() {
        let global = map_with(&[(1, "a", [0.0, 0.0, 0.0]), (2, "b", [2.0, 0.0, 0.0])]);
        let local = map_with(&[(1, "a", [1.0, 1.0, 0.0]), (2, "b", [2.0, 1.0, 0.0])]);
        let d1 = AssociationSet::singleton(1, 1, 0);
        let d2 = AssociationSet::singleton(2, 2, 0);
        let merged = try_merge(&d1, &d2, &global, &local, &ClusterParams::default(), 1).unwrap();
        assert!(merged.is_none(), "h = 0.5 is below gamma");
    }

    #[test]
    fn try_merge_rejects_conflicting_assignment() {
        let global = map_with(&[(1, "a", [0.0, 0.0, 0.0]), (2, "a", [2.0, 0.0, 0.0])]);
        let local = map_with(&[(1, "a", [0.0, 0.0, 0.0])]);
        let d1 = AssociationSet::singleton(1, 1, 0);
        let d2 = AssociationSet::singleton(2, 1, 0);
        let merged = try_merge(&d1, &d2, &global, &local, &ClusterParams::default(), 1).unwrap();
        assert!(merged.is_none());
    }

    #[test]
    fn try_merge_rejects_containment() {
        let global = map_with(&[(1, "a", [0.0, 0.0, 0.0]), (2, "b", [2.0, 0.0, 0.0])]);
        let local = map_with(&[(1, "a", [0.0, 0.0, 0.0]), (2, "b", [2.0, 0.0, 0.0])]);
        let big = set_of(&[(1, 1), (2, 2)], &global, &local);
        let small = set_of(&[(1, 1)], &global, &local);
        assert!(try_merge(&big, &small, &global, &local, &ClusterParams::default(), 1)
            .unwrap()
            .is_none());
        assert!(try_merge(&big, &big.clone(), &global, &local, &ClusterParams::default(), 1)
            .unwrap()
            .is_none());
    }

    #[test]
    fn try_merge_missing_object_is_inconsistent_pool() {
        let global = map_with(&[(1, "a", [0.0, 0.0, 0.0]), (2, "b", [2.0, 0.0, 0.0])]);
        let local = map_with(&[(1, "a", [0.0, 0.0, 0.0]), (2, "b", [2.0, 0.0, 0.0])]);
        let d1 = AssociationSet::singleton(9, 1, 0); // alpha 9 does not exist
        let d2 = AssociationSet::singleton(2, 2, 0);
        assert!(matches!(
            try_merge(&d1, &d2, &global, &local, &ClusterParams::default(), 1),
            Err(Error::InconsistentPool { id: 9, side: "global" })
        ));
    }

    /// L-shaped scene under a rigid transform: clustering must converge to
    /// the full three-pair set with score 3 (all ratios exactly 1).
    #[test]
    fn l_shaped_scene_clusters_to_full_set() {
        let global = map_with(&[
            (1, "a", [0.0, 0.0, 0.0]),
            (2, "b", [2.0, 0.0, 0.0]),
            (3, "c", [0.0, 1.0, 0.0]),
        ]);
        // Rotate 90 degrees about z, then translate by (5, 5, 0).
        let rot = |p: [f64; 3]| [-p[1] + 5.0, p[0] + 5.0, p[2]];
        let local = map_with(&[
            (1, "a", rot([0.0, 0.0, 0.0])),
            (2, "b", rot([2.0, 0.0, 0.0])),
            (3, "c", rot([0.0, 1.0, 0.0])),
        ]);
        let mut pool = AssociationPool::new(ClusterParams::default()).unwrap();
        pool.update(&global, &local, &[1, 2, 3]).unwrap();
        let top = &pool.sets()[0];
        assert_eq!(top.len(), 3);
        assert!((top.score() - 3.0).abs() < 1e-12);
        assert_eq!(
            top.pairs(),
            &[
                PairAssociation { alpha: 1, beta: 1 },
                PairAssociation { alpha: 2, beta: 2 },
                PairAssociation { alpha: 3, beta: 3 },
            ]
        );
        assert_eq!(pool.decide().unwrap().pairs(), top.pairs());
    }

    #[test]
    fn cluster_epoch_two_compatible_singletons() {
        let global = map_with(&[(1, "a", [0.0, 0.0, 0.0]), (2, "b", [2.0, 0.0, 0.0])]);
        let local = map_with(&[(1, "a", [0.0, 0.0, 0.0]), (2, "b", [2.0, 0.0, 0.0])]);
        let mut pool = AssociationPool::new(ClusterParams::default()).unwrap();
        pool.update(&global, &local, &[1, 2]).unwrap();
        assert_eq!(pool.sets().len(), 3);
        let merged: Vec<_> = pool.sets().iter().filter(|s| s.len() == 2).collect();
        assert_eq!(merged.len(), 1);
        assert!(!merged[0].consumed());
        assert!(pool
            .sets()
            .iter()
            .filter(|s| s.is_singleton())
            .all(|s| s.consumed()));
    }

    #[test]
    fn cluster_epoch_three_mutually_compatible() {
        let global = map_with(&[
            (1, "a", [0.0, 0.0, 0.0]),
            (2, "b", [2.0, 0.0, 0.0]),
            (3, "c", [0.0, 3.0, 0.0]),
        ]);
        let local = map_with(&[
            (1, "a", [1.0, 0.0, 0.0]),
            (2, "b", [3.0, 0.0, 0.0]),
            (3, "c", [1.0, 3.0, 0.0]),
        ]);
        let mut pool = AssociationPool::new(ClusterParams::default()).unwrap();
        pool.update(&global, &local, &[1, 2, 3]).unwrap();
        let top = &pool.sets()[0];
        assert_eq!(top.len(), 3);
        assert!((top.score() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn ambiguous_identical_chairs_stay_undecided() {
        let global = map_with(&[(1, "chair", [0.0, 0.0, 0.0]), (2, "chair", [4.0, 0.0, 0.0])]);
        let local = map_with(&[(1, "chair", [0.0, 0.0, 0.0])]);
        let mut pool = AssociationPool::new(ClusterParams::default()).unwrap();
        pool.update(&global, &local, &[1]).unwrap();
        assert_eq!(pool.sets().len(), 2);
        assert!(pool.sets().iter().all(|s| s.is_singleton() && !s.consumed()));
        assert!(pool.decide().is_none());
    }

    /// A unique object breaks the two-chair ambiguity: the merged set on
    /// the correct side becomes the unique top-score set.
    #[test]
    fn new_unique_object_disambiguates() {
        let global = map_with(&[
            (1, "chair", [0.0, 0.0, 0.0]),
            (2, "chair", [10.0, 0.0, 0.0]),
            (3, "table", [0.0, 2.0, 0.0]),
        ]);
        let local = map_with(&[(1, "chair", [0.0, 0.0, 0.0]), (2, "table", [0.0, 2.0, 0.0])]);
        let mut pool = AssociationPool::new(ClusterParams::default()).unwrap();
        pool.update(&global, &local, &[1]).unwrap();
        assert!(pool.decide().is_none());

        pool.update(&global, &local, &[2]).unwrap();
        let top = &pool.sets()[0];
        assert_eq!(
            top.pairs(),
            &[
                PairAssociation { alpha: 1, beta: 1 },
                PairAssociation { alpha: 3, beta: 2 },
            ]
        );
        assert!((top.score() - 1.0).abs() < 1e-12);
        // The wrong-side chair singleton must still be around, unmerged.
        assert!(pool
            .sets()
            .iter()
            .any(|s| s.is_singleton() && s.pairs()[0].alpha == 2 && !s.consumed()));
    }

    #[test]
    fn empty_update_increments_epoch_and_prunes_stale() {
        let global = map_with(&[(1, "a", [0.0, 0.0, 0.0]), (2, "b", [2.0, 0.0, 0.0])]);
        let local = map_with(&[(1, "a", [0.0, 0.0, 0.0]), (2, "b", [2.0, 0.0, 0.0])]);
        let mut pool = AssociationPool::new(ClusterParams::default()).unwrap();
        pool.update(&global, &local, &[1, 2]).unwrap();
        assert_eq!(pool.epoch(), 1);
        assert!(pool.sets().iter().any(|s| s.len() == 2));

        // stale_epochs = 2: the merged set created at epoch 1 survives
        // epochs 2 and 3 and is dropped at epoch 4. Singletons persist.
        for expected_epoch in 2..=3 {
            pool.update(&global, &local, &[]).unwrap();
            assert_eq!(pool.epoch(), expected_epoch);
            assert!(pool.sets().iter().any(|s| s.len() == 2));
        }
        pool.update(&global, &local, &[]).unwrap();
        assert_eq!(pool.epoch(), 4);
        assert!(pool.sets().iter().all(|s| s.is_singleton()));
        assert_eq!(pool.sets().len(), 2);
    }

    #[test]
    fn update_rejects_unknown_id() {
        let global = map_with(&[(1, "a", [0.0, 0.0, 0.0])]);
        let local = map_with(&[(1, "a", [0.0, 0.0, 0.0])]);
        let mut pool = AssociationPool::new(ClusterParams::default()).unwrap();
        assert!(matches!(
            pool.update(&global, &local, &[7]),
            Err(Error::UnknownObject { id: 7, side: "local" })
        ));
    }

    #[test]
    fn update_bootstrap_matches_init_plus_epoch() {
        let global = map_with(&[(1, "a", [0.0, 0.0, 0.0]), (2, "b", [2.0, 0.0, 0.0])]);
        let local = map_with(&[(1, "a", [1.0, 0.0, 0.0]), (2, "b", [3.0, 0.0, 0.0])]);

        let mut via_update = AssociationPool::new(ClusterParams::default()).unwrap();
        via_update.update(&global, &local, &[1, 2]).unwrap();

        let mut manual = AssociationPool::new(ClusterParams::default()).unwrap();
        manual.epoch = 1;
        manual.sets = init_singletons(&global, &local, manual.params()).unwrap();
        for s in &mut manual.sets {
            s.created_epoch = 1;
            s.last_merge_epoch = 1;
        }
        manual.cluster_epoch(&global, &local).unwrap();

        let keys =
            |p: &AssociationPool| p.sets().iter().map(AssociationSet::key).collect::<Vec<_>>();
        assert_eq!(keys(&via_update), keys(&manual));
    }

    #[test]
    fn decide_dominance_gates() {
        let global = map_with(&[
            (1, "a", [0.0, 0.0, 0.0]),
            (2, "b", [2.0, 0.0, 0.0]),
            (3, "c", [0.0, 3.0, 0.0]),
            (4, "d", [5.0, 5.0, 0.0]),
            (5, "e", [9.0, 1.0, 0.0]),
        ]);
        let local = global.clone();
        let mk = |pairs: &[(ObjectId, ObjectId)], score: f64, consumed: bool| {
            let mut s = set_of(pairs, &global, &local);
            s.score = score;
            s.consumed = consumed;
            s
        };

        // Top 3.0 vs runner-up 1.0 with ratio 1.5: decided.
        let mut pool = AssociationPool::new(ClusterParams::default()).unwrap();
        pool.sets = vec![
            mk(&[(1, 1), (2, 2), (3, 3)], 3.0, false),
            mk(&[(4, 4), (5, 5)], 1.0, false),
        ];
        pool.sets.sort_by(canonical_order);
        assert!(pool.decide().is_some());

        // 3.0 vs 2.9 fails dominance.
        let mut pool = AssociationPool::new(ClusterParams::default()).unwrap();
        pool.sets = vec![
            mk(&[(1, 1), (2, 2), (3, 3)], 3.0, false),
            mk(&[(4, 4), (5, 5)], 2.9, false),
        ];
        pool.sets.sort_by(canonical_order);
        assert!(pool.decide().is_none());

        // Consumed runner-ups do not block the decision.
        let mut pool = AssociationPool::new(ClusterParams::default()).unwrap();
        pool.sets = vec![
            mk(&[(1, 1), (2, 2), (3, 3)], 3.0, false),
            mk(&[(4, 4), (5, 5)], 2.9, true),
        ];
        pool.sets.sort_by(canonical_order);
        assert!(pool.decide().is_some());

        // Only singletons: cardinality gate.
        let mut pool = AssociationPool::new(ClusterParams::default()).unwrap();
        pool.sets = vec![mk(&[(1, 1)], 0.0, false), mk(&[(2, 2)], 0.0, false)];
        pool.sets.sort_by(canonical_order);
        assert!(pool.decide().is_none());
    }

    #[test]
    fn top_k_slices_canonical_order() {
        let global = map_with(&[
            (1, "a", [0.0, 0.0, 0.0]),
            (2, "b", [2.0, 0.0, 0.0]),
            (3, "c", [0.0, 3.0, 0.0]),
        ]);
        let local = map_with(&[
            (1, "a", [0.0, 0.0, 0.0]),
            (2, "b", [2.0, 0.0, 0.0]),
            (3, "c", [0.0, 3.0, 0.0]),
        ]);
        let mut pool = AssociationPool::new(ClusterParams::default()).unwrap();
        pool.update(&global, &local, &[1, 2, 3]).unwrap();
        assert_eq!(pool.top_k(1).len(), 1);
        assert_eq!(pool.top_k(1)[0].len(), 3);
        assert_eq!(pool.top_k(1000).len(), pool.sets().len());
        for w in pool.sets().windows(2) {
            assert!(canonical_order(&w[0], &w[1]) != std::cmp::Ordering::Greater);
        }
    }

    #[test]
    fn pool_cap_keeps_singletons() {
        let global = map_with(&[(1, "a", [0.0, 0.0, 0.0]), (2, "b", [2.0, 0.0, 0.0])]);
        let local = map_with(&[(1, "a", [0.0, 0.0, 0.0]), (2, "b", [2.0, 0.0, 0.0])]);
        let params = ClusterParams {
            cap_factor: 1,
            ..ClusterParams::default()
        };
        let mut pool = AssociationPool::new(params).unwrap();
        pool.update(&global, &local, &[1, 2]).unwrap();
        // Cap = 2: merged set fits; both singletons are exempt and stay.
        assert_eq!(pool.sets().len(), 3);
        assert_eq!(pool.sets().iter().filter(|s| s.is_singleton()).count(), 2);
    }

    #[test]
    fn snapshot_round_trip() {
        let global = map_with(&[(1, "a", [0.0, 0.0, 0.0]), (2, "b", [2.0, 0.0, 0.0])]);
        let local = map_with(&[(1, "a", [0.0, 0.0, 0.0]), (2, "b", [2.0, 0.0, 0.0])]);
        let mut pool = AssociationPool::new(ClusterParams::default()).unwrap();
        pool.update(&global, &local, &[1, 2]).unwrap();

        let text = pool.to_json();
        let restored = AssociationPool::from_json(&text, ClusterParams::default()).unwrap();
        assert_eq!(restored.epoch(), pool.epoch());
        assert_eq!(restored.sets().len(), pool.sets().len());
        for (a, b) in restored.sets().iter().zip(pool.sets()) {
            assert_eq!(a.key(), b.key());
            assert_eq!(a.score(), b.score());
            assert_eq!(a.consumed(), b.consumed());
        }

        assert!(AssociationPool::from_json("[]", ClusterParams::default()).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ClusterParams::default().validate().is_ok());
        for bad in [
            ClusterParams { gamma: 0.0, ..Default::default() },
            ClusterParams { gamma: 1.0, ..Default::default() },
            ClusterParams { delta: 0.0, ..Default::default() },
            ClusterParams { cap_factor: 0, ..Default::default() },
            ClusterParams { epsilon_distance: 0.0, ..Default::default() },
            ClusterParams { dominance_ratio: 1.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
