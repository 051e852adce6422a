//! Exhaustive matching oracle.
//!
//! Enumerates every injective partial matching that passes the class and
//! descriptor gates, keeps those whose internal object pairs all satisfy
//! the distance-ratio threshold, and returns the best by (score,
//! cardinality, lexicographic pair list). Exponential by nature; guarded by
//! a local-map size limit. This is the independent check for the
//! clustering engine — it searches by brute force instead of merging.

use objloc_core::{AssociationSet, ClusterParams, ObjectId, ObjectMap, PairAssociation};

use crate::error::{Result, SimError};

/// Largest local map the default oracle entry point accepts.
pub const DEFAULT_ORACLE_LIMIT: usize = 8;

pub fn oracle_best_matching(
    global: &ObjectMap,
    local: &ObjectMap,
    params: &ClusterParams,
) -> Result<AssociationSet> {
    oracle_best_matching_with_limit(global, local, params, DEFAULT_ORACLE_LIMIT)
}

pub fn oracle_best_matching_with_limit(
    global: &ObjectMap,
    local: &ObjectMap,
    params: &ClusterParams,
    limit: usize,
) -> Result<AssociationSet> {
    if local.len() > limit {
        return Err(SimError::OracleTooLarge {
            got: local.len(),
            limit,
        });
    }

    // Gate candidates per local object, in id order for determinism.
    let mut locals: Vec<&objloc_core::ObjectRecord> = local.objects().iter().collect();
    locals.sort_by_key(|o| o.id);
    let candidates: Vec<Vec<ObjectId>> = locals
        .iter()
        .map(|l| {
            let mut alphas: Vec<ObjectId> = global
                .objects()
                .iter()
                .filter(|g| gates_pass(g, l, params))
                .map(|g| g.id)
                .collect();
            alphas.sort_unstable();
            alphas
        })
        .collect();

    let mut search = Search {
        global,
        local,
        params,
        locals: &locals,
        candidates: &candidates,
        assigned: Vec::new(),
        best: (f64::NEG_INFINITY, 0, Vec::new()),
    };
    search.descend(0);
    let (_, _, pairs) = search.best;
    Ok(AssociationSet::from_pairs(pairs, global, local, params)?)
}

fn gates_pass(
    g: &objloc_core::ObjectRecord,
    l: &objloc_core::ObjectRecord,
    params: &ClusterParams,
) -> bool {
    if g.class_label != l.class_label {
        return false;
    }
    match (g.descriptor.as_ref(), l.descriptor.as_ref()) {
        (Some(a), Some(b)) if a.len() == b.len() => {
            let dist = a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            dist < params.delta
        }
        _ => true,
    }
}

struct Search<'a> {
    global: &'a ObjectMap,
    local: &'a ObjectMap,
    params: &'a ClusterParams,
    locals: &'a [&'a objloc_core::ObjectRecord],
    candidates: &'a [Vec<ObjectId>],
    assigned: Vec<PairAssociation>,
    /// (score, cardinality, pairs) of the best candidate so far.
    best: (f64, usize, Vec<PairAssociation>),
}

impl Search<'_> {
    fn descend(&mut self, depth: usize) {
        if depth == self.locals.len() {
            self.offer_current();
            return;
        }
        // Skip this local object.
        self.descend(depth + 1);
        // Or assign it to any unused, pairwise-consistent candidate.
        let beta = self.locals[depth].id;
        for idx in 0..self.candidates[depth].len() {
            let alpha = self.candidates[depth][idx];
            if self.assigned.iter().any(|p| p.alpha == alpha) {
                continue;
            }
            if !self.consistent_with_assigned(alpha, beta) {
                continue;
            }
            self.assigned.push(PairAssociation { alpha, beta });
            self.descend(depth + 1);
            self.assigned.pop();
        }
    }

    /// Internal-pair consistency of the candidate against every pair already
    /// assigned; exact pruning because consistency is subset-closed.
    fn consistent_with_assigned(&self, alpha: ObjectId, beta: ObjectId) -> bool {
        for p in &self.assigned {
            let dg = self
                .global
                .distance_between(p.alpha, alpha)
                .expect("gated ids exist");
            let dl = self
                .local
                .distance_between(p.beta, beta)
                .expect("gated ids exist");
            if ratio_metric(dg, dl, self.params.epsilon_distance) <= self.params.gamma {
                return false;
            }
        }
        true
    }

    fn offer_current(&mut self) {
        let mut pairs = self.assigned.clone();
        pairs.sort_unstable();
        let score = matching_score(&pairs, self.global, self.local, self.params);
        let cardinality = pairs.len();
        let better = score > self.best.0
            || (score == self.best.0 && cardinality > self.best.1)
            || (score == self.best.0 && cardinality == self.best.1 && pairs < self.best.2);
        if better || self.best.0 == f64::NEG_INFINITY {
            self.best = (score, cardinality, pairs);
        }
    }
}

/// Distance-ratio metric, written out independently of the engine.
fn ratio_metric(d_global: f64, d_local: f64, epsilon: f64) -> f64 {
    if d_global < epsilon && d_local < epsilon {
        1.0
    } else if d_global < epsilon || d_local < epsilon {
        0.0
    } else {
        (d_local / d_global).min(d_global / d_local)
    }
}

/// Sum of the ratio metric over all internal pairs, in canonical order.
fn matching_score(
    pairs: &[PairAssociation],
    global: &ObjectMap,
    local: &ObjectMap,
    params: &ClusterParams,
) -> f64 {
    let mut total = 0.0;
    for i in 0..pairs.len() {
        for j in (i + 1)..pairs.len() {
            let dg = global
                .distance_between(pairs[i].alpha, pairs[j].alpha)
                .expect("gated ids exist");
            let dl = local
                .distance_between(pairs[i].beta, pairs[j].beta)
                .expect("gated ids exist");
            total += ratio_metric(dg, dl, params.epsilon_distance);
        }
    }
    total
}
