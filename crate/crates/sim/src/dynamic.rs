//! Dynamic-map perturbation: delete some objects, then move a fraction of
//! the remainder to new positions, modeling rearranged scenes.

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use objloc_core::{ObjectId, ObjectMap};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynamicSpec {
    pub delete_fraction: f64,
    /// Fraction of the remaining objects to move; the evaluation protocol
    /// requires at least 30%.
    pub move_fraction: f64,
    /// Displacement norm range (min, max), meters.
    pub move_distance_range: (f64, f64),
    pub seed: u64,
}

impl DynamicSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delete_fraction) {
            return Err(SimError::InvalidSpec {
                what: "delete_fraction",
                why: format!("{} is outside [0, 1]", self.delete_fraction),
            });
        }
        if !(0.3..=1.0).contains(&self.move_fraction) {
            return Err(SimError::InvalidSpec {
                what: "move_fraction",
                why: format!("{} is outside [0.3, 1]", self.move_fraction),
            });
        }
        let (lo, hi) = self.move_distance_range;
        if lo < 0.0 || hi < lo {
            return Err(SimError::InvalidSpec {
                what: "move_distance_range",
                why: format!("({lo}, {hi}) is not a valid range"),
            });
        }
        Ok(())
    }
}

/// Which objects the perturbation touched.
#[derive(Debug, Clone, Default)]
pub struct DynamicInfo {
    pub deleted: Vec<ObjectId>,
    pub moved: Vec<ObjectId>,
}

/// Deletes `floor(delete_fraction * n)` objects, then moves
/// `ceil(move_fraction * remaining)` of the rest by a random displacement
/// with norm inside `move_distance_range`. Deterministic under the seed.
pub fn make_dynamic(global: &ObjectMap, spec: &DynamicSpec) -> Result<(ObjectMap, DynamicInfo)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = global.len();

    // Guard the float products against representation error (0.3 * 10 is
    // slightly below 3 in f64).
    let delete_count = (spec.delete_fraction * n as f64 + 1e-9).floor() as usize;
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let (deleted_idx, remaining_idx) = indices.split_at(delete_count.min(n));

    let move_count = (spec.move_fraction * remaining_idx.len() as f64 - 1e-9).ceil() as usize;
    let mut remaining: Vec<usize> = remaining_idx.to_vec();
    remaining.shuffle(&mut rng);
    let moved_idx: Vec<usize> = remaining.iter().take(move_count).copied().collect();

    let (lo, hi) = spec.move_distance_range;
    let mut info = DynamicInfo {
        deleted: deleted_idx.iter().map(|&i| global.objects()[i].id).collect(),
        moved: Vec::with_capacity(moved_idx.len()),
    };

    let mut objects = Vec::with_capacity(n - deleted_idx.len());
    let mut displacements: Vec<(usize, Vector3<f64>)> = Vec::new();
    for &i in &moved_idx {
        let direction = loop {
            let v = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let norm = v.norm();
            if norm > 1e-6 && norm <= 1.0 {
                break v / norm;
            }
        };
        let distance = rng.random_range(lo..=hi);
        displacements.push((i, direction * distance));
        info.moved.push(global.objects()[i].id);
    }

    for (i, obj) in global.objects().iter().enumerate() {
        if deleted_idx.contains(&i) {
            continue;
        }
        let mut moved_obj = obj.clone();
        if let Some((_, d)) = displacements.iter().find(|(idx, _)| *idx == i) {
            moved_obj.position += d;
        }
        objects.push(moved_obj);
    }

    info.deleted.sort_unstable();
    info.moved.sort_unstable();
    let map = ObjectMap::new(objects, global.descriptor_dim())?;
    Ok((map, info))
}
