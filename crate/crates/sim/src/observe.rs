//! Incremental, noisy observation of a scene.
//!
//! The camera reveals the global map in keyframe batches. Revealed objects
//! are expressed in the local frame (the inverse of the ground-truth pose),
//! perturbed by bounded position and descriptor noise, and thinned by
//! dropouts; clutter objects model spurious detections that reuse catalog
//! classes so they can collide semantically.
//!
//! The whole observation plan is drawn up front from one seeded stream, so
//! requesting batch `k` and later batch `k+1` yields byte-identical
//! measurements for the shared prefix.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use objloc_core::{ObjectId, ObjectMap, ObjectRecord, Pose};

use crate::error::{Result, SimError};
use crate::scene::{unit_ball, Extent};

/// Observation process parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationSpec {
    /// Objects revealed per update (keyframe batches).
    pub batch_schedule: Vec<usize>,
    /// Bounded position noise: each observed position is offset by a vector
    /// drawn uniformly from a ball of this radius, meters.
    pub position_noise_radius: f64,
    /// Descriptor perturbation radius (renormalized afterwards).
    pub descriptor_noise: f64,
    /// Probability that a revealed object is missed entirely.
    pub dropout_rate: f64,
    /// Probability of one spurious detection per revealed slot.
    pub clutter_rate: f64,
    /// Ground-truth local-to-global transform.
    pub gt_pose: Pose,
    pub seed: u64,
}

impl ObservationSpec {
    pub fn validate(&self) -> Result<()> {
        for (what, rate) in [
            ("dropout_rate", self.dropout_rate),
            ("clutter_rate", self.clutter_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(SimError::InvalidSpec {
                    what,
                    why: format!("{rate} is outside [0, 1]"),
                });
            }
        }
        if self.position_noise_radius < 0.0 || self.descriptor_noise < 0.0 {
            return Err(SimError::InvalidSpec {
                what: "noise",
                why: "noise radii must be non-negative".into(),
            });
        }
        Ok(())
    }
}

/// A derived local map with bookkeeping for the benchmark.
#[derive(Debug, Clone)]
pub struct Observation {
    pub local: ObjectMap,
    /// Local ids that appeared in the requested batch.
    pub new_ids: Vec<ObjectId>,
    /// Ground truth: local id -> source global id (clutter has no entry).
    pub truth: BTreeMap<ObjectId, ObjectId>,
}

enum PlannedEntry {
    Reveal {
        global_index: usize,
        dropped: bool,
        position_noise: Vector3<f64>,
        descriptor_noise: Vec<f64>,
    },
    Clutter {
        source_index: usize,
        position: Vector3<f64>,
        descriptor_radius_noise: Vec<f64>,
    },
}

/// The cumulative local map after `upto_batch` batches (0 = nothing seen).
pub fn derive_observation(
    global: &ObjectMap,
    obs: &ObservationSpec,
    upto_batch: usize,
) -> Result<Observation> {
    obs.validate()?;
    if upto_batch > obs.batch_schedule.len() {
        return Err(SimError::InvalidSpec {
            what: "upto_batch",
            why: format!(
                "{upto_batch} exceeds the {}-batch schedule",
                obs.batch_schedule.len()
            ),
        });
    }

    let n = global.len();
    let dim = global.descriptor_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(obs.seed);

    let mut reveal_order: Vec<usize> = (0..n).collect();
    reveal_order.shuffle(&mut rng);

    // Plan every batch regardless of `upto_batch` so the random stream (and
    // therefore the shared prefix) is stable across calls.
    let bbox = Extent::around(global);
    let mut batches: Vec<Vec<PlannedEntry>> = Vec::with_capacity(obs.batch_schedule.len());
    let mut cursor = 0usize;
    for &batch_size in &obs.batch_schedule {
        let take = batch_size.min(n - cursor);
        let mut entries = Vec::new();
        for k in 0..take {
            let dropped = rng.random::<f64>() < obs.dropout_rate;
            let position_noise =
                Vector3::from_column_slice(&unit_ball(&mut rng, 3)) * obs.position_noise_radius;
            let descriptor_noise = unit_ball(&mut rng, dim);
            entries.push(PlannedEntry::Reveal {
                global_index: reveal_order[cursor + k],
                dropped,
                position_noise,
                descriptor_noise,
            });
        }
        cursor += take;
        for _ in 0..take {
            if rng.random::<f64>() < obs.clutter_rate {
                entries.push(PlannedEntry::Clutter {
                    source_index: rng.random_range(0..n),
                    position: bbox.sample(&mut rng),
                    descriptor_radius_noise: unit_ball(&mut rng, dim),
                });
            }
        }
        batches.push(entries);
    }

    let inverse_pose = obs.gt_pose.inverse();
    let mut objects: Vec<ObjectRecord> = Vec::new();
    let mut truth = BTreeMap::new();
    let mut new_ids = Vec::new();
    let mut next_id: ObjectId = 1;

    for (batch_index, entries) in batches.iter().take(upto_batch).enumerate() {
        for entry in entries {
            let record = match entry {
                PlannedEntry::Reveal {
                    global_index,
                    dropped,
                    position_noise,
                    descriptor_noise,
                } => {
                    if *dropped {
                        continue;
                    }
                    let source = &global.objects()[*global_index];
                    let position = inverse_pose.apply(&source.position) + position_noise;
                    let descriptor = source.descriptor.as_ref().map(|d| {
                        apply_descriptor_noise(d, descriptor_noise, obs.descriptor_noise)
                    });
                    truth.insert(next_id, source.id);
                    let mut rec =
                        ObjectRecord::new(next_id, source.class_label.clone(), position);
                    rec.descriptor = descriptor;
                    rec
                }
                PlannedEntry::Clutter {
                    source_index,
                    position,
                    descriptor_radius_noise,
                } => {
                    let source = &global.objects()[*source_index];
                    let descriptor = source.descriptor.as_ref().map(|d| {
                        apply_descriptor_noise(d, descriptor_radius_noise, obs.descriptor_noise)
                    });
                    let mut rec = ObjectRecord::new(
                        next_id,
                        source.class_label.clone(),
                        inverse_pose.apply(position),
                    );
                    rec.descriptor = descriptor;
                    rec
                }
            };
            if batch_index + 1 == upto_batch {
                new_ids.push(record.id);
            }
            objects.push(record);
            next_id += 1;
        }
    }

    let local = ObjectMap::new(objects, dim)?;
    Ok(Observation {
        local,
        new_ids,
        truth,
    })
}

fn apply_descriptor_noise(base: &[f64], ball: &[f64], radius: f64) -> Vec<f64> {
    let mut d: Vec<f64> = base
        .iter()
        .zip(ball)
        .map(|(b, n)| b + n * radius)
        .collect();
    let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-9 {
        for x in &mut d {
            *x /= norm;
        }
        d
    } else {
        base.to_vec()
    }
}
