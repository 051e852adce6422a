//! Synthetic scene generation.
//!
//! Objects are placed uniformly in a box with a minimum pairwise separation
//! (so the distance-ratio tests stay well posed under bounded noise), and
//! descriptors are drawn as a per-class prototype plus bounded intra-class
//! noise, renormalized to unit length.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use objloc_core::{ObjectId, ObjectMap, ObjectRecord};

use crate::error::{Result, SimError};

/// Axis-aligned box, meters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Extent {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Extent {
    pub fn volume(&self) -> f64 {
        (0..3).map(|k| self.max[k] - self.min[k]).product()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vector3<f64> {
        Vector3::new(
            rng.random_range(self.min[0]..=self.max[0]),
            rng.random_range(self.min[1]..=self.max[1]),
            rng.random_range(self.min[2]..=self.max[2]),
        )
    }

    /// Bounding box of a map's object positions.
    pub fn around(map: &ObjectMap) -> Extent {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for o in map.objects() {
            for k in 0..3 {
                min[k] = min[k].min(o.position[k]);
                max[k] = max[k].max(o.position[k]);
            }
        }
        Extent { min, max }
    }
}

/// One catalog entry: a class label and how many instances of it to place.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassCount {
    pub label: String,
    pub count: usize,
}

/// Scene generation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    pub n_objects: usize,
    /// Class labels with repetition counts; counts must sum to `n_objects`.
    pub class_catalog: Vec<ClassCount>,
    pub extent: Extent,
    pub descriptor_dim: usize,
    /// Intra-class descriptor noise radius (pre-normalization).
    pub class_descriptor_spread: f64,
    /// Minimum pairwise object separation, meters; keeps the oracle and the
    /// ratio tests well posed under bounded position noise.
    #[serde(default = "default_min_separation")]
    pub min_separation: f64,
    pub seed: u64,
}

fn default_min_separation() -> f64 {
    0.5
}

/// Ground-truth side information about a generated scene.
#[derive(Debug, Clone)]
pub struct SceneMeta {
    /// Unit-norm descriptor prototype per class label.
    pub prototypes: BTreeMap<String, Vec<f64>>,
    pub extent: Extent,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_objects < 2 {
            return Err(SimError::InvalidSpec {
                what: "n_objects",
                why: "need at least 2 objects".into(),
            });
        }
        if self.extent.volume() <= 0.0 {
            return Err(SimError::InvalidSpec {
                what: "extent",
                why: "box must have positive volume".into(),
            });
        }
        let total: usize = self.class_catalog.iter().map(|c| c.count).sum();
        if total != self.n_objects {
            return Err(SimError::InvalidSpec {
                what: "class_catalog",
                why: format!("repetition counts sum to {total}, expected {}", self.n_objects),
            });
        }
        if self.descriptor_dim == 0 {
            return Err(SimError::InvalidSpec {
                what: "descriptor_dim",
                why: "must be positive".into(),
            });
        }
        if self.class_descriptor_spread < 0.0 || self.min_separation < 0.0 {
            return Err(SimError::InvalidSpec {
                what: "scene spec",
                why: "spread and separation must be non-negative".into(),
            });
        }
        Ok(())
    }

    /// Same catalog mix rescaled to `n` objects; used by ablation sweeps
    /// over the object count.
    pub fn with_n_objects(&self, n: usize) -> SceneSpec {
        let total: usize = self.class_catalog.iter().map(|c| c.count).sum::<usize>().max(1);
        let mut catalog: Vec<ClassCount> = self
            .class_catalog
            .iter()
            .map(|c| ClassCount {
                label: c.label.clone(),
                count: ((c.count * n) as f64 / total as f64).round() as usize,
            })
            .collect();
        // Fix rounding drift on the largest entry.
        let sum: usize = catalog.iter().map(|c| c.count).sum();
        if let Some(biggest) = catalog.iter_mut().max_by_key(|c| c.count) {
            biggest.count = (biggest.count + n).saturating_sub(sum).max(1);
        }
        catalog.retain(|c| c.count > 0);
        let n = catalog.iter().map(|c| c.count).sum();
        SceneSpec {
            n_objects: n,
            class_catalog: catalog,
            ..self.clone()
        }
    }
}

/// Uniform sample from the unit ball in `dim` dimensions.
pub(crate) fn unit_ball(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let radius = rng.random::<f64>().powf(1.0 / dim as f64);
    for x in &mut v {
        *x *= radius / norm;
    }
    v
}

pub(crate) fn random_unit_vector(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            for x in &mut v {
                *x /= norm;
            }
            return v;
        }
    }
}

pub(crate) fn perturbed_descriptor(
    rng: &mut impl Rng,
    base: &[f64],
    radius: f64,
) -> Vec<f64> {
    let noise = unit_ball(rng, base.len());
    let mut d: Vec<f64> = base
        .iter()
        .zip(&noise)
        .map(|(b, n)| b + n * radius)
        .collect();
    let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-9 {
        for x in &mut d {
            *x /= norm;
        }
    } else {
        d = base.to_vec();
    }
    d
}

/// Places the catalog's objects in the extent, deterministic under the seed.
pub fn generate_scene(spec: &SceneSpec) -> Result<(ObjectMap, SceneMeta)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut prototypes = BTreeMap::new();
    for entry in &spec.class_catalog {
        prototypes
            .entry(entry.label.clone())
            .or_insert_with(|| random_unit_vector(&mut rng, spec.descriptor_dim));
    }

    let labels: Vec<&str> = spec
        .class_catalog
        .iter()
        .flat_map(|c| std::iter::repeat_n(c.label.as_str(), c.count))
        .collect();

    const TRIES_PER_OBJECT: usize = 10_000;
    let mut positions: Vec<Vector3<f64>> = Vec::with_capacity(spec.n_objects);
    for placed in 0..spec.n_objects {
        let mut ok = false;
        for _ in 0..TRIES_PER_OBJECT {
            let p = spec.extent.sample(&mut rng);
            if positions
                .iter()
                .all(|q| (p - q).norm() >= spec.min_separation)
            {
                positions.push(p);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(SimError::InfeasibleSpec(format!(
                "could not place object {} of {} with separation {} m in the extent",
                placed + 1,
                spec.n_objects,
                spec.min_separation
            )));
        }
    }

    let objects: Vec<ObjectRecord> = labels
        .iter()
        .zip(&positions)
        .enumerate()
        .map(|(i, (label, p))| {
            let descriptor =
                perturbed_descriptor(&mut rng, &prototypes[*label], spec.class_descriptor_spread);
            ObjectRecord::new(i as ObjectId + 1, *label, *p).with_descriptor(descriptor)
        })
        .collect();

    let map = ObjectMap::new(objects, spec.descriptor_dim)?;
    let meta = SceneMeta {
        prototypes,
        extent: spec.extent.clone(),
    };
    Ok((map, meta))
}
