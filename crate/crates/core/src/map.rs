//! Object-level semantic maps.
//!
//! A map is a flat collection of object landmarks, each carrying a class
//! label, a 3D position, and optionally a unit-norm shape descriptor.
//! Pairwise object distances are the one relative quantity everything
//! downstream consumes, so they are cached at construction time.

use std::collections::HashMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of an object landmark, unique within its map.
pub type ObjectId = u32;

/// Tolerance used when validating cached distances and descriptor norms.
pub const DISTANCE_CACHE_TOL: f64 = 1e-9;

/// One object landmark: identity, semantic class, position, and optional
/// shape descriptor / raw sample points.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRecord {
    pub id: ObjectId,
    pub class_label: String,
    /// Object position in meters. When built from sample points this is
    /// their centroid.
    pub position: Vector3<f64>,
    /// Unit-normalized shape descriptor; `None` disables descriptor gating
    /// for this object.
    pub descriptor: Option<Vec<f64>>,
    /// Raw measured points, if the front end kept them.
    pub sample_points: Option<Vec<Vector3<f64>>>,
}

impl ObjectRecord {
    pub fn new(id: ObjectId, class_label: impl Into<String>, position: Vector3<f64>) -> Self {
        Self {
            id,
            class_label: class_label.into(),
            position,
            descriptor: None,
            sample_points: None,
        }
    }

    pub fn with_descriptor(mut self, descriptor: Vec<f64>) -> Self {
        self.descriptor = Some(descriptor);
        self
    }

    /// Builds a record whose position is the centroid of the measured points.
    pub fn from_sample_points(
        id: ObjectId,
        class_label: impl Into<String>,
        points: Vec<Vector3<f64>>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter {
                what: "sample_points",
                why: "cannot derive a position from zero points".into(),
            });
        }
        let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
        Ok(Self {
            id,
            class_label: class_label.into(),
            position: centroid,
            descriptor: None,
            sample_points: Some(points),
        })
    }
}

/// An immutable collection of object landmarks with a pairwise-distance cache.
///
/// Serves as both the global map (the prior) and the local map (the
/// incrementally observed scene). Construction validates ids, positions,
/// and descriptors; afterwards the map is read-only and freely shareable
/// across threads.
#[derive(Debug, Clone)]
pub struct ObjectMap {
    objects: Vec<ObjectRecord>,
    descriptor_dim: usize,
    /// Row-major `n x n` symmetric Euclidean distance matrix, meters.
    distances: Vec<f64>,
    index_by_id: HashMap<ObjectId, usize>,
}

impl ObjectMap {
    /// Validates the records, normalizes descriptors, and builds the
    /// distance cache.
    pub fn new(objects: Vec<ObjectRecord>, descriptor_dim: usize) -> Result<Self> {
        let mut index_by_id = HashMap::with_capacity(objects.len());
        let mut objects = objects;
        for (idx, obj) in objects.iter_mut().enumerate() {
            if index_by_id.insert(obj.id, idx).is_some() {
                return Err(Error::DuplicateObjectId { id: obj.id });
            }
            if !obj.position.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidParameter {
                    what: "position",
                    why: format!("object {} has a non-finite position", obj.id),
                });
            }
            if let Some(d) = obj.descriptor.as_mut() {
                if d.len() != descriptor_dim {
                    return Err(Error::DescriptorDimension {
                        expected: descriptor_dim,
                        got: d.len(),
                    });
                }
                normalize_descriptor(obj.id, d)?;
            }
        }

        let n = objects.len();
        let mut distances = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = (objects[i].position - objects[j].position).norm();
                distances[i * n + j] = d;
                distances[j * n + i] = d;
            }
        }

        Ok(Self {
            objects,
            descriptor_dim,
            distances,
            index_by_id,
        })
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn descriptor_dim(&self) -> usize {
        self.descriptor_dim
    }

    pub fn objects(&self) -> &[ObjectRecord] {
        &self.objects
    }

    pub fn object(&self, index: usize) -> Option<&ObjectRecord> {
        self.objects.get(index)
    }

    /// Looks up an object by id.
    pub fn get(&self, id: ObjectId) -> Option<&ObjectRecord> {
        self.index_by_id.get(&id).map(|&i| &self.objects[i])
    }

    pub fn index_of(&self, id: ObjectId) -> Option<usize> {
        self.index_by_id.get(&id).copied()
    }

    pub fn contains(&self, id: ObjectId) -> bool {
        self.index_by_id.contains_key(&id)
    }

    /// Cached Euclidean distance between the objects at indices `i` and `j`.
    pub fn pairwise_distance(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.objects.len();
        for index in [i, j] {
            if index >= n {
                return Err(Error::IndexOutOfRange { index, len: n });
            }
        }
        Ok(self.distances[i * n + j])
    }

    /// Cached distance between two objects addressed by id.
    pub fn distance_between(&self, a: ObjectId, b: ObjectId) -> Result<f64> {
        let side = "object";
        let i = self
            .index_of(a)
            .ok_or(Error::UnknownObject { id: a, side })?;
        let j = self
            .index_of(b)
            .ok_or(Error::UnknownObject { id: b, side })?;
        self.pairwise_distance(i, j)
    }

    /// Serializes to the scene JSON format.
    pub fn to_json(&self) -> String {
        let file = SceneFile {
            descriptor_dim: self.descriptor_dim,
            objects: self
                .objects
                .iter()
                .map(|o| SceneObject {
                    id: o.id,
                    class: o.class_label.clone(),
                    position: [o.position.x, o.position.y, o.position.z],
                    descriptor: o.descriptor.clone(),
                    points: o
                        .sample_points
                        .as_ref()
                        .map(|ps| ps.iter().map(|p| [p.x, p.y, p.z]).collect()),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("scene serialization cannot fail")
    }

    /// Parses the scene JSON format and validates the result.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: SceneFile =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        let objects = file
            .objects
            .into_iter()
            .map(|o| ObjectRecord {
                id: o.id,
                class_label: o.class,
                position: Vector3::new(o.position[0], o.position[1], o.position[2]),
                descriptor: o.descriptor,
                sample_points: o
                    .points
                    .map(|ps| ps.into_iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect()),
            })
            .collect();
        Self::new(objects, file.descriptor_dim)
    }
}

/// Euclidean distance between two descriptors of equal dimension.
pub fn descriptor_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DescriptorDimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

fn normalize_descriptor(id: ObjectId, d: &mut [f64]) -> Result<()> {
    let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm < 1e-12 {
        return Err(Error::InvalidParameter {
            what: "descriptor",
            why: format!("object {id} has a zero or non-finite descriptor"),
        });
    }
    for x in d.iter_mut() {
        *x /= norm;
    }
    Ok(())
}

/// Scene file schema: `{descriptor_dim, objects: [{id, class, position,
/// descriptor?, points?}]}`. Used for both global and local maps.
#[derive(Serialize, Deserialize)]
struct SceneFile {
    descriptor_dim: usize,
    objects: Vec<SceneObject>,
}

#[derive(Serialize, Deserialize)]
struct SceneObject {
    id: ObjectId,
    class: String,
    position: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    descriptor: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    points: Option<Vec<[f64; 3]>>,
}
