//! Object-level edits: similarity transforms, deletion and relabeling.

use std::ops::Range;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::splat::SplatScene;

/// `x ↦ s·Q·(x − pivot) + pivot + t`; pivot defaults to the segment centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTransform {
    pub rotation: UnitQuaternion<f64>,
    pub scale: f64,
    pub translation: Vector3<f64>,
    #[serde(default)]
    pub pivot: Option<Vector3<f64>>,
}

impl Default for ObjectTransform {
    fn default() -> Self {
        ObjectTransform { rotation: UnitQuaternion::identity(), scale: 1.0, translation: Vector3::zeros(), pivot: None }
    }
}

impl ObjectTransform {
    pub fn translation(t: Vector3<f64>) -> Self {
        ObjectTransform { translation: t, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale must be positive, got {}", self.scale)));
        }
        let finite = |v: &Vector3<f64>| v.iter().all(|c| c.is_finite());
        if !finite(&self.translation) || self.pivot.as_ref().is_some_and(|p| !finite(p)) || !self.rotation.coords.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParameter("transform must be finite".into()));
        }
        Ok(())
    }

    /// Applies the map to a point, given the resolved pivot. Pure
    /// translations are exact.
    pub fn apply_point(&self, p: &Vector3<f64>, pivot: &Vector3<f64>) -> Vector3<f64> {
        let d = p - pivot;
        p + (self.scale * (self.rotation * d) - d) + self.translation
    }
}

/// Centroid of a segment's means.
pub fn segment_centroid(scene: &SplatScene, object_id: u32) -> Result<Vector3<f64>> {
    let idx = scene.object_indices(object_id);
    if idx.is_empty() {
        return Err(Error::NotFound(format!("object {object_id}")));
    }
    Ok(idx.iter().map(|&i| scene.kernels[i].mean).sum::<Vector3<f64>>() / idx.len() as f64)
}

/// Moves, rotates and uniformly scales one segment. Returns the pivot used.
pub fn transform_object(scene: &mut SplatScene, object_id: u32, transform: &ObjectTransform) -> Result<Vector3<f64>> {
    transform.validate()?;
    let pivot = match transform.pivot {
        Some(p) => {
            if !scene.has_object(object_id) {
                return Err(Error::NotFound(format!("object {object_id}")));
            }
            p
        }
        None => segment_centroid(scene, object_id)?,
    };
    for k in scene.kernels.iter_mut().filter(|k| k.object_id == object_id) {
        k.mean = transform.apply_point(&k.mean, &pivot);
        k.rotation = transform.rotation * k.rotation;
        k.scale *= transform.scale;
    }
    Ok(pivot)
}

/// Removes a segment, keeping the order of the rest. Returns the new index
/// of every old kernel.
pub fn delete_object(scene: &mut SplatScene, object_id: u32) -> Result<Vec<Option<usize>>> {
    if !scene.has_object(object_id) {
        return Err(Error::NotFound(format!("object {object_id}")));
    }
    let mut next = 0;
    let map: Vec<Option<usize>> = scene
        .kernels
        .iter()
        .map(|k| {
            (k.object_id != object_id).then(|| {
                next += 1;
                next - 1
            })
        })
        .collect();
    scene.kernels.retain(|k| k.object_id != object_id);
    Ok(map)
}

/// Assigns `object_id` to kernels in `range`.
pub fn relabel(scene: &mut SplatScene, range: Range<usize>, object_id: u32) -> Result<()> {
    if range.start > range.end || range.end > scene.len() {
        return Err(Error::InvalidParameter(format!("kernel range {range:?} outside 0..{}", scene.len())));
    }
    for k in &mut scene.kernels[range] {
        k.object_id = object_id;
    }
    Ok(())
}
