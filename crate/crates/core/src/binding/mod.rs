//! Kernel-to-surface binding and transfer of mesh deformation to splats.
//!
//! A bound kernel keeps its rest-pose offset from its foot point expressed in
//! the orthonormal frame of its face. Deforming the mesh moves the foot point
//! with the barycentric weights and rotates the offset and the kernel
//! orientation by the change of face frame. Kernel scale is never changed.

mod closest;

use std::collections::HashMap;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::splat::{Aabb, SplatScene};

pub use closest::closest_point_barycentric;

/// Faces with smaller area have no usable frame.
pub const MIN_FACE_AREA: f64 = 1e-12;
/// Default maximum binding distance in units of the median kernel scale.
pub const DEFAULT_BIND_DISTANCE_SCALES: f64 = 3.0;
/// Relative distance difference below which candidate faces tie.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceBinding {
    pub kernel_index: usize,
    pub face_index: usize,
    /// Non-negative, summing to one.
    pub barycentric: [f64; 3],
    /// Signed distance along the rest face normal.
    pub normal_offset: f64,
    /// Columns (ê₁, n̂×ê₁, n̂) of the rest face.
    pub rest_frame: Matrix3<f64>,
}

/// Rest-pose data captured at bind time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestPose {
    pub mean: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    pub foot: Vector3<f64>,
    /// Kernel mean relative to the foot point, in rest-frame coordinates.
    pub local: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindingSet {
    pub bindings: Vec<SurfaceBinding>,
    /// Parallel to `bindings`.
    pub rest: Vec<RestPose>,
    pub rest_mesh: TriangleMesh,
    /// Kernels farther than `max_distance` from the mesh.
    pub unbound: Vec<usize>,
    pub max_distance: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BindOptions {
    /// Defaults to three times the median kernel scale.
    pub max_distance: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ApplyReport {
    pub updated: usize,
    /// Kernels left at their previous pose because their face degenerated.
    pub frozen: usize,
}

/// Orthonormal frame (ê₁, n̂×ê₁, n̂) of a face, `None` when degenerate.
pub fn face_frame(mesh: &TriangleMesh, face: usize) -> Option<Matrix3<f64>> {
    let [a, b, c] = mesh.face_positions(face);
    let cross = (b - a).cross(&(c - a));
    if 0.5 * cross.norm() < MIN_FACE_AREA {
        return None;
    }
    let e1 = (b - a).normalize();
    let n = cross.normalize();
    Some(Matrix3::from_columns(&[e1, n.cross(&e1), n]))
}

fn foot_point(mesh: &TriangleMesh, face: usize, w: &[f64; 3]) -> Vector3<f64> {
    let [a, b, c] = mesh.face_positions(face);
    a * w[0] + b * w[1] + c * w[2]
}

/// Median of per-kernel largest scale; zero for an empty scene.
pub fn median_kernel_scale(scene: &SplatScene) -> f64 {
    let mut s: Vec<f64> = scene.kernels.iter().map(|k| k.max_scale()).collect();
    if s.is_empty() {
        return 0.0;
    }
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Uniform grid over face bounding boxes.
struct FaceGrid {
    cell: f64,
    cells: HashMap<[i64; 3], Vec<u32>>,
}

impl FaceGrid {
    fn new(mesh: &TriangleMesh, usable: &[bool], cell: f64) -> FaceGrid {
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for f in 0..mesh.faces.len() {
            if !usable[f] {
                continue;
            }
            let p = mesh.face_positions(f);
            let bb = Aabb::from_points(p.iter()).expect("three points");
            let lo = Self::key(&bb.min, cell);
            let hi = Self::key(&bb.max, cell);
            for x in lo[0]..=hi[0] {
                for y in lo[1]..=hi[1] {
                    for z in lo[2]..=hi[2] {
                        cells.entry([x, y, z]).or_default().push(f as u32);
                    }
                }
            }
        }
        FaceGrid { cell, cells }
    }

    fn key(p: &Vector3<f64>, cell: f64) -> [i64; 3] {
        [0, 1, 2].map(|i| (p[i] / cell).floor() as i64)
    }

    /// Faces whose boxes overlap the cube of half-width `r` around `p`, ascending.
    fn candidates(&self, p: &Vector3<f64>, r: f64) -> Vec<u32> {
        let lo = Self::key(&p.add_scalar(-r), self.cell);
        let hi = Self::key(&p.add_scalar(r), self.cell);
        let mut out = Vec::new();
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    if let Some(list) = self.cells.get(&[x, y, z]) {
                        out.extend_from_slice(list);
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Binds every kernel of `scene` to its closest face of `mesh`.
pub fn bind_kernels(scene: &SplatScene, mesh: &TriangleMesh, options: &BindOptions) -> Result<BindingSet> {
    mesh.validate()?;
    if mesh.is_empty() {
        return Err(Error::InvalidInput("cannot bind to an empty mesh".into()));
    }
    let max_distance = match options.max_distance {
        Some(d) if d > 0.0 && !d.is_nan() => d,
        Some(d) => return Err(Error::InvalidParameter(format!("max bind distance must be positive, got {d}"))),
        None => DEFAULT_BIND_DISTANCE_SCALES * median_kernel_scale(scene),
    };
    let frames: Vec<Option<Matrix3<f64>>> = (0..mesh.faces.len()).map(|f| face_frame(mesh, f)).collect();
    let usable: Vec<bool> = frames.iter().map(Option::is_some).collect();
    let bounds = Aabb::from_points(mesh.vertices.iter()).expect("non-empty mesh");
    let reach = if max_distance.is_finite() { max_distance } else { bounds.diagonal() };
    let cell = reach.max(bounds.diagonal() / 64.0).max(1e-9);
    let grid = FaceGrid::new(mesh, &usable, cell);
    let all_faces: Vec<u32> = (0..mesh.faces.len() as u32).filter(|&f| usable[f as usize]).collect();

    let results: Vec<Option<(SurfaceBinding, RestPose)>> = scene
        .kernels
        .par_iter()
        .enumerate()
        .map(|(ki, k)| {
            let candidates = if max_distance.is_finite() { grid.candidates(&k.mean, reach) } else { all_faces.clone() };
            let mut best: Option<(f64, usize, [f64; 3])> = None;
            for &f in &candidates {
                let f = f as usize;
                let [a, b, c] = mesh.face_positions(f);
                let w = closest_point_barycentric(&k.mean, &a, &b, &c);
                let d = (a * w[0] + b * w[1] + c * w[2] - k.mean).norm();
                let better = match best {
                    None => true,
                    Some((bd, _, _)) => d < bd - TIE_TOLERANCE * bd.max(1.0),
                };
                if better {
                    best = Some((d, f, w));
                }
            }
            let (d, face, w) = best?;
            if d > max_distance {
                return None;
            }
            let frame = frames[face].expect("candidates are usable faces");
            let foot = foot_point(mesh, face, &w);
            let local = frame.transpose() * (k.mean - foot);
            Some((
                SurfaceBinding {
                    kernel_index: ki,
                    face_index: face,
                    barycentric: w,
                    normal_offset: local.z,
                    rest_frame: frame,
                },
                RestPose { mean: k.mean, rotation: k.rotation, foot, local },
            ))
        })
        .collect();

    let mut bindings = Vec::new();
    let mut rest = Vec::new();
    let mut unbound = Vec::new();
    for (ki, r) in results.into_iter().enumerate() {
        match r {
            Some((b, p)) => {
                bindings.push(b);
                rest.push(p);
            }
            None => unbound.push(ki),
        }
    }
    if !unbound.is_empty() {
        log::info!("{} kernels farther than {max_distance} from the mesh left unbound", unbound.len());
    }
    Ok(BindingSet { bindings, rest, rest_mesh: mesh.clone(), unbound, max_distance })
}

impl BindingSet {
    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    /// Rebuilds a set from stored records plus the rest scene and mesh they
    /// were computed against.
    pub fn from_records(records: Vec<BindingRecord>, rest_scene: &SplatScene, rest_mesh: &TriangleMesh) -> Result<BindingSet> {
        rest_mesh.validate()?;
        let mut seen = vec![false; rest_scene.len()];
        let mut bindings = Vec::with_capacity(records.len());
        let mut rest = Vec::with_capacity(records.len());
        for (i, r) in records.into_iter().enumerate() {
            if r.kernel_index >= rest_scene.len() {
                return Err(Error::InvalidInput(format!("binding {i}: kernel {} out of range", r.kernel_index)));
            }
            if r.face_index >= rest_mesh.faces.len() {
                return Err(Error::InvalidInput(format!("binding {i}: face {} out of range", r.face_index)));
            }
            if std::mem::replace(&mut seen[r.kernel_index], true) {
                return Err(Error::InvalidInput(format!("binding {i}: kernel {} bound twice", r.kernel_index)));
            }
            let sum: f64 = r.barycentric.iter().sum();
            if r.barycentric.iter().any(|w| *w < 0.0 || !w.is_finite()) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("binding {i}: barycentric weights must be non-negative and sum to 1")));
            }
            let frame = face_frame(rest_mesh, r.face_index)
                .ok_or_else(|| Error::InvalidInput(format!("binding {i}: rest face {} is degenerate", r.face_index)))?;
            let k = &rest_scene.kernels[r.kernel_index];
            let foot = foot_point(rest_mesh, r.face_index, &r.barycentric);
            let local = frame.transpose() * (k.mean - foot);
            bindings.push(SurfaceBinding {
                kernel_index: r.kernel_index,
                face_index: r.face_index,
                barycentric: r.barycentric,
                normal_offset: r.normal_offset,
                rest_frame: frame,
            });
            rest.push(RestPose { mean: k.mean, rotation: k.rotation, foot, local });
        }
        let unbound = (0..rest_scene.len()).filter(|&k| !seen[k]).collect();
        Ok(BindingSet { bindings, rest, rest_mesh: rest_mesh.clone(), unbound, max_distance: f64::INFINITY })
    }

    pub fn records(&self) -> Vec<BindingRecord> {
        self.bindings
            .iter()
            .map(|b| BindingRecord {
                kernel_index: b.kernel_index,
                face_index: b.face_index,
                barycentric: b.barycentric,
                normal_offset: b.normal_offset,
            })
            .collect()
    }

    /// Moves bound kernels of `scene` onto `deformed`, a re-posed copy of the
    /// rest mesh.
    pub fn apply_deformation(&self, deformed: &TriangleMesh, scene: &mut SplatScene) -> Result<ApplyReport> {
        if deformed.vertices.len() != self.rest_mesh.vertices.len() || deformed.faces != self.rest_mesh.faces {
            return Err(Error::InvalidInput("deformed mesh topology differs from the rest mesh".into()));
        }
        if let Some(b) = self.bindings.iter().find(|b| b.kernel_index >= scene.len()) {
            return Err(Error::InvalidInput(format!("bound kernel {} missing from scene", b.kernel_index)));
        }
        let frames: Vec<Option<Matrix3<f64>>> = (0..deformed.faces.len()).map(|f| face_frame(deformed, f)).collect();
        let poses: Vec<Option<(Vector3<f64>, UnitQuaternion<f64>)>> = self
            .bindings
            .par_iter()
            .zip(&self.rest)
            .map(|(b, r)| {
                let frame = frames[b.face_index]?;
                let foot = foot_point(deformed, b.face_index, &b.barycentric);
                // Written as a correction of the rest mean so the rest mesh
                // reproduces it bit for bit.
                let mean = r.mean + (foot - r.foot) + (frame - b.rest_frame) * r.local;
                let rotation = if frame == b.rest_frame {
                    r.rotation
                } else {
                    let delta = Rotation3::from_matrix_unchecked(frame * b.rest_frame.transpose());
                    UnitQuaternion::from_rotation_matrix(&delta) * r.rotation
                };
                Some((mean, rotation))
            })
            .collect();
        let mut report = ApplyReport::default();
        for (b, pose) in self.bindings.iter().zip(poses) {
            match pose {
                Some((mean, rotation)) => {
                    let k = &mut scene.kernels[b.kernel_index];
                    k.mean = mean;
                    k.rotation = rotation;
                    report.updated += 1;
                }
                None => report.frozen += 1,
            }
        }
        if report.frozen > 0 {
            log::warn!("{} kernels frozen on degenerate faces", report.frozen);
        }
        Ok(report)
    }

    /// Renumbers kernels after scene edits; `new_index[k]` is `None` for
    /// removed kernels, whose bindings are dropped.
    pub fn remap_kernels(&mut self, new_index: &[Option<usize>]) {
        let mut bindings = Vec::new();
        let mut rest = Vec::new();
        for (mut b, r) in self.bindings.drain(..).zip(self.rest.drain(..)) {
            if let Some(Some(n)) = new_index.get(b.kernel_index) {
                b.kernel_index = *n;
                bindings.push(b);
                rest.push(r);
            }
        }
        self.bindings = bindings;
        self.rest = rest;
        self.unbound = self.unbound.iter().filter_map(|&k| new_index.get(k).copied().flatten()).collect();
    }

    /// Applies `x ↦ s·Q·x + t` to the rest pose so later deformations stay
    /// consistent with an edited object.
    pub fn transform_rest(&mut self, rotation: &UnitQuaternion<f64>, scale: f64, translation: &Vector3<f64>) {
        let map = |p: &Vector3<f64>| scale * (rotation * p) + translation;
        for v in &mut self.rest_mesh.vertices {
            *v = map(v);
        }
        let q = rotation.to_rotation_matrix().into_inner();
        for (b, r) in self.bindings.iter_mut().zip(&mut self.rest) {
            r.mean = map(&r.mean);
            r.foot = map(&r.foot);
            r.rotation = rotation * r.rotation;
            r.local *= scale;
            b.normal_offset *= scale;
            b.rest_frame = q * b.rest_frame;
        }
    }
}

/// One line of the binding sidecar file.
#[derive(Debug, Clone, PartialEq)]
pub struct BindingRecord {
    pub kernel_index: usize,
    pub face_index: usize,
    pub barycentric: [f64; 3],
    pub normal_offset: f64,
}
