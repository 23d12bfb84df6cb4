//! Triangle mesh used as the deformation scaffold.

use std::collections::HashMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    /// Counter-clockwise when seen from outside.
    pub faces: Vec<[u32; 3]>,
    /// Per-vertex inverse mass; empty until a simulation assigns masses.
    #[serde(default)]
    pub inverse_masses: Vec<f64>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = Self {
            vertices,
            faces,
            inverse_masses: Vec::new(),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::InvalidInput(format!("face {i} references a vertex out of range")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidInput(format!("face {i} repeats a vertex")));
            }
        }
        if !self.inverse_masses.is_empty() && self.inverse_masses.len() != self.vertices.len() {
            return Err(Error::InvalidInput("inverse mass count does not match vertex count".into()));
        }
        if self.vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput("non-finite vertex position".into()));
        }
        Ok(())
    }

    pub fn face_positions(&self, face: usize) -> [Vector3<f64>; 3] {
        self.faces[face].map(|v| self.vertices[v as usize])
    }

    /// Unnormalized normal, length twice the face area.
    pub fn face_cross(&self, face: usize) -> Vector3<f64> {
        let [a, b, c] = self.face_positions(face);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, face: usize) -> f64 {
        0.5 * self.face_cross(face).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Same topology with new vertex positions.
    pub fn with_positions(&self, positions: &[Vector3<f64>]) -> Result<Self> {
        if positions.len() != self.vertices.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} positions, got {}",
                self.vertices.len(),
                positions.len()
            )));
        }
        Ok(Self {
            vertices: positions.to_vec(),
            ..self.clone()
        })
    }

    /// Unique undirected edges in first-seen order, each with the faces using it.
    pub fn edge_faces(&self) -> Vec<([u32; 2], Vec<usize>)> {
        let mut index: HashMap<[u32; 2], usize> = HashMap::new();
        let mut edges: Vec<([u32; 2], Vec<usize>)> = Vec::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = [a.min(b), a.max(b)];
                let slot = *index.entry(key).or_insert_with(|| {
                    edges.push((key, Vec::new()));
                    edges.len() - 1
                });
                edges[slot].1.push(fi);
            }
        }
        edges
    }

    /// V − E + F over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for f in &self.faces {
            for &v in f {
                used[v as usize] = true;
            }
        }
        let v = used.iter().filter(|u| **u).count() as i64;
        v - self.edge_faces().len() as i64 + self.faces.len() as i64
    }

    /// Closed and consistently oriented: every directed edge appears once
    /// and its reverse appears once.
    pub fn is_closed_manifold(&self) -> bool {
        let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                *directed.entry((f[k], f[(k + 1) % 3])).or_default() += 1;
            }
        }
        directed
            .iter()
            .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// Number of face-connected components.
    pub fn connected_components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for f in &self.faces {
            let a = find(&mut parent, f[0] as usize);
            for &v in &f[1..] {
                let b = find(&mut parent, v as usize);
                parent[b] = a;
            }
        }
        let mut roots: Vec<usize> = self
            .faces
            .iter()
            .map(|f| find(&mut parent, f[0] as usize))
            .collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    /// Signed enclosed volume; positive for outward-facing closed meshes.
    pub fn signed_volume(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.face_positions(f);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Merges vertices closer than `tol`, then drops degenerate faces and
    /// unreferenced vertices.
    pub fn weld(&mut self, tol: f64) {
        let cell = tol.max(f64::MIN_POSITIVE);
        let key = |p: &Vector3<f64>| -> [i64; 3] { [0, 1, 2].map(|i| (p[i] / cell).floor() as i64) };
        let mut grid: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        let mut remap = vec![0u32; self.vertices.len()];
        let mut kept: Vec<Vector3<f64>> = Vec::new();
        for (i, p) in self.vertices.iter().enumerate() {
            let k = key(p);
            let mut found = None;
            'search: for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(list) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                            for &j in list {
                                if (kept[j as usize] - p).norm() <= tol {
                                    found = Some(j);
                                    break 'search;
                                }
                            }
                        }
                    }
                }
            }
            remap[i] = found.unwrap_or_else(|| {
                kept.push(*p);
                let j = (kept.len() - 1) as u32;
                grid.entry(k).or_default().push(j);
                j
            });
        }
        let faces: Vec<[u32; 3]> = self
            .faces
            .iter()
            .map(|f| f.map(|v| remap[v as usize]))
            .filter(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2])
            .collect();
        self.vertices = kept;
        self.faces = faces;
        self.inverse_masses.clear();
        self.drop_unreferenced();
    }

    fn drop_unreferenced(&mut self) {
        let mut new_index = vec![u32::MAX; self.vertices.len()];
        let mut verts = Vec::new();
        for f in self.faces.iter_mut() {
            for v in f.iter_mut() {
                let slot = &mut new_index[*v as usize];
                if *slot == u32::MAX {
                    *slot = verts.len() as u32;
                    verts.push(self.vertices[*v as usize]);
                }
                *v = *slot;
            }
        }
        self.vertices = verts;
    }
}
