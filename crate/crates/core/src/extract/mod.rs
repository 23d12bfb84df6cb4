//! Isosurface extraction from the summed Gaussian density field.

mod cases;

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::splat::{eval_kernel, Aabb, GaussianKernel, SplatScene};

pub use cases::{CORNERS, EDGES};

/// Kernels farther than this squared Mahalanobis distance contribute nothing.
pub const DENSITY_CUTOFF_SQ: f64 = 25.0;
pub const DEFAULT_ISO_LEVEL: f64 = 0.1;
/// Default cell size is the padded scene diagonal divided by this.
pub const DEFAULT_CELLS_PER_DIAGONAL: f64 = 128.0;
/// Refuse grids with more samples than this.
pub const MAX_GRID_SAMPLES: usize = 1 << 27;
pub const WELD_TOLERANCE: f64 = 1e-9;

/// Summed opacity-weighted density at `x`.
pub fn density_at(scene: &SplatScene, x: &Vector3<f64>) -> f64 {
    scene
        .kernels
        .iter()
        .map(|k| {
            let d2 = crate::splat::mahalanobis_sq(k, x);
            if d2 > DENSITY_CUTOFF_SQ {
                0.0
            } else {
                k.opacity * eval_kernel(k, x)
            }
        })
        .sum()
}

/// Regular samples of the density field, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub origin: Vector3<f64>,
    pub cell_size: f64,
    pub dims: [usize; 3],
    pub samples: Vec<f64>,
}

impl DensityGrid {
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin + Vector3::new(i as f64, j as f64, k as f64) * self.cell_size
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.samples[self.index(i, j, k)]
    }

    pub fn max_value(&self) -> f64 {
        self.samples.iter().copied().fold(0.0, f64::max)
    }

    /// Samples the scene density over `bounds` at spacing `cell_size`.
    pub fn sample(scene: &SplatScene, bounds: &Aabb, cell_size: f64) -> Result<DensityGrid> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::InvalidParameter(format!("cell size must be positive, got {cell_size}")));
        }
        let extent = bounds.max - bounds.min;
        let mut dims = [0usize; 3];
        for a in 0..3 {
            let n = (extent[a] / cell_size).ceil() + 1.0;
            if !n.is_finite() || n > MAX_GRID_SAMPLES as f64 {
                return Err(Error::InvalidParameter(format!("cell size {cell_size} yields an unbounded grid")));
            }
            dims[a] = (n as usize).max(2);
        }
        let total = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        match total {
            Some(t) if t <= MAX_GRID_SAMPLES => {}
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "cell size {cell_size} yields a {}x{}x{} grid, too many samples",
                    dims[0], dims[1], dims[2]
                )))
            }
        }
        let origin = bounds.min;
        let prepared: Vec<Prepared> = scene.kernels.iter().map(Prepared::new).collect();
        let slab_len = dims[0] * dims[1];
        let mut samples = vec![0.0; slab_len * dims[2]];
        samples.par_chunks_mut(slab_len).enumerate().for_each(|(k, slab)| {
            let z = origin.z + k as f64 * cell_size;
            for p in &prepared {
                if (z - p.mean.z).abs() > p.reach {
                    continue;
                }
                let lo = |a: usize| (((p.mean[a] - p.reach - origin[a]) / cell_size).ceil().max(0.0)) as usize;
                let hi = |a: usize| {
                    let h = ((p.mean[a] + p.reach - origin[a]) / cell_size).floor();
                    if h < 0.0 {
                        None
                    } else {
                        Some((h as usize).min(dims[a] - 1))
                    }
                };
                let (Some(hx), Some(hy)) = (hi(0), hi(1)) else { continue };
                for j in lo(1)..=hy {
                    let y = origin.y + j as f64 * cell_size;
                    for i in lo(0)..=hx {
                        let x = origin.x + i as f64 * cell_size;
                        let d = Vector3::new(x, y, z) - p.mean;
                        let d2 = d.dot(&(p.precision * d));
                        if d2 <= DENSITY_CUTOFF_SQ {
                            slab[j * dims[0] + i] += p.opacity * (-0.5 * d2).exp();
                        }
                    }
                }
            }
        });
        Ok(DensityGrid { origin, cell_size, dims, samples })
    }
}

/// Kernel data reused for every grid sample.
struct Prepared {
    mean: Vector3<f64>,
    /// R·S⁻²·Rᵀ, assembled from the factors.
    precision: Matrix3<f64>,
    reach: f64,
    opacity: f64,
}

impl Prepared {
    fn new(k: &GaussianKernel) -> Prepared {
        let r = k.rotation.to_rotation_matrix().into_inner();
        let inv_s2 = Matrix3::from_diagonal(&k.scale.map(|s| 1.0 / (s * s)));
        Prepared {
            mean: k.mean,
            precision: r * inv_s2 * r.transpose(),
            reach: DENSITY_CUTOFF_SQ.sqrt() * k.max_scale(),
            opacity: k.opacity,
        }
    }
}

/// Grid padding around the kernel means: three sigmas plus one cell, so the
/// outer grid layer stays below any useful iso level.
pub fn extraction_bounds(scene: &SplatScene, cell_size: f64) -> Result<Aabb> {
    let bounds = scene.bounds().ok_or(Error::EmptyScene)?;
    let max_scale = scene.kernels.iter().map(|k| k.max_scale()).fold(0.0, f64::max);
    Ok(bounds.padded(3.0 * max_scale + cell_size))
}

/// Default cell size for a scene: padded diagonal / 128.
pub fn default_cell_size(scene: &SplatScene) -> Result<f64> {
    let bounds = scene.bounds().ok_or(Error::EmptyScene)?;
    let max_scale = scene.kernels.iter().map(|k| k.max_scale()).fold(0.0, f64::max);
    Ok(bounds.padded(3.0 * max_scale).diagonal() / DEFAULT_CELLS_PER_DIAGONAL)
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub mesh: TriangleMesh,
    pub grid_dims: [usize; 3],
    pub cell_size: f64,
    pub max_density: f64,
    /// The iso level exceeded every grid sample.
    pub empty: bool,
}

/// Marching cubes over the density field of `scene`.
pub fn extract_mesh(scene: &SplatScene, iso_level: f64, cell_size: f64) -> Result<Extraction> {
    if !(iso_level > 0.0 && iso_level.is_finite()) {
        return Err(Error::InvalidParameter(format!("iso level must be positive, got {iso_level}")));
    }
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(Error::InvalidParameter(format!("cell size must be positive, got {cell_size}")));
    }
    scene.validate()?;
    let bounds = extraction_bounds(scene, cell_size)?;
    let grid = DensityGrid::sample(scene, &bounds, cell_size)?;
    let max_density = grid.max_value();
    let mesh = march(&grid, iso_level)?;
    let empty = mesh.faces.is_empty();
    if empty {
        log::info!("iso level {iso_level} above sampled density maximum {max_density}; mesh is empty");
    }
    Ok(Extraction { mesh, grid_dims: grid.dims, cell_size, max_density, empty })
}

/// Extraction restricted to the kernels of one segment.
pub fn mesh_object(scene: &SplatScene, object_id: u32, iso_level: f64, cell_size: f64) -> Result<Extraction> {
    extract_mesh(&scene.segment(object_id)?, iso_level, cell_size)
}

/// Triangulates the `iso` level set of `grid`; samples above `iso` are inside.
pub fn march(grid: &DensityGrid, iso: f64) -> Result<TriangleMesh> {
    let table = cases::case_table();
    let [nx, ny, nz] = grid.dims;
    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut edge_vertex: HashMap<usize, u32> = HashMap::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let mut case = 0usize;
                let mut values = [0.0; 8];
                for (c, off) in CORNERS.iter().enumerate() {
                    values[c] = grid.value(i + off[0], j + off[1], k + off[2]);
                    if values[c] > iso {
                        case |= 1 << c;
                    }
                }
                if table.edge_mask[case] == 0 {
                    continue;
                }
                let mut local = [u32::MAX; 12];
                for (e, [a, b]) in EDGES.iter().enumerate() {
                    if table.edge_mask[case] & (1 << e) == 0 {
                        continue;
                    }
                    // Order endpoints low to high so shared edges agree.
                    let (a, b) = if CORNERS[*a] < CORNERS[*b] { (*a, *b) } else { (*b, *a) };
                    let pa = [i + CORNERS[a][0], j + CORNERS[a][1], k + CORNERS[a][2]];
                    let axis = (0..3).find(|&ax| CORNERS[a][ax] != CORNERS[b][ax]).unwrap();
                    let key = grid.index(pa[0], pa[1], pa[2]) * 3 + axis;
                    local[e] = *edge_vertex.entry(key).or_insert_with(|| {
                        let (va, vb) = (values[a], values[b]);
                        let t = ((iso - va) / (vb - va)).clamp(0.0, 1.0);
                        let p = grid.point(pa[0], pa[1], pa[2]);
                        let mut q = p;
                        q[axis] += t * grid.cell_size;
                        vertices.push(q);
                        (vertices.len() - 1) as u32
                    });
                }
                for tri in &table.triangles[case] {
                    faces.push([local[tri[0] as usize], local[tri[1] as usize], local[tri[2] as usize]]);
                }
            }
        }
    }
    let mut mesh = TriangleMesh { vertices, faces, inverse_masses: Vec::new() };
    mesh.weld(WELD_TOLERANCE);
    mesh.validate()?;
    Ok(mesh)
}

#[cfg(test)]
mod tests;
