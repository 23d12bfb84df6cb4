//! Deterministic synthetic scenes and meshes for tests, fixtures and
//! benchmarks.

use nalgebra::{Quaternion, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::Camera;
use crate::mesh::TriangleMesh;
use crate::splat::sh::{coeffs_for_degree, ShCoeffs};
use crate::splat::{GaussianKernel, SplatScene};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    loop {
        let q = Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if q.norm() > 0.1 {
            return UnitQuaternion::from_quaternion(q);
        }
    }
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp()
}

/// `n` kernels with means uniform in `[-extent, extent]³`, log-uniform
/// per-axis scales, random rotations and SH colors of the given degree.
pub fn random_scene(seed: u64, n: usize, extent: f64, scale: (f64, f64), sh_degree: u8) -> SplatScene {
    let mut rng = rng(seed);
    let kernels = (0..n)
        .map(|_| {
            let mean = Vector3::from_fn(|_, _| rng.random_range(-extent..=extent));
            let s = Vector3::from_fn(|_, _| log_uniform(&mut rng, scale.0, scale.1));
            let mut sh = ShCoeffs {
                degree: sh_degree,
                ..ShCoeffs::default()
            };
            for k in 0..coeffs_for_degree(sh_degree) {
                for c in 0..3 {
                    sh.coeffs[k][c] = if k == 0 {
                        rng.random_range(-1.7..1.7)
                    } else {
                        rng.random_range(-0.3..0.3)
                    };
                }
            }
            GaussianKernel {
                mean,
                rotation: random_rotation(&mut rng),
                scale: s,
                opacity: rng.random_range(0.2..=1.0),
                sh,
                object_id: rng.random_range(0..3),
            }
        })
        .collect();
    SplatScene::new(kernels)
}

/// Camera on a sphere around `target`; azimuth and elevation in radians.
pub fn orbit_camera(azimuth: f64, elevation: f64, distance: f64, target: Vector3<f64>, width: u32, height: u32) -> Camera {
    let dir = Vector3::new(
        elevation.cos() * azimuth.sin(),
        elevation.sin(),
        elevation.cos() * azimuth.cos(),
    );
    Camera::look_at(target + distance * dir, target, Vector3::y(), 50.0, width, height)
        .expect("orbit camera parameters are valid")
}

/// Scene and camera used by the frame-time benchmark.
pub fn benchmark_scene(n: usize) -> (SplatScene, Camera) {
    let scene = random_scene(2024, n, 1.0, (0.004, 0.025), 3);
    let cam = orbit_camera(0.6, 0.35, 3.2, Vector3::zeros(), 640, 480);
    (scene, cam)
}

/// Flat square grid in the xz-plane at height `y`, centered on the y axis,
/// faces oriented toward +y.
pub fn cloth_grid(cells: usize, size: f64, y: f64) -> TriangleMesh {
    let n = cells + 1;
    let mut vertices = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            vertices.push(Vector3::new(
                size * (i as f64 / cells as f64 - 0.5),
                y,
                size * (j as f64 / cells as f64 - 0.5),
            ));
        }
    }
    let mut faces = Vec::with_capacity(2 * cells * cells);
    for j in 0..cells {
        for i in 0..cells {
            let a = (j * n + i) as u32;
            let b = a + 1;
            let c = a + n as u32;
            let d = c + 1;
            faces.push([a, c, b]);
            faces.push([b, c, d]);
        }
    }
    TriangleMesh::new(vertices, faces).expect("grid is valid")
}

/// Flattened kernels scattered over the faces of `mesh`, lying in the
/// face plane with a small normal offset. Colors follow a checker pattern.
pub fn splats_on_mesh(mesh: &TriangleMesh, per_face: usize, seed: u64, object_id: u32) -> Vec<GaussianKernel> {
    let mut rng = rng(seed);
    let mut out = Vec::with_capacity(mesh.faces.len() * per_face);
    for f in 0..mesh.faces.len() {
        let [a, b, c] = mesh.face_positions(f);
        let cross = (b - a).cross(&(c - a));
        let area = 0.5 * cross.norm();
        let n = cross.normalize();
        let e1 = (b - a).normalize();
        let frame = Rotation3::from_basis_unchecked(&[e1, n.cross(&e1), n]);
        let s = (area / per_face as f64).sqrt() * 0.6;
        for _ in 0..per_face {
            let (mut u, mut v) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            let p = a + u * (b - a) + v * (c - a) + n * rng.random_range(-0.1..0.1) * s;
            let checker = ((p.x * 4.0).floor() + (p.z * 4.0).floor()) as i64 & 1 == 0;
            let rgb = if checker { [0.85, 0.25, 0.2] } else { [0.95, 0.9, 0.8] };
            let spin = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), rng.random_range(0.0..std::f64::consts::TAU));
            out.push(GaussianKernel {
                mean: p,
                rotation: UnitQuaternion::from_rotation_matrix(&frame) * spin,
                scale: Vector3::new(s * rng.random_range(0.8..1.2), s * rng.random_range(0.8..1.2), 0.15 * s),
                opacity: rng.random_range(0.7..0.95),
                sh: ShCoeffs::from_rgb(rgb),
                object_id,
            });
        }
    }
    out
}

/// A ground slab of kernels below a hanging cloth, plus the cloth kernels,
/// as segment 0 (ground) and segment 1 (cloth).
pub fn cloth_over_ground(cells: usize, per_face: usize) -> (SplatScene, TriangleMesh) {
    let cloth = cloth_grid(cells, 1.0, 1.0);
    let mut kernels = Vec::new();
    let mut rng = rng(77);
    for j in 0..12 {
        for i in 0..12 {
            let x = -1.1 + 2.2 * (i as f64 + 0.5) / 12.0;
            let z = -1.1 + 2.2 * (j as f64 + 0.5) / 12.0;
            let shade = if (i + j) % 2 == 0 { 0.35 } else { 0.5 };
            kernels.push(GaussianKernel {
                mean: Vector3::new(x, 0.0, z),
                rotation: UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::FRAC_PI_2),
                scale: Vector3::new(0.11, 0.11, 0.01),
                opacity: 0.9,
                sh: ShCoeffs::from_rgb([shade * 0.6, shade, shade * 0.7 + rng.random_range(0.0..0.05)]),
                object_id: 0,
            });
        }
    }
    kernels.extend(splats_on_mesh(&cloth, per_face, 5, 1));
    (SplatScene::new(kernels), cloth)
}
