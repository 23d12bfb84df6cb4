//! Projection of kernels to the image plane and front-to-back compositing.
//!
//! Two renderers share the same projection and per-pixel blend:
//! [`render_oracle`] walks every pixel against the full depth-sorted splat
//! list, and [`render_fast`] bins splats into screen tiles and processes tiles
//! in parallel. Both feed identical splats to each pixel in identical order,
//! so their outputs agree bit for bit.

mod oracle;
mod tiled;

use nalgebra::{Matrix2x3, Matrix3, Vector3};

use crate::camera::Camera;
use crate::splat::{eval_sh_color, GaussianKernel, SplatScene};

pub use oracle::render_oracle;
pub use tiled::{render_fast, render_fast_with, RasterConfig, DEFAULT_TILE_SIZE};

/// Added to the projected 2D covariance diagonal, in pixels².
pub const LOW_PASS_FLOOR: f64 = 0.3;
/// Upper clamp on per-splat effective alpha.
pub const MAX_ALPHA: f64 = 0.99;
/// Compositing stops once transmittance falls below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
/// Screen-space support radius in standard deviations.
pub const SUPPORT_SIGMA: f64 = 3.0;
const SUPPORT_SQ: f64 = SUPPORT_SIGMA * SUPPORT_SIGMA;

/// A kernel after projection into one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSplat {
    pub pixel_mean: [f64; 2],
    /// Symmetric 2×2 covariance `(xx, xy, yy)`, low-pass floor included.
    pub cov2d: [f64; 3],
    /// Inverse of `cov2d`, same layout.
    pub conic: [f64; 3],
    /// Camera-space z of the mean.
    pub view_depth: f64,
    pub color: [f64; 3],
    pub opacity: f64,
    pub source_index: usize,
    /// Half-extents of the 3σ ellipse's bounding box, in pixels.
    pub extent: [f64; 2],
}

impl ProjectedSplat {
    /// Inclusive pixel bounds of the support ellipse, unclipped.
    pub(crate) fn pixel_bounds(&self) -> [i64; 4] {
        // Slight outward margin so rounding never drops a covered pixel.
        let rx = self.extent[0] * (1.0 + 1e-9) + 1e-9;
        let ry = self.extent[1] * (1.0 + 1e-9) + 1e-9;
        [
            (self.pixel_mean[0] - rx).ceil() as i64,
            (self.pixel_mean[1] - ry).ceil() as i64,
            (self.pixel_mean[0] + rx).floor() as i64,
            (self.pixel_mean[1] + ry).floor() as i64,
        ]
    }

    /// Effective alpha at a pixel sample, `None` outside the support ellipse.
    #[inline]
    pub fn alpha_at(&self, px: f64, py: f64) -> Option<f64> {
        let dx = px - self.pixel_mean[0];
        let dy = py - self.pixel_mean[1];
        let d2 = self.conic[0] * dx * dx + 2.0 * self.conic[1] * dx * dy + self.conic[2] * dy * dy;
        if d2 > SUPPORT_SQ {
            return None;
        }
        Some((self.opacity * (-0.5 * d2).exp()).min(MAX_ALPHA))
    }
}

/// Per-view constants shared by every kernel projection.
#[derive(Debug, Clone)]
pub struct Projector {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    center: Vector3<f64>,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    near: f64,
    max_x: f64,
    max_y: f64,
}

impl Projector {
    pub fn new(camera: &Camera) -> Self {
        Self {
            rotation: camera.rotation_matrix(),
            translation: camera.world_to_camera.translation.vector,
            center: camera.center(),
            fx: camera.focal[0],
            fy: camera.focal[1],
            cx: camera.principal_point[0],
            cy: camera.principal_point[1],
            near: camera.near_clip,
            max_x: camera.width as f64 - 1.0,
            max_y: camera.height as f64 - 1.0,
        }
    }

    /// Camera-space mean and the pre-floor screen covariance `J·W·Σ·Wᵀ·Jᵀ`,
    /// or `None` when the mean is not beyond the near plane.
    pub fn screen_covariance(&self, kernel: &GaussianKernel) -> Option<(Vector3<f64>, [f64; 3])> {
        let t = self.rotation * kernel.mean + self.translation;
        if t.z <= self.near {
            return None;
        }
        let iz = 1.0 / t.z;
        let jac = Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * t.x * iz * iz,
            0.0,
            self.fy * iz,
            -self.fy * t.y * iz * iz,
        );
        // J·W·R·S, so that cov2d = M·Mᵀ.
        let r = kernel.rotation.to_rotation_matrix().into_inner();
        let mut m = jac * self.rotation * r;
        for c in 0..3 {
            let s = kernel.scale[c];
            m[(0, c)] *= s;
            m[(1, c)] *= s;
        }
        let xx = m.row(0).dot(&m.row(0));
        let xy = m.row(0).dot(&m.row(1));
        let yy = m.row(1).dot(&m.row(1));
        Some((t, [xx, xy, yy]))
    }

    /// Full projection; `None` when the kernel is culled.
    pub fn project(&self, kernel: &GaussianKernel, source_index: usize) -> Option<ProjectedSplat> {
        let (t, [xx, xy, yy]) = self.screen_covariance(kernel)?;
        let cov2d = [xx + LOW_PASS_FLOOR, xy, yy + LOW_PASS_FLOOR];
        let det = cov2d[0] * cov2d[2] - cov2d[1] * cov2d[1];
        if !(det > 0.0) || !det.is_finite() {
            return None;
        }
        let mean = [self.fx * t.x / t.z + self.cx, self.fy * t.y / t.z + self.cy];
        let extent = [SUPPORT_SIGMA * cov2d[0].sqrt(), SUPPORT_SIGMA * cov2d[2].sqrt()];
        if mean[0] + extent[0] < 0.0
            || mean[0] - extent[0] > self.max_x
            || mean[1] + extent[1] < 0.0
            || mean[1] - extent[1] > self.max_y
        {
            return None;
        }
        let view_dir = (kernel.mean - self.center).normalize();
        Some(ProjectedSplat {
            pixel_mean: mean,
            cov2d,
            conic: [cov2d[2] / det, -cov2d[1] / det, cov2d[0] / det],
            view_depth: t.z,
            color: eval_sh_color(kernel, &view_dir),
            opacity: kernel.opacity,
            source_index,
            extent,
        })
    }
}

/// Projects one kernel; see [`Projector::project`].
pub fn project_kernel(kernel: &GaussianKernel, camera: &Camera) -> Option<ProjectedSplat> {
    Projector::new(camera).project(kernel, 0)
}

/// Projects every kernel and returns the survivors sorted front to back,
/// ties broken by ascending source index.
pub fn project_and_sort(scene: &SplatScene, camera: &Camera) -> Vec<ProjectedSplat> {
    use rayon::prelude::*;
    let projector = Projector::new(camera);
    let mut splats: Vec<ProjectedSplat> = scene
        .kernels
        .par_iter()
        .enumerate()
        .filter_map(|(i, k)| projector.project(k, i))
        .collect();
    splats.sort_unstable_by(depth_order);
    splats
}

pub(crate) fn depth_order(a: &ProjectedSplat, b: &ProjectedSplat) -> std::cmp::Ordering {
    a.view_depth
        .total_cmp(&b.view_depth)
        .then(a.source_index.cmp(&b.source_index))
}

/// Running front-to-back accumulation for one pixel.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PixelAccum {
    pub rgb: [f64; 3],
    pub transmittance: f64,
    pub done: bool,
}

impl Default for PixelAccum {
    fn default() -> Self {
        Self {
            rgb: [0.0; 3],
            transmittance: 1.0,
            done: false,
        }
    }
}

impl PixelAccum {
    /// Blends one splat; returns true once the pixel has saturated.
    #[inline]
    pub fn blend(&mut self, splat: &ProjectedSplat, px: f64, py: f64) -> bool {
        if let Some(a) = splat.alpha_at(px, py) {
            let w = self.transmittance * a;
            for c in 0..3 {
                self.rgb[c] += w * splat.color[c];
            }
            self.transmittance *= 1.0 - a;
            if self.transmittance < MIN_TRANSMITTANCE {
                self.done = true;
            }
        }
        self.done
    }

    pub fn finish(&self) -> ([f32; 3], f32) {
        (
            self.rgb.map(|v| v.clamp(0.0, 1.0) as f32),
            self.transmittance.clamp(0.0, 1.0) as f32,
        )
    }
}

/// Composites a depth-sorted splat list at one pixel sample, returning the
/// color and final transmittance.
pub fn composite_pixel(splats: &[ProjectedSplat], pixel: [f64; 2]) -> ([f64; 3], f64) {
    let mut acc = PixelAccum::default();
    for s in splats {
        if acc.blend(s, pixel[0], pixel[1]) {
            break;
        }
    }
    (acc.rgb, acc.transmittance)
}
