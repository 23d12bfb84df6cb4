//! Real spherical-harmonic color evaluation, degrees 0 through 3.
//!
//! Basis constants and sign convention follow the layout used by common
//! Gaussian-splat assets, so coefficients loaded from those files evaluate to
//! the colors their authors intended. Colors are offset by 0.5 and clamped
//! to `[0, 1]`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub const MAX_SH_DEGREE: u8 = 3;
pub const MAX_SH_COEFFS: usize = 16;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Number of coefficients per channel for a given degree.
pub const fn coeffs_for_degree(degree: u8) -> usize {
    let d = degree as usize + 1;
    d * d
}

/// Degree whose coefficient count is exactly `count`, if any.
pub fn degree_for_coeffs(count: usize) -> Option<u8> {
    (0..=MAX_SH_DEGREE).find(|&d| coeffs_for_degree(d) == count)
}

/// Spherical-harmonic color coefficients, zero-padded to degree 3.
///
/// `coeffs[k][c]` is basis function `k` for color channel `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShCoeffs {
    pub degree: u8,
    pub coeffs: [[f64; 3]; MAX_SH_COEFFS],
}

impl Default for ShCoeffs {
    fn default() -> Self {
        Self {
            degree: 0,
            coeffs: [[0.0; 3]; MAX_SH_COEFFS],
        }
    }
}

impl ShCoeffs {
    /// Degree-0 coefficients reproducing `rgb` for every view direction
    /// (before clamping).
    pub fn from_rgb(rgb: [f64; 3]) -> Self {
        let mut sh = Self::default();
        for c in 0..3 {
            sh.coeffs[0][c] = (rgb[c] - 0.5) / SH_C0;
        }
        sh
    }

    /// Builds coefficients from per-channel lists of equal length.
    pub fn from_channels(channels: [&[f64]; 3]) -> Option<Self> {
        let n = channels[0].len();
        if channels.iter().any(|ch| ch.len() != n) {
            return None;
        }
        let degree = degree_for_coeffs(n)?;
        let mut sh = Self {
            degree,
            ..Self::default()
        };
        for (c, ch) in channels.iter().enumerate() {
            for (k, v) in ch.iter().enumerate() {
                sh.coeffs[k][c] = *v;
            }
        }
        Some(sh)
    }

    pub fn num_coeffs(&self) -> usize {
        coeffs_for_degree(self.degree)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().flatten().all(|v| v.is_finite())
    }
}

/// Evaluates the real SH basis for a unit direction; entries beyond
/// `degree` are zero.
pub fn sh_basis(degree: u8, dir: &Vector3<f64>) -> [f64; MAX_SH_COEFFS] {
    let mut out = [0.0; MAX_SH_COEFFS];
    out[0] = SH_C0;
    if degree == 0 {
        return out;
    }
    let (x, y, z) = (dir.x, dir.y, dir.z);
    out[1] = -SH_C1 * y;
    out[2] = SH_C1 * z;
    out[3] = -SH_C1 * x;
    if degree == 1 {
        return out;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    out[4] = SH_C2[0] * xy;
    out[5] = SH_C2[1] * yz;
    out[6] = SH_C2[2] * (2.0 * zz - xx - yy);
    out[7] = SH_C2[3] * xz;
    out[8] = SH_C2[4] * (xx - yy);
    if degree == 2 {
        return out;
    }
    out[9] = SH_C3[0] * y * (3.0 * xx - yy);
    out[10] = SH_C3[1] * xy * z;
    out[11] = SH_C3[2] * y * (4.0 * zz - xx - yy);
    out[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
    out[14] = SH_C3[5] * z * (xx - yy);
    out[15] = SH_C3[6] * x * (xx - 3.0 * yy);
    out
}

/// View-dependent RGB color in `[0, 1]`.
pub fn eval_sh(sh: &ShCoeffs, view_dir: &Vector3<f64>) -> [f64; 3] {
    let basis = sh_basis(sh.degree, view_dir);
    let n = sh.num_coeffs();
    let mut rgb = [0.5; 3];
    for (k, b) in basis.iter().take(n).enumerate() {
        for (c, out) in rgb.iter_mut().enumerate() {
            *out += sh.coeffs[k][c] * b;
        }
    }
    rgb.map(|v| v.clamp(0.0, 1.0))
}
