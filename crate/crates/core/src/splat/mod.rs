//! Gaussian scene representation and closed-form kernel math.
//!
//! A kernel's covariance is always handled in factored form
//! `Σ = R·S·Sᵀ·Rᵀ`; the inverse used for density evaluation is
//! `R·S⁻²·Rᵀ`, applied without ever forming or inverting `Σ`.

pub mod sh;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use sh::{eval_sh, ShCoeffs};

/// Quaternions whose norm is further than this from 1 on ingestion are
/// renormalized with a warning.
pub const QUATERNION_DRIFT_WARN: f64 = 1e-3;

/// One anisotropic 3D Gaussian splat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    pub mean: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    /// Per-axis standard deviations in the kernel's local frame.
    pub scale: Vector3<f64>,
    pub opacity: f64,
    pub sh: ShCoeffs,
    pub object_id: u32,
}

impl GaussianKernel {
    /// Builds a validated kernel.
    pub fn new(
        mean: Vector3<f64>,
        rotation: UnitQuaternion<f64>,
        scale: Vector3<f64>,
        opacity: f64,
        sh: ShCoeffs,
        object_id: u32,
    ) -> Result<Self> {
        let k = Self {
            mean,
            rotation,
            scale,
            opacity,
            sh,
            object_id,
        };
        k.validate()?;
        Ok(k)
    }

    /// An isotropic kernel with a constant color; mostly for tests and fixtures.
    pub fn isotropic(mean: Vector3<f64>, sigma: f64, opacity: f64, rgb: [f64; 3]) -> Self {
        Self {
            mean,
            rotation: UnitQuaternion::identity(),
            scale: Vector3::repeat(sigma),
            opacity,
            sh: ShCoeffs::from_rgb(rgb),
            object_id: 0,
        }
    }

    pub fn with_object(mut self, object_id: u32) -> Self {
        self.object_id = object_id;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("kernel mean is not finite".into()));
        }
        if (self.rotation.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "kernel rotation norm {} is not unit",
                self.rotation.norm()
            )));
        }
        check_scale(&self.scale)?;
        if !(self.opacity > 0.0 && self.opacity <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "opacity {} outside (0, 1]",
                self.opacity
            )));
        }
        if self.sh.degree > sh::MAX_SH_DEGREE || !self.sh.is_finite() {
            return Err(Error::InvalidParameter("invalid SH coefficients".into()));
        }
        Ok(())
    }

    pub fn covariance(&self) -> Covariance3 {
        Covariance3::from_factors(&self.rotation, &self.scale)
    }

    pub fn max_scale(&self) -> f64 {
        self.scale.max()
    }
}

fn check_scale(scale: &Vector3<f64>) -> Result<()> {
    if scale.iter().all(|s| s.is_finite() && *s > 0.0) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "scale components must be > 0, got ({}, {}, {})",
            scale.x, scale.y, scale.z
        )))
    }
}

/// Normalizes a raw `(w, x, y, z)` quaternion, returning it with the
/// absolute drift of its original norm from 1.
pub fn normalize_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<(UnitQuaternion<f64>, f64)> {
    let q = Quaternion::new(w, x, y, z);
    let n = q.norm();
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::InvalidParameter("zero or non-finite quaternion".into()));
    }
    Ok((UnitQuaternion::from_quaternion(q), (n - 1.0).abs()))
}

/// Symmetric 3×3 covariance in world units squared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariance3(pub Matrix3<f64>);

impl Covariance3 {
    fn from_factors(rotation: &UnitQuaternion<f64>, scale: &Vector3<f64>) -> Self {
        let r = rotation.to_rotation_matrix().into_inner();
        let s2 = Matrix3::from_diagonal(&scale.component_mul(scale));
        let m = r * s2 * r.transpose();
        // Exact symmetry regardless of rounding order.
        Covariance3(0.5 * (m + m.transpose()))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }
}

/// `Σ = R·S·Sᵀ·Rᵀ`.
pub fn covariance_from_rs(rotation: &UnitQuaternion<f64>, scale: &Vector3<f64>) -> Result<Covariance3> {
    check_scale(scale)?;
    Ok(Covariance3::from_factors(rotation, scale))
}

/// `(x−μ)ᵀ Σ⁻¹ (x−μ)` evaluated through the factored inverse.
pub fn mahalanobis_sq(kernel: &GaussianKernel, x: &Vector3<f64>) -> f64 {
    let local = kernel.rotation.inverse_transform_vector(&(x - kernel.mean));
    let u = local.component_div(&kernel.scale);
    u.norm_squared()
}

/// Unnormalized Gaussian falloff `exp(−½ (x−μ)ᵀ Σ⁻¹ (x−μ))`.
pub fn eval_kernel(kernel: &GaussianKernel, x: &Vector3<f64>) -> f64 {
    (-0.5 * mahalanobis_sq(kernel, x)).exp()
}

/// Kernel color seen along `view_dir` (unit vector from the eye toward the kernel).
pub fn eval_sh_color(kernel: &GaussianKernel, view_dir: &Vector3<f64>) -> [f64; 3] {
    eval_sh(&kernel.sh, view_dir)
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut b = Aabb { min: first, max: first };
        for p in it {
            b.min = b.min.inf(p);
            b.max = b.max.sup(p);
        }
        Some(b)
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> Vector3<f64> {
        0.5 * (self.min + self.max)
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn padded(&self, pad: f64) -> Self {
        Aabb {
            min: self.min.add_scalar(-pad),
            max: self.max.add_scalar(pad),
        }
    }
}

/// An ordered collection of kernels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplatScene {
    pub kernels: Vec<GaussianKernel>,
}

impl SplatScene {
    pub fn new(kernels: Vec<GaussianKernel>) -> Self {
        Self { kernels }
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    /// Bounds of the kernel means; `None` for an empty scene.
    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::from_points(self.kernels.iter().map(|k| &k.mean))
    }

    /// Sorted, de-duplicated segment labels.
    pub fn object_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.kernels.iter().map(|k| k.object_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn has_object(&self, object_id: u32) -> bool {
        self.kernels.iter().any(|k| k.object_id == object_id)
    }

    /// Indices of the kernels carrying `object_id`.
    pub fn object_indices(&self, object_id: u32) -> Vec<usize> {
        self.kernels
            .iter()
            .enumerate()
            .filter(|(_, k)| k.object_id == object_id)
            .map(|(i, _)| i)
            .collect()
    }

    /// A scene holding only the kernels of one segment, order preserved.
    pub fn segment(&self, object_id: u32) -> Result<SplatScene> {
        let kernels: Vec<_> = self
            .kernels
            .iter()
            .filter(|k| k.object_id == object_id)
            .cloned()
            .collect();
        if kernels.is_empty() {
            return Err(Error::NotFound(format!("object {object_id}")));
        }
        Ok(SplatScene { kernels })
    }

    pub fn validate(&self) -> Result<()> {
        for (i, k) in self.kernels.iter().enumerate() {
            k.validate()
                .map_err(|e| Error::InvalidInput(format!("kernel {i}: {e}")))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Unit;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn kernel(scale: Vector3<f64>, rotation: UnitQuaternion<f64>) -> GaussianKernel {
        GaussianKernel::new(
            Vector3::new(0.3, -1.0, 2.0),
            rotation,
            scale,
            1.0,
            ShCoeffs::default(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn identity_covariance() {
        let c = covariance_from_rs(&UnitQuaternion::identity(), &Vector3::repeat(1.0)).unwrap();
        assert_eq!(*c.matrix(), Matrix3::identity());
    }

    #[test]
    fn diagonal_covariance() {
        let c = covariance_from_rs(&UnitQuaternion::identity(), &Vector3::new(2.0, 1.0, 1.0)).unwrap();
        assert_eq!(*c.matrix(), Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0)));
    }

    #[test]
    fn rotated_covariance_matches_conjugation() {
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
        let c = covariance_from_rs(&q, &Vector3::new(2.0, 1.0, 1.0)).unwrap();
        // Oracle: conjugate diag(4,1,1) by the explicit 90° z-rotation matrix.
        let r = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let expect = r * Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0)) * r.transpose();
        assert!((c.matrix() - expect).abs().max() < 1e-12);
        assert!((c.matrix() - Matrix3::from_diagonal(&Vector3::new(1.0, 4.0, 1.0))).abs().max() < 1e-12);
    }

    #[test]
    fn non_positive_scale_rejected() {
        let q = UnitQuaternion::identity();
        assert!(matches!(
            covariance_from_rs(&q, &Vector3::new(1.0, 0.0, 1.0)),
            Err(Error::InvalidParameter(_))
        ));
        assert!(covariance_from_rs(&q, &Vector3::new(1.0, -2.0, 1.0)).is_err());
    }

    #[test]
    fn kernel_peak_and_one_sigma() {
        let k = kernel(Vector3::repeat(0.7), UnitQuaternion::identity());
        assert_eq!(eval_kernel(&k, &k.mean), 1.0);
        let x = k.mean + Vector3::new(0.0, 0.7, 0.0);
        assert!(close(eval_kernel(&k, &x), (-0.5f64).exp(), 1e-12));
        assert!(close(eval_kernel(&k, &x), 0.606_531, 1e-6));
    }

    #[test]
    fn anisotropic_quadratic_form() {
        let k = kernel(Vector3::new(2.0, 1.0, 1.0), UnitQuaternion::identity());
        let x = k.mean + Vector3::new(2.0, 0.0, 0.0);
        assert!(close(mahalanobis_sq(&k, &x), 1.0, 1e-12));
        assert!(close(eval_kernel(&k, &x), (-0.5f64).exp(), 1e-12));
    }

    #[test]
    fn mahalanobis_simple_cases() {
        let k = kernel(Vector3::repeat(0.5), UnitQuaternion::identity());
        assert_eq!(mahalanobis_sq(&k, &k.mean), 0.0);
        let x = k.mean + Vector3::new(0.0, 0.0, 1.0);
        assert!(close(mahalanobis_sq(&k, &x), 4.0, 1e-12));
    }

    #[test]
    fn invalid_kernels_rejected() {
        let q = UnitQuaternion::identity();
        let s = Vector3::repeat(1.0);
        let sh = ShCoeffs::default();
        assert!(GaussianKernel::new(Vector3::zeros(), q, s, 0.0, sh, 0).is_err());
        assert!(GaussianKernel::new(Vector3::zeros(), q, s, 1.5, sh, 0).is_err());
        assert!(GaussianKernel::new(Vector3::zeros(), q, Vector3::new(1.0, 1.0, 0.0), 0.5, sh, 0).is_err());
    }

    #[test]
    fn quaternion_normalization_reports_drift() {
        let (q, drift) = normalize_quaternion(2.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(q, UnitQuaternion::identity());
        assert!(close(drift, 1.0, 1e-15));
        assert!(normalize_quaternion(0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn segment_filter() {
        let mut scene = SplatScene::default();
        for i in 0..4 {
            scene.kernels.push(
                GaussianKernel::isotropic(Vector3::new(i as f64, 0.0, 0.0), 0.1, 0.5, [0.5; 3])
                    .with_object(i % 2),
            );
        }
        assert_eq!(scene.object_ids(), vec![0, 1]);
        let seg = scene.segment(1).unwrap();
        assert_eq!(seg.len(), 2);
        assert_eq!(seg.kernels[0].mean.x, 1.0);
        assert!(matches!(scene.segment(7), Err(Error::NotFound(_))));
        let b = scene.bounds().unwrap();
        assert!(scene.kernels.iter().all(|k| b.contains(&k.mean)));
    }

    fn arb_unit_quat() -> impl Strategy<Value = UnitQuaternion<f64>> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-3)
            .prop_map(|(w, x, y, z)| UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)))
    }

    fn arb_scale() -> impl Strategy<Value = Vector3<f64>> {
        (0.01..5.0f64, 0.01..5.0f64, 0.01..5.0f64).prop_map(|(a, b, c)| Vector3::new(a, b, c))
    }

    fn arb_point() -> impl Strategy<Value = Vector3<f64>> {
        (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64).prop_map(|(a, b, c)| Vector3::new(a, b, c))
    }

    proptest! {
        #[test]
        fn kernel_value_in_unit_interval(q in arb_unit_quat(), s in arb_scale(), x in arb_point()) {
            let k = kernel(s, q);
            let v = eval_kernel(&k, &x);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v <= eval_kernel(&k, &k.mean));
        }

        #[test]
        fn exp_of_mahalanobis_matches_eval(q in arb_unit_quat(), s in arb_scale(), x in arb_point()) {
            let k = kernel(s, q);
            let a = (-0.5 * mahalanobis_sq(&k, &x)).exp();
            prop_assert!((a - eval_kernel(&k, &x)).abs() <= 1e-12);
        }

        #[test]
        fn factored_inverse_matches_matrix_inverse(q in arb_unit_quat(), s in (0.2..3.0f64, 0.2..3.0f64, 0.2..3.0f64), x in arb_point()) {
            let k = kernel(Vector3::new(s.0, s.1, s.2), q);
            let d = x - k.mean;
            let inv = k.covariance().matrix().try_inverse().unwrap();
            let direct = d.dot(&(inv * d));
            let m = mahalanobis_sq(&k, &x);
            prop_assert!((direct - m).abs() <= 1e-8 * (1.0 + m));
        }

        #[test]
        fn covariance_rotation_equivariant(q in arb_unit_quat(), q0 in arb_unit_quat(), s in arb_scale()) {
            let lhs = covariance_from_rs(&(q * q0), &s).unwrap();
            let r = q.to_rotation_matrix().into_inner();
            let rhs = r * covariance_from_rs(&q0, &s).unwrap().matrix() * r.transpose();
            prop_assert!((lhs.matrix() - rhs).abs().max() <= 1e-9 * (1.0 + s.max() * s.max()));
        }

        #[test]
        fn covariance_eigenvalues_are_squared_scales(q in arb_unit_quat(), s in arb_scale()) {
            let c = covariance_from_rs(&q, &s).unwrap();
            prop_assert!((c.matrix() - c.matrix().transpose()).abs().max() <= 1e-9);
            let mut eig: Vec<f64> = c.matrix().symmetric_eigenvalues().iter().copied().collect();
            eig.sort_by(f64::total_cmp);
            let mut sq: Vec<f64> = s.iter().map(|v| v * v).collect();
            sq.sort_by(f64::total_cmp);
            for (a, b) in eig.iter().zip(&sq) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b));
            }
        }

        #[test]
        fn sh_color_in_unit_cube(coeffs in proptest::collection::vec(-3.0..3.0f64, 48), dir in arb_point()) {
            prop_assume!(dir.norm() > 1e-3);
            let dir = Unit::new_normalize(dir).into_inner();
            let chans: Vec<&[f64]> = coeffs.chunks(16).collect();
            let sh = ShCoeffs::from_channels([chans[0], chans[1], chans[2]]).unwrap();
            let k = GaussianKernel { sh, ..kernel(Vector3::repeat(1.0), UnitQuaternion::identity()) };
            let c = eval_sh_color(&k, &dir);
            prop_assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
