//! Image-quality metrics on linear-RGB buffers.
//!
//! Both metrics read the stored linear values directly; no gamma encode is
//! applied first.

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Reported PSNR for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn check_sizes(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if !a.same_size(b) {
        return Err(Error::InvalidInput(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// Mean squared error over all pixels and channels.
pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_sizes(a, b)?;
    if a.rgb.is_empty() {
        return Err(Error::InvalidInput("empty images".into()));
    }
    let sum: f64 = a
        .rgb
        .iter()
        .zip(&b.rgb)
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] as f64 - q[c] as f64).powi(2)))
        .sum();
    Ok(sum / (3 * a.rgb.len()) as f64)
}

/// Peak signal-to-noise ratio in dB with unit peak, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((-10.0 * m.log10()).min(PSNR_CAP_DB))
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut t = [0.0; SSIM_WINDOW];
    for (i, v) in t.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = t.iter().sum();
    t.map(|v| v / s)
}

/// Valid-region separable filter of a `w`×`h` plane.
fn filter(plane: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&line[x..]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(k, t)| t * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Windowed structural similarity, averaged over every valid window position
/// and the three channels.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_sizes(a, b)?;
    let (w, h) = (a.width as usize, a.height as usize);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!(
            "ssim needs both sides >= {SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let taps = gaussian_taps();
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..3 {
        let x: Vec<f64> = a.rgb.iter().map(|p| p[c] as f64).collect();
        let y: Vec<f64> = b.rgb.iter().map(|p| p[c] as f64).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let [mx, my, mxx, myy, mxy] = [&x, &y, &xx, &yy, &xy].map(|p| filter(p, w, h, &taps));
        for i in 0..mx.len() {
            let (u, v) = (mx[i], my[i]);
            let sx = mxx[i] - u * u;
            let sy = myy[i] - v * v;
            let sxy = mxy[i] - u * v;
            let num = (2.0 * u * v + SSIM_C1) * (2.0 * sxy + SSIM_C2);
            let den = (u * u + v * v + SSIM_C1) * (sx + sy + SSIM_C2);
            total += num / den;
        }
        count += mx.len();
    }
    Ok(total / count as f64)
}

/// Both metrics for one image pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub psnr_db: f64,
    pub ssim: f64,
}

impl MetricsReport {
    pub fn compute(a: &ImageBuffer, b: &ImageBuffer) -> Result<Self> {
        Ok(Self {
            psnr_db: psnr(a, b)?,
            ssim: ssim(a, b)?,
        })
    }

    /// Single machine-readable line: `psnr_db=<f> ssim=<f> lpips=unavailable`.
    pub fn to_line(&self) -> String {
        format!("psnr_db={:.4} ssim={:.6} lpips=unavailable", self.psnr_db, self.ssim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quantize(v: f64) -> f32 {
        ((v * 255.0).round() / 255.0) as f32
    }

    fn noisy(w: u32, h: u32, seed: u64, amp: f64) -> ImageBuffer {
        use rand::{Rng, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut img = ImageBuffer::new(w, h);
        for p in &mut img.rgb {
            *p = [0; 3].map(|_| (0.5 + amp * r.random_range(-1.0..1.0)) as f32);
        }
        img
    }

    #[test]
    fn identical_images_hit_the_cap() {
        let a = noisy(16, 16, 1, 0.3);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantized_offset_gives_expected_psnr() {
        let mut a = ImageBuffer::new(32, 24);
        let mut b = ImageBuffer::new(32, 24);
        for (i, (p, q)) in a.rgb.iter_mut().zip(&mut b.rgb).enumerate() {
            let level = (i * 7 % 200) as f64 / 255.0;
            *p = [quantize(level); 3];
            *q = [quantize(level + 10.0 / 255.0); 3];
        }
        let expected = 20.0 * (255.0f64 / 10.0).log10();
        assert!((expected - 28.13).abs() < 0.01);
        assert!((psnr(&a, &b).unwrap() - expected).abs() < 1e-4);
    }

    #[test]
    fn black_versus_white_is_zero_db() {
        let a = ImageBuffer::filled(8, 8, [0.0; 3]);
        let b = ImageBuffer::filled(8, 8, [1.0; 3]);
        assert_eq!(psnr(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn constant_images_match_closed_form() {
        for (m1, m2) in [(0.2, 0.7), (0.5, 0.5), (0.0, 1.0), (0.9, 0.85)] {
            let a = ImageBuffer::filled(13, 12, [m1 as f32; 3]);
            let b = ImageBuffer::filled(13, 12, [m2 as f32; 3]);
            let (u, v) = (m1 as f32 as f64, m2 as f32 as f64);
            let expected = (2.0 * u * v + SSIM_C1) / (u * u + v * v + SSIM_C1);
            assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn taps_are_normalized_and_symmetric() {
        let t = gaussian_taps();
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..SSIM_WINDOW {
            assert_eq!(t[i], t[SSIM_WINDOW - 1 - i]);
        }
        assert!((t[6] / t[5] - (-1.0 / (2.0 * 2.25f64)).exp()).abs() < 1e-15);
    }

    // Direct 2-D window sum at one position, independent of the separable path.
    #[test]
    fn separable_filter_matches_direct_window() {
        let a = noisy(14, 12, 3, 0.4);
        let b = noisy(14, 12, 4, 0.4);
        let t = gaussian_taps();
        let mut total = 0.0;
        let mut n = 0;
        for c in 0..3 {
            for oy in 0..2 {
                for ox in 0..4 {
                    let (mut u, mut v, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for j in 0..11 {
                        for i in 0..11 {
                            let w = t[i] * t[j];
                            let p = a.pixel(ox + i as u32, oy + j as u32)[c] as f64;
                            let q = b.pixel(ox + i as u32, oy + j as u32)[c] as f64;
                            u += w * p;
                            v += w * q;
                            xx += w * p * p;
                            yy += w * q * q;
                            xy += w * p * q;
                        }
                    }
                    let num = (2.0 * u * v + SSIM_C1) * (2.0 * (xy - u * v) + SSIM_C2);
                    let den = (u * u + v * v + SSIM_C1) * (xx - u * u + yy - v * v + SSIM_C2);
                    total += num / den;
                    n += 1;
                }
            }
        }
        assert!((ssim(&a, &b).unwrap() - total / n as f64).abs() < 1e-12);
    }

    #[test]
    fn errors_on_bad_sizes() {
        let a = ImageBuffer::new(10, 20);
        let b = ImageBuffer::new(20, 10);
        assert!(matches!(psnr(&a, &b), Err(Error::InvalidInput(_))));
        assert!(matches!(ssim(&a, &a), Err(Error::InvalidInput(_))));
        assert!(matches!(psnr(&ImageBuffer::new(0, 0), &ImageBuffer::new(0, 0)), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn report_line_format() {
        let r = MetricsReport { psnr_db: 28.1291, ssim: 0.5 };
        assert_eq!(r.to_line(), "psnr_db=28.1291 ssim=0.500000 lpips=unavailable");
    }

    /// Shifts `img` content by (dx, dy) with wraparound.
    fn roll(img: &ImageBuffer, dx: u32, dy: u32) -> ImageBuffer {
        let mut out = img.clone();
        for y in 0..img.height {
            for x in 0..img.width {
                let i = out.index((x + dx) % img.width, (y + dy) % img.height);
                out.rgb[i] = img.pixel(x, y);
            }
        }
        out
    }

    /// Pastes `patch` into a constant canvas at (ox, oy).
    fn embed(patch: &ImageBuffer, w: u32, h: u32, ox: u32, oy: u32) -> ImageBuffer {
        let mut out = ImageBuffer::filled(w, h, [0.25; 3]);
        for y in 0..patch.height {
            for x in 0..patch.width {
                let i = out.index(ox + x, oy + y);
                out.rgb[i] = patch.pixel(x, y);
            }
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn metrics_are_symmetric_and_bounded(s1 in 0u64..1000, s2 in 0u64..1000, amp in 0.01f64..0.5) {
            let a = noisy(16, 13, s1, amp);
            let b = noisy(16, 13, s2 + 1000, 0.5 - amp * 0.5);
            prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
            let (s_ab, s_ba) = (ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
            prop_assert!((s_ab - s_ba).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&s_ab));
        }

        #[test]
        fn psnr_decreases_with_noise_amplitude(seed in 0u64..1000, amp in 0.001f64..0.2, extra in 0.001f64..0.2) {
            let base = ImageBuffer::filled(12, 12, [0.5; 3]);
            let lo = noisy(12, 12, seed, amp);
            let hi = noisy(12, 12, seed, amp + extra);
            prop_assert!(psnr(&base, &hi).unwrap() < psnr(&base, &lo).unwrap());
        }

        #[test]
        fn joint_translation_leaves_metrics_unchanged(s in 0u64..1000, dx in 0u32..8, dy in 0u32..8) {
            let pa = noisy(9, 7, s, 0.3);
            let pb = noisy(9, 7, s + 7, 0.3);
            // Content stays at least a window away from the border in both placements.
            let a0 = embed(&pa, 48, 40, 12, 12);
            let b0 = embed(&pb, 48, 40, 12, 12);
            let a1 = embed(&pa, 48, 40, 12 + dx, 12 + dy);
            let b1 = embed(&pb, 48, 40, 12 + dx, 12 + dy);
            prop_assert!((ssim(&a0, &b0).unwrap() - ssim(&a1, &b1).unwrap()).abs() < 1e-12);
            prop_assert_eq!(psnr(&a0, &b0).unwrap(), psnr(&a1, &b1).unwrap());
            let (ra, rb) = (roll(&pa, dx, dy), roll(&pb, dx, dy));
            prop_assert!((psnr(&pa, &pb).unwrap() - psnr(&ra, &rb).unwrap()).abs() < 1e-12);
        }
    }
}
