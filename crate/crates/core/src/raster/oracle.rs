use super::{composite_pixel, depth_order, Projector, SUPPORT_SQ};
use crate::camera::Camera;
use crate::image::ImageBuffer;
use crate::splat::SplatScene;

/// Reference renderer: every pixel gathers all covering splats from one
/// global depth sort and composites them. Quadratic, single-threaded and
/// deliberately simple.
pub fn render_oracle(scene: &SplatScene, camera: &Camera) -> ImageBuffer {
    let projector = Projector::new(camera);
    let mut splats: Vec<_> = scene
        .kernels
        .iter()
        .enumerate()
        .filter_map(|(i, k)| projector.project(k, i))
        .collect();
    splats.sort_by(depth_order);

    let mut img = ImageBuffer::new(camera.width, camera.height);
    let mut trans = vec![1.0f32; img.rgb.len()];
    let mut covering = Vec::new();
    for y in 0..camera.height {
        for x in 0..camera.width {
            let (px, py) = (x as f64, y as f64);
            covering.clear();
            covering.extend(splats.iter().filter(|s| {
                let dx = px - s.pixel_mean[0];
                let dy = py - s.pixel_mean[1];
                s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy <= SUPPORT_SQ
            }).cloned());
            let (rgb, t) = composite_pixel(&covering, [px, py]);
            let i = img.index(x, y);
            img.rgb[i] = rgb.map(|v| v.clamp(0.0, 1.0) as f32);
            trans[i] = t.clamp(0.0, 1.0) as f32;
        }
    }
    img.transmittance = Some(trans);
    img
}
