//! Frame-time benchmark: 100k kernels at 640×480, 60 frames along an orbit.

use std::time::Instant;

use meshsplat::raster::render_fast;
use meshsplat::synth;
use nalgebra::Vector3;

fn main() {
    let n = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100_000);
    let (scene, _) = synth::benchmark_scene(n);
    let frames = 60;
    let mut total = 0.0;
    for f in 0..frames {
        let cam = synth::orbit_camera(0.6 + 0.01 * f as f64, 0.35, 3.2, Vector3::zeros(), 640, 480);
        let start = Instant::now();
        let image = render_fast(&scene, &cam);
        total += start.elapsed().as_secs_f64();
        std::hint::black_box(image);
    }
    println!(
        "bench kernels={n} width=640 height=480 frames={frames} mean_ms={:.3} threads={}",
        1e3 * total / frames as f64,
        rayon::current_num_threads()
    );
}
