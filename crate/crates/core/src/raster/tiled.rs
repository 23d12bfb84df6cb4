use rayon::prelude::*;

use super::{project_and_sort, PixelAccum, ProjectedSplat};
use crate::camera::Camera;
use crate::image::ImageBuffer;
use crate::splat::SplatScene;

pub const DEFAULT_TILE_SIZE: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RasterConfig {
    /// Square tile edge in pixels.
    pub tile_size: u32,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            tile_size: DEFAULT_TILE_SIZE,
        }
    }
}

/// Tile-binned renderer with the same output contract as
/// [`render_oracle`](super::render_oracle).
pub fn render_fast(scene: &SplatScene, camera: &Camera) -> ImageBuffer {
    render_fast_with(scene, camera, &RasterConfig::default())
}

pub fn render_fast_with(scene: &SplatScene, camera: &Camera, config: &RasterConfig) -> ImageBuffer {
    let tile = config.tile_size.max(1);
    let (w, h) = (camera.width, camera.height);
    let tiles_x = w.div_ceil(tile);
    let tiles_y = h.div_ceil(tile);

    let splats = project_and_sort(scene, camera);
    let bins = bin_splats(&splats, tile, tiles_x, tiles_y, w, h);

    let blocks: Vec<Vec<([f32; 3], f32)>> = bins
        .par_iter()
        .enumerate()
        .map(|(t, list)| {
            let tx = t as u32 % tiles_x;
            let ty = t as u32 / tiles_x;
            let x0 = tx * tile;
            let y0 = ty * tile;
            let x1 = (x0 + tile).min(w);
            let y1 = (y0 + tile).min(h);
            render_tile(&splats, list, [x0, y0, x1, y1])
        })
        .collect();

    let mut img = ImageBuffer::new(w, h);
    let mut trans = vec![1.0f32; img.rgb.len()];
    for (t, block) in blocks.iter().enumerate() {
        let x0 = (t as u32 % tiles_x) * tile;
        let y0 = (t as u32 / tiles_x) * tile;
        let bw = (x0 + tile).min(w) - x0;
        for (j, (rgb, tr)) in block.iter().enumerate() {
            let x = x0 + j as u32 % bw;
            let y = y0 + j as u32 / bw;
            let i = img.index(x, y);
            img.rgb[i] = *rgb;
            trans[i] = *tr;
        }
    }
    img.transmittance = Some(trans);
    img
}

/// Per-tile lists of indices into the sorted splat array. Pushing in sorted
/// order keeps every list depth-sorted.
fn bin_splats(splats: &[ProjectedSplat], tile: u32, tiles_x: u32, tiles_y: u32, w: u32, h: u32) -> Vec<Vec<u32>> {
    let mut bins = vec![Vec::new(); (tiles_x * tiles_y) as usize];
    for (i, s) in splats.iter().enumerate() {
        let Some([x0, y0, x1, y1]) = clip_bounds(s.pixel_bounds(), w, h) else {
            continue;
        };
        for ty in y0 / tile..=y1 / tile {
            for tx in x0 / tile..=x1 / tile {
                bins[(ty * tiles_x + tx) as usize].push(i as u32);
            }
        }
    }
    bins
}

fn clip_bounds(b: [i64; 4], w: u32, h: u32) -> Option<[u32; 4]> {
    let x0 = b[0].max(0);
    let y0 = b[1].max(0);
    let x1 = b[2].min(w as i64 - 1);
    let y1 = b[3].min(h as i64 - 1);
    (x0 <= x1 && y0 <= y1).then_some([x0 as u32, y0 as u32, x1 as u32, y1 as u32])
}

/// Splat-major traversal: each splat touches only the pixels of its
/// bounding box inside the tile, but every pixel still sees its splats in
/// global depth order.
fn render_tile(splats: &[ProjectedSplat], list: &[u32], rect: [u32; 4]) -> Vec<([f32; 3], f32)> {
    let [x0, y0, x1, y1] = rect;
    let bw = (x1 - x0) as usize;
    let bh = (y1 - y0) as usize;
    let mut acc = vec![PixelAccum::default(); bw * bh];
    let mut remaining = bw * bh;

    for &si in list {
        let s = &splats[si as usize];
        let b = s.pixel_bounds();
        let sx0 = b[0].max(x0 as i64) as u32;
        let sy0 = b[1].max(y0 as i64) as u32;
        let sx1 = b[2].min(x1 as i64 - 1);
        let sy1 = b[3].min(y1 as i64 - 1);
        if sx1 < sx0 as i64 || sy1 < sy0 as i64 {
            continue;
        }
        for y in sy0..=sy1 as u32 {
            let row = (y - y0) as usize * bw;
            for x in sx0..=sx1 as u32 {
                let a = &mut acc[row + (x - x0) as usize];
                if a.done {
                    continue;
                }
                if a.blend(s, x as f64, y as f64) {
                    remaining -= 1;
                }
            }
        }
        if remaining == 0 {
            break;
        }
    }
    acc.iter().map(PixelAccum::finish).collect()
}
