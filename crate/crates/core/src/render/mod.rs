//! Forward tile-based Gaussian splatting.
//!
//! Primitives are projected, globally sorted by camera depth (ties by input index),
//! binned into 16x16 tiles by their 3σ footprint and composited front to back per
//! pixel. Tiles are shaded in parallel; each owns its pixels, so the output does not
//! depend on the thread count. There is no backward pass; a differentiable variant
//! would add a reverse traversal over the same per-tile lists.

mod metrics;
mod project;

pub use metrics::{masked_mse, photometric_loss, psnr, PerceptualMetric, LPIPS_WEIGHT, PSNR_CAP};
pub use project::{
    cov3d, project_covariance, project_gaussian, projection_jacobian, rotation_matrix, ProjectedGaussian,
    COV2D_DILATION, FOOTPRINT_SIGMAS, NEAR_PLANE,
};

use rayon::prelude::*;

use crate::gaussians::GaussianSet;
use crate::geom::{ImageBuffer, PinholeCamera, Raster};

pub const TILE_SIZE: usize = 16;
pub const MAX_ALPHA: f64 = 0.99;
pub const MIN_ALPHA: f64 = 1.0 / 255.0;
pub const MIN_TRANSMITTANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    /// Colors composited over a black background.
    pub color: ImageBuffer,
    /// `1 − T` after compositing, in `[0, 1]`.
    pub accum_alpha: Raster,
    /// Blend-weighted camera depth normalized by accumulated alpha; 0 where nothing landed.
    pub expected_depth: Raster,
}

/// Projects and depth-sorts the visible primitives of `gaussians`.
pub fn project_all(gaussians: &GaussianSet, camera: &PinholeCamera) -> Vec<ProjectedGaussian> {
    let mut projected: Vec<(usize, ProjectedGaussian)> = (0..gaussians.len())
        .into_par_iter()
        .filter_map(|i| {
            project_gaussian(
                camera,
                &gaussians.means[i],
                gaussians.rotations[i],
                &gaussians.scales[i],
                gaussians.opacities[i],
                gaussians.sh_of(i),
                gaussians.sh_degree,
            )
            .map(|g| (i, g))
        })
        .collect();
    projected.sort_by(|a, b| a.1.view_depth.total_cmp(&b.1.view_depth).then(a.0.cmp(&b.0)));
    projected.into_iter().map(|(_, g)| g).collect()
}

struct TileGrid {
    tiles_x: usize,
    tiles_y: usize,
}

impl TileGrid {
    fn new(camera: &PinholeCamera) -> Self {
        Self {
            tiles_x: camera.width.div_ceil(TILE_SIZE),
            tiles_y: camera.height.div_ceil(TILE_SIZE),
        }
    }

    /// Inclusive tile range covered by a footprint, clipped to the grid.
    fn range(&self, g: &ProjectedGaussian) -> Option<(usize, usize, usize, usize)> {
        let t = TILE_SIZE as f64;
        let x0 = ((g.mean2d.x - g.radius) / t).floor().max(0.0);
        let y0 = ((g.mean2d.y - g.radius) / t).floor().max(0.0);
        let x1 = ((g.mean2d.x + g.radius) / t).floor().min(self.tiles_x as f64 - 1.0);
        let y1 = ((g.mean2d.y + g.radius) / t).floor().min(self.tiles_y as f64 - 1.0);
        (x0 <= x1 && y0 <= y1).then_some((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
    }

    /// Per-tile lists of indices into the depth-sorted slice; each list stays sorted.
    fn bin(&self, sorted: &[ProjectedGaussian]) -> Vec<Vec<u32>> {
        let mut lists = vec![Vec::new(); self.tiles_x * self.tiles_y];
        for (i, g) in sorted.iter().enumerate() {
            if let Some((x0, y0, x1, y1)) = self.range(g) {
                for ty in y0..=y1 {
                    for tx in x0..=x1 {
                        lists[ty * self.tiles_x + tx].push(i as u32);
                    }
                }
            }
        }
        lists
    }
}

#[derive(Clone, Copy)]
struct PixelResult {
    rgb: [f64; 3],
    transmittance: f64,
    depth_sum: f64,
}

/// Front-to-back compositing of an ordered primitive list at one continuous pixel.
fn composite(sorted: &[ProjectedGaussian], list: &[u32], px: f64, py: f64) -> PixelResult {
    let mut out = PixelResult {
        rgb: [0.0; 3],
        transmittance: 1.0,
        depth_sum: 0.0,
    };
    for &i in list {
        let g = &sorted[i as usize];
        let dx = px - g.mean2d.x;
        let dy = py - g.mean2d.y;
        let power = -0.5 * (g.conic[(0, 0)] * dx * dx + 2.0 * g.conic[(0, 1)] * dx * dy + g.conic[(1, 1)] * dy * dy);
        if power > 0.0 {
            continue;
        }
        let alpha = (g.alpha * power.exp()).min(MAX_ALPHA);
        if alpha < MIN_ALPHA {
            continue;
        }
        let w = alpha * out.transmittance;
        for c in 0..3 {
            out.rgb[c] += g.rgb[c] * w;
        }
        out.depth_sum += g.view_depth * w;
        out.transmittance *= 1.0 - alpha;
        if out.transmittance < MIN_TRANSMITTANCE {
            break;
        }
    }
    out
}

pub fn rasterize(gaussians: &GaussianSet, camera: &PinholeCamera) -> RenderOutput {
    let sorted = project_all(gaussians, camera);
    let grid = TileGrid::new(camera);
    let lists = grid.bin(&sorted);
    let (w, h) = (camera.width, camera.height);

    let tiles: Vec<Vec<PixelResult>> = lists
        .par_iter()
        .enumerate()
        .map(|(t, list)| {
            let (tx, ty) = (t % grid.tiles_x, t / grid.tiles_x);
            let (u0, v0) = (tx * TILE_SIZE, ty * TILE_SIZE);
            let (u1, v1) = ((u0 + TILE_SIZE).min(w), (v0 + TILE_SIZE).min(h));
            let mut out = Vec::with_capacity((u1 - u0) * (v1 - v0));
            for v in v0..v1 {
                for u in u0..u1 {
                    out.push(composite(&sorted, list, u as f64 + 0.5, v as f64 + 0.5));
                }
            }
            out
        })
        .collect();

    let mut color = vec![0.0; w * h * 3];
    let mut alpha = vec![0.0; w * h];
    let mut depth = vec![0.0; w * h];
    for (t, pixels) in tiles.iter().enumerate() {
        let (tx, ty) = (t % grid.tiles_x, t / grid.tiles_x);
        let (u0, v0) = (tx * TILE_SIZE, ty * TILE_SIZE);
        let tile_w = (u0 + TILE_SIZE).min(w) - u0;
        for (k, px) in pixels.iter().enumerate() {
            let (u, v) = (u0 + k % tile_w, v0 + k / tile_w);
            let i = v * w + u;
            color[i * 3..i * 3 + 3].copy_from_slice(&px.rgb);
            let a = (1.0 - px.transmittance).clamp(0.0, 1.0);
            alpha[i] = a;
            depth[i] = if a > 0.0 { px.depth_sum / a } else { 0.0 };
        }
    }
    RenderOutput {
        color: ImageBuffer::from_clamped(w, h, 3, color).expect("render buffer is well formed"),
        accum_alpha: Raster::new(w, h, 1, alpha).expect("render buffer is well formed"),
        expected_depth: Raster::new(w, h, 1, depth).expect("render buffer is well formed"),
    }
}
