//! Cross-view depth warping, visibility masks and coverage scores.

mod mining;

pub use mining::{
    is_interpolated, mine_view_set, select_context_pairs, select_targets, MiningConfig, ViewSet, ANGLE_TOLERANCE,
    MIN_CONTEXT_DISTANCE,
};

use nalgebra::Point3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{DepthMap, PinholeCamera, Raster, VisibilityMask};

/// Log-depth consistency threshold shared by masks and coverage.
pub const DEFAULT_DELTA: f64 = 0.05;
/// A pixel is sky when its sky probability is at least this.
pub const DEFAULT_SKY_CUTOFF: f64 = 0.5;
pub const DEFAULT_COVERAGE_THRESHOLD: f64 = 0.5;
pub const DEFAULT_VISIBILITY_THRESHOLD: f64 = 0.9;

pub type ViewId = u32;

/// Per-pixel sky probability in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkyProbability(Raster);

impl SkyProbability {
    pub fn new(raster: Raster) -> Result<Self> {
        if raster.channels() != 1 {
            return Err(Error::dims("1 channel", format!("{} channels", raster.channels())));
        }
        if let Some(v) = raster.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidRaster(format!("sky probability {v} outside [0, 1]")));
        }
        Ok(Self(raster))
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self(Raster::zeros(width, height, 1))
    }

    pub fn raster(&self) -> &Raster {
        &self.0
    }

    pub fn values(&self) -> &[f64] {
        self.0.data()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    /// Bits set where the pixel is sky.
    pub fn sky_mask(&self, cutoff: f64) -> VisibilityMask {
        let bits = self.values().iter().map(|p| *p >= cutoff).collect();
        VisibilityMask::new(self.width(), self.height(), bits).expect("same size")
    }
}

/// A view with its camera, scale-aligned depth and sky probabilities.
#[derive(Debug, Clone)]
pub struct ViewRecord {
    pub id: ViewId,
    pub camera: PinholeCamera,
    pub depth: DepthMap,
    pub sky: SkyProbability,
}

impl ViewRecord {
    pub fn new(id: ViewId, camera: PinholeCamera, depth: DepthMap, sky: SkyProbability) -> Result<Self> {
        depth.check_size(camera.width, camera.height)?;
        if sky.width() != camera.width || sky.height() != camera.height {
            return Err(Error::dims(
                format!("{}x{}", camera.width, camera.height),
                format!("{}x{} sky", sky.width(), sky.height()),
            ));
        }
        Ok(Self { id, camera, depth, sky })
    }

    pub fn without_sky(id: ViewId, camera: PinholeCamera, depth: DepthMap) -> Result<Self> {
        let sky = SkyProbability::zeros(camera.width, camera.height);
        Self::new(id, camera, depth, sky)
    }

    pub fn non_sky_count(&self, cutoff: f64) -> usize {
        self.sky.values().iter().filter(|p| **p < cutoff).count()
    }
}

/// Warps `src` depth into `dst` and compares log depths.
///
/// For each `src` pixel: unproject with the `src` depth, express the point in the
/// `dst` camera frame (its z is the warped depth), project, sample the `dst` depth at
/// the containing pixel and return `|log sampled − log warped|`. Pixels that leave the
/// `dst` image, fall behind it, or touch an invalid depth are flagged invalid and carry
/// a residual of 0.
pub fn log_depth_residual(src: &ViewRecord, dst: &ViewRecord) -> (Raster, VisibilityMask) {
    let w = src.camera.width;
    let (residual, valid): (Vec<f64>, Vec<bool>) = (0..src.camera.pixel_count())
        .into_par_iter()
        .map(|i| match warp_residual(src, dst, i % w, i / w) {
            Some(r) => (r, true),
            None => (0.0, false),
        })
        .unzip();
    (
        Raster::new(w, src.camera.height, 1, residual).expect("finite residuals"),
        VisibilityMask::new(w, src.camera.height, valid).expect("same size"),
    )
}

fn warp_residual(src: &ViewRecord, dst: &ViewRecord, u: usize, v: usize) -> Option<f64> {
    let d = src.depth.get(u, v)?;
    let cam_pt = src.camera.unproject_camera(&PinholeCamera::pixel_center(u, v), d);
    let world: Point3<f64> = src.camera.pose.inverse_transform_point(&cam_pt);
    let in_dst = dst.camera.pose.transform_point(&world);
    let (pixel, warped) = dst.camera.project_camera_point(&in_dst).ok()?;
    let (du, dv) = dst.camera.pixel_index(&pixel)?;
    let sampled = dst.depth.get(du, dv)?;
    Some((sampled.ln() - warped.ln()).abs())
}

/// Bits set where the `src → dst` residual is valid and below `delta`.
pub fn consistency_mask(src: &ViewRecord, dst: &ViewRecord, delta: f64) -> VisibilityMask {
    let (residual, valid) = log_depth_residual(src, dst);
    let bits = residual
        .data()
        .iter()
        .zip(valid.bits())
        .map(|(r, ok)| *ok && *r < delta)
        .collect();
    VisibilityMask::new(residual.width(), residual.height(), bits).expect("same size")
}

/// Target-view mask: set where at least one context observes the pixel consistently.
pub fn visibility_mask(target: &ViewRecord, contexts: &[&ViewRecord], delta: f64) -> Result<VisibilityMask> {
    let (first, rest) = contexts
        .split_first()
        .ok_or_else(|| Error::InvalidConfig("visibility mask needs at least one context view".into()))?;
    rest.iter().try_fold(consistency_mask(target, first, delta), |acc, ctx| {
        acc.union(&consistency_mask(target, ctx, delta))
    })
}

/// Mask extended with every pixel whose sky probability reaches `cutoff`.
pub fn extend_with_sky(mask: &VisibilityMask, sky: &SkyProbability, cutoff: f64) -> Result<VisibilityMask> {
    mask.check_size(sky.width(), sky.height())?;
    mask.union(&sky.sky_mask(cutoff))
}

/// Fraction of the non-sky pixels of `view` that are set in `mask`.
pub fn non_sky_fraction(view: &ViewRecord, mask: &VisibilityMask, sky_cutoff: f64) -> Result<f64> {
    let (mut hits, mut total) = (0usize, 0usize);
    for (p, bit) in view.sky.values().iter().zip(mask.bits()) {
        if *p < sky_cutoff {
            total += 1;
            hits += usize::from(*bit);
        }
    }
    if total == 0 {
        return Err(Error::EmptyRegion(format!("view {} has no non-sky pixels", view.id)));
    }
    Ok(hits as f64 / total as f64)
}

/// One-directional coverage of `a` by `b` over the non-sky pixels of `a`.
pub fn coverage(a: &ViewRecord, b: &ViewRecord, delta: f64, sky_cutoff: f64) -> Result<f64> {
    if a.non_sky_count(sky_cutoff) == 0 {
        return Err(Error::EmptyRegion(format!("view {} has no non-sky pixels", a.id)));
    }
    non_sky_fraction(a, &consistency_mask(a, b, delta), sky_cutoff)
}

/// `min(coverage(a, b), coverage(b, a))`.
pub fn symmetric_coverage(a: &ViewRecord, b: &ViewRecord, delta: f64, sky_cutoff: f64) -> Result<f64> {
    Ok(coverage(a, b, delta, sky_cutoff)?.min(coverage(b, a, delta, sky_cutoff)?))
}
