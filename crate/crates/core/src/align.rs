//! Scale-and-translation alignment of predicted geometry to reference geometry.
//!
//! Minimizes `Σ W(p)·‖a·P(p) + b − P̃(p)‖²` over all pixels of every view pair.
//! Accumulation is per row in parallel followed by a sequential reduction in row
//! order, so results do not depend on the thread count.

use nalgebra::{Matrix4, Point3, SymmetricEigen, Vector3, Vector4};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussians::GaussianSet;
use crate::geom::{PointMap, Raster};
use crate::visibility::{log_depth_residual, ViewRecord};

/// Consistency sharpness for the alignment weights.
pub const DEFAULT_GAMMA: f64 = 10.0;
/// Samples whose normalized residual exceeds this are rejected.
pub const DEFAULT_REJECT_THRESHOLD: f64 = 0.5;
pub const MAX_CONDITION_NUMBER: f64 = 1e12;
pub const MIN_WEIGHTED_POINTS: usize = 4;

/// Per-pixel weights in `[0, 1]` for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentWeights(Raster);

impl AlignmentWeights {
    pub fn new(raster: Raster) -> Result<Self> {
        if raster.channels() != 1 {
            return Err(Error::dims("1 channel", raster.channels()));
        }
        if let Some(w) = raster.data().iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::InvalidRaster(format!("weight {w} outside [0, 1]")));
        }
        Ok(Self(raster))
    }

    pub fn uniform(width: usize, height: usize) -> Self {
        Self(Raster::filled(width, height, 1, 1.0))
    }

    pub fn values(&self) -> &[f64] {
        self.0.data()
    }

    pub fn raster(&self) -> &Raster {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    /// Same pattern multiplied by `c`; `c` must keep weights within `[0, 1]`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let data = self.values().iter().map(|w| w * c).collect();
        Self::new(Raster::new(self.width(), self.height(), 1, data)?)
    }
}

/// `μ ↦ a·μ + b`, `s ↦ a·s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimScaleTranslation {
    pub scale: f64,
    pub translation: Vector3<f64>,
}

impl SimScaleTranslation {
    pub const IDENTITY: SimScaleTranslation = SimScaleTranslation {
        scale: 1.0,
        translation: Vector3::new(0.0, 0.0, 0.0),
    };

    pub fn new(scale: f64, translation: Vector3<f64>) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::NonPositiveScale(scale));
        }
        Ok(Self { scale, translation })
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(p.coords * self.scale + self.translation)
    }
}

fn view_weights(src: &ViewRecord, dst: &ViewRecord, gamma: f64, sky_cutoff: f64) -> Result<AlignmentWeights> {
    let (residual, valid) = log_depth_residual(src, dst);
    let data = residual
        .data()
        .iter()
        .zip(valid.bits())
        .zip(src.sky.values())
        .map(|((r, ok), sky)| if *ok && *sky < sky_cutoff { (-gamma * r).exp() } else { 0.0 })
        .collect();
    AlignmentWeights::new(Raster::new(residual.width(), residual.height(), 1, data)?)
}

/// `W₁(p) = exp(−γ·|log D̃₂(π₁→₂(p)) − log D̃₁→₂(p)|)` on non-sky pixels of view 1,
/// zero elsewhere and where the warp is invalid; `W₂` symmetrically.
pub fn consistency_weights(
    v1: &ViewRecord,
    v2: &ViewRecord,
    gamma: f64,
    sky_cutoff: f64,
) -> Result<(AlignmentWeights, AlignmentWeights)> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidConfig(format!("gamma must be non-negative, got {gamma}")));
    }
    Ok((view_weights(v1, v2, gamma, sky_cutoff)?, view_weights(v2, v1, gamma, sky_cutoff)?))
}

/// Weighted sums needed by the solver and the residual.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    weight: f64,
    count: usize,
    wp: Vector3<f64>,
    wq: Vector3<f64>,
}

fn check_inputs(pred: &[PointMap], reference: &[PointMap], weights: &[AlignmentWeights]) -> Result<()> {
    if pred.len() != reference.len() || pred.len() != weights.len() {
        return Err(Error::dims(
            format!("{} point maps and weights", pred.len()),
            format!("{} / {}", reference.len(), weights.len()),
        ));
    }
    for ((p, q), w) in pred.iter().zip(reference).zip(weights) {
        if p.width() != q.width() || p.height() != q.height() || p.width() != w.width() || p.height() != w.height() {
            return Err(Error::dims(
                format!("{}x{}", p.width(), p.height()),
                format!("{}x{} reference, {}x{} weights", q.width(), q.height(), w.width(), w.height()),
            ));
        }
    }
    Ok(())
}

/// Visits every pixel with positive weight and both points valid, row by row.
fn fold_rows<T, F>(pred: &[PointMap], reference: &[PointMap], weights: &[AlignmentWeights], init: T, f: F) -> Vec<T>
where
    T: Copy + Send + Sync,
    F: Fn(&mut T, f64, &Point3<f64>, &Point3<f64>) + Sync,
{
    let mut partials = Vec::new();
    for ((p, q), w) in pred.iter().zip(reference).zip(weights) {
        let width = p.width();
        let rows: Vec<T> = (0..p.height())
            .into_par_iter()
            .map(|v| {
                let mut acc = init;
                for i in v * width..(v + 1) * width {
                    let wi = w.values()[i];
                    if wi <= 0.0 {
                        continue;
                    }
                    if let (Some(pp), Some(qq)) = (p.at(i), q.at(i)) {
                        f(&mut acc, wi, pp, qq);
                    }
                }
                acc
            })
            .collect();
        partials.extend(rows);
    }
    partials
}

/// Closed-form weighted least-squares `(a, b)` with `a·P + b ≈ P̃`.
///
/// Points are centered on their weighted centroids before forming the 4×4 normal
/// matrix, which is then factored by Cholesky. The centered system has the same
/// solution as the raw one.
pub fn wls_scale_translation(
    pred: &[PointMap],
    reference: &[PointMap],
    weights: &[AlignmentWeights],
) -> Result<SimScaleTranslation> {
    check_inputs(pred, reference, weights)?;
    let moments = fold_rows(pred, reference, weights, Moments::default(), |m, w, p, q| {
        m.weight += w;
        m.count += 1;
        m.wp += p.coords * w;
        m.wq += q.coords * w;
    })
    .into_iter()
    .fold(Moments::default(), |a, b| Moments {
        weight: a.weight + b.weight,
        count: a.count + b.count,
        wp: a.wp + b.wp,
        wq: a.wq + b.wq,
    });
    if moments.count < MIN_WEIGHTED_POINTS || !(moments.weight > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "{} weighted points (need {MIN_WEIGHTED_POINTS}) with total weight {}",
            moments.count, moments.weight
        )));
    }
    let p_bar = moments.wp / moments.weight;
    let q_bar = moments.wq / moments.weight;

    // Centered normal system: Σ W X̃ᵀX̃ [a; b̃] = Σ W X̃ᵀ Q̃ with X̃ = [P − P̄, I].
    let (spp, spq) = fold_rows(pred, reference, weights, (0.0, 0.0), |acc, w, p, q| {
        let dp = p.coords - p_bar;
        acc.0 += w * dp.norm_squared();
        acc.1 += w * dp.dot(&(q.coords - q_bar));
    })
    .into_iter()
    .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));

    let mut normal = Matrix4::zeros();
    normal[(0, 0)] = spp;
    for k in 1..4 {
        normal[(k, k)] = moments.weight;
    }
    let rhs = Vector4::new(spq, 0.0, 0.0, 0.0);
    let eig = SymmetricEigen::new(normal).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) || hi / lo > MAX_CONDITION_NUMBER {
        return Err(Error::DegenerateGeometry(format!(
            "normal matrix condition number {:e}",
            if lo > 0.0 { hi / lo } else { f64::INFINITY }
        )));
    }
    let sol = normal
        .cholesky()
        .ok_or_else(|| Error::DegenerateGeometry("normal matrix is not positive definite".into()))?
        .solve(&rhs);
    let a = sol[0];
    let b = q_bar - p_bar * a + Vector3::new(sol[1], sol[2], sol[3]);
    SimScaleTranslation::new(a, b)
}

/// `Σ W‖aP + b − P̃‖² / Σ W`.
pub fn alignment_residual(
    pred: &[PointMap],
    reference: &[PointMap],
    weights: &[AlignmentWeights],
    t: &SimScaleTranslation,
) -> Result<f64> {
    check_inputs(pred, reference, weights)?;
    let (num, den) = fold_rows(pred, reference, weights, (0.0, 0.0), |acc, w, p, q| {
        acc.0 += w * (t.apply(p) - q).norm_squared();
        acc.1 += w;
    })
    .into_iter()
    .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    if !(den > 0.0) {
        return Err(Error::EmptyRegion("total alignment weight is zero".into()));
    }
    Ok(num / den)
}

/// Scales and translates centers, scales extents; opacity, rotation and SH untouched.
pub fn apply_alignment(g: &GaussianSet, t: &SimScaleTranslation) -> GaussianSet {
    let mut out = g.clone();
    out.means.iter_mut().for_each(|m| *m = t.apply(m));
    out.scales.iter_mut().for_each(|s| *s *= t.scale);
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentReport {
    pub transform: SimScaleTranslation,
    pub residual: f64,
    pub rejected: bool,
}

/// Solves, measures and thresholds in one call.
pub fn align_point_maps(
    pred: &[PointMap],
    reference: &[PointMap],
    weights: &[AlignmentWeights],
    reject_threshold: f64,
) -> Result<AlignmentReport> {
    let transform = wls_scale_translation(pred, reference, weights)?;
    let residual = alignment_residual(pred, reference, weights, &transform)?;
    Ok(AlignmentReport {
        transform,
        residual,
        rejected: residual > reject_threshold,
    })
}
