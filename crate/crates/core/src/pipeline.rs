//! Loading manifest views and chaining the stages: mask, build, align.

use crate::align::{align_point_maps, apply_alignment, consistency_weights, AlignmentReport, AlignmentWeights};
use crate::error::{Error, Result};
use crate::gaussians::{
    appearance_head, assemble_gaussians, concat_sets, sh_coeff_len, AppearanceEmbedding, ConvHeadWeights, GaussianSet,
    RawHeadOutputs,
};
use crate::geom::{depth_to_points, ray_points, DepthMap, PointMap, Raster, RayMap, VisibilityMask};
use crate::io::{self, SceneManifest, ViewEntry};
use crate::visibility::{extend_with_sky, visibility_mask, SkyProbability, ViewId, ViewRecord};

fn required<'a>(entry: &'a ViewEntry, field: &'a Option<String>, what: &str) -> Result<&'a str> {
    field
        .as_deref()
        .ok_or_else(|| Error::Manifest(format!("view {} has no {what} path", entry.id)))
}

/// Camera, depth and sky of one manifest view. A missing sky map means no sky.
pub fn load_view_record(manifest: &SceneManifest, id: ViewId) -> Result<ViewRecord> {
    let entry = manifest.view(id)?;
    let camera = entry.camera.to_camera()?;
    let depth = DepthMap::from_raster(&io::read_raster(manifest.resolve(&entry.depth))?)?;
    match &entry.sky {
        Some(p) => ViewRecord::new(id, camera, depth, SkyProbability::new(io::read_raster(manifest.resolve(p))?)?),
        None => ViewRecord::without_sky(id, camera, depth),
    }
}

pub fn load_view_records(manifest: &SceneManifest, ids: &[ViewId]) -> Result<Vec<ViewRecord>> {
    ids.iter().map(|id| load_view_record(manifest, *id)).collect()
}

/// Visibility mask `M` of `target` against `contexts` and its sky extension `Mˢ`.
pub fn target_masks(
    target: &ViewRecord,
    contexts: &[&ViewRecord],
    delta: f64,
    sky_cutoff: f64,
) -> Result<(VisibilityMask, VisibilityMask)> {
    let m = visibility_mask(target, contexts, delta)?;
    let ms = extend_with_sky(&m, &target.sky, sky_cutoff)?;
    Ok((m, ms))
}

/// Per-pixel predictions for one view, in the prediction's own frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedView {
    pub id: ViewId,
    pub rays: RayMap,
    /// Distance along `rays`, before the head's depth offset.
    pub depth: DepthMap,
    pub head: RawHeadOutputs,
}

impl PredictedView {
    /// Reads rays, depth and head outputs. `features` overrides the manifest's feature map.
    pub fn load(manifest: &SceneManifest, id: ViewId, features: Option<Raster>) -> Result<Self> {
        let entry = manifest.view(id)?;
        let rays = RayMap::from_raster(&io::read_raster(manifest.resolve(required(entry, &entry.rays, "rays")?))?)?;
        let depth = DepthMap::from_raster(&io::read_raster(
            manifest.resolve(required(entry, &entry.pred_depth, "pred_depth")?),
        )?)?;
        let features = match features {
            Some(f) => f,
            None => io::read_raster(manifest.resolve(required(entry, &entry.features, "features")?))?,
        };
        let packed = io::read_raster(manifest.resolve(required(entry, &entry.head, "head")?))?;
        Ok(Self {
            id,
            rays,
            depth,
            head: RawHeadOutputs::from_packed(&packed, features)?,
        })
    }

    /// Gaussian centers `o + (D + ΔD)·d` as a point map.
    pub fn points(&self) -> Result<PointMap> {
        ray_points(&self.rays, &self.depth, Some(self.head.depth_offset.data()))
    }

    pub fn gaussians(&self, weights: &ConvHeadWeights, embedding: &AppearanceEmbedding) -> Result<GaussianSet> {
        let sh = appearance_head(&self.head.features, embedding, weights)?;
        assemble_gaussians(&self.rays, &self.depth, &self.head, &sh)
    }
}

/// Gaussians of all `views`, concatenated in order.
pub fn build_gaussians(
    views: &[PredictedView],
    weights: &ConvHeadWeights,
    embedding: &AppearanceEmbedding,
) -> Result<GaussianSet> {
    let sets = views
        .iter()
        .map(|v| v.gaussians(weights, embedding))
        .collect::<Result<Vec<_>>>()?;
    concat_sets(&sets)
}

/// Consistency weights for each view: the elementwise maximum over all other views.
pub fn multi_view_weights(records: &[ViewRecord], gamma: f64, sky_cutoff: f64) -> Result<Vec<AlignmentWeights>> {
    if records.len() < 2 {
        return Err(Error::InvalidConfig("alignment needs at least two views".into()));
    }
    let mut best: Vec<Option<Raster>> = vec![None; records.len()];
    for i in 0..records.len() {
        for j in i + 1..records.len() {
            let (wi, wj) = consistency_weights(&records[i], &records[j], gamma, sky_cutoff)?;
            for (k, w) in [(i, wi), (j, wj)] {
                best[k] = Some(match best[k].take() {
                    None => w.raster().clone(),
                    Some(mut r) => {
                        r.data_mut().iter_mut().zip(w.values()).for_each(|(a, b)| *a = a.max(*b));
                        r
                    }
                });
            }
        }
    }
    best.into_iter()
        .map(|r| AlignmentWeights::new(r.expect("every view has a partner")))
        .collect()
}

/// Fits the prediction frame to the reference depth of the same views.
pub fn align_predictions(
    predicted: &[PredictedView],
    records: &[ViewRecord],
    gamma: f64,
    sky_cutoff: f64,
    reject_threshold: f64,
) -> Result<AlignmentReport> {
    if predicted.len() != records.len() || predicted.iter().zip(records).any(|(p, r)| p.id != r.id) {
        return Err(Error::InvalidConfig("predicted and reference views must match one to one".into()));
    }
    let pred = predicted.iter().map(PredictedView::points).collect::<Result<Vec<_>>>()?;
    let reference = records
        .iter()
        .map(|r| depth_to_points(&r.camera, &r.depth))
        .collect::<Result<Vec<_>>>()?;
    let weights = multi_view_weights(records, gamma, sky_cutoff)?;
    align_point_maps(&pred, &reference, &weights, reject_threshold)
}

/// Applies an accepted alignment; a rejected one is an error.
pub fn aligned_gaussians(g: &GaussianSet, report: &AlignmentReport) -> Result<GaussianSet> {
    if report.rejected {
        return Err(Error::DegenerateGeometry(format!(
            "alignment residual {} exceeds the rejection threshold",
            report.residual
        )));
    }
    Ok(apply_alignment(g, &report.transform))
}

/// Replaces the colors of `geometry` with head outputs for `embedding`.
///
/// `geometry` must be the concatenation of `views` as produced by
/// [`build_gaussians`], possibly aligned since; only SH coefficients change.
pub fn recolor(
    geometry: &GaussianSet,
    views: &[PredictedView],
    weights: &ConvHeadWeights,
    embedding: &AppearanceEmbedding,
) -> Result<GaussianSet> {
    let degree = weights.sh_degree();
    let mut sh = Vec::with_capacity(geometry.len() * sh_coeff_len(degree));
    for v in views {
        let colors = appearance_head(&v.head.features, embedding, weights)?;
        let points = v.points()?;
        for (i, ok) in points.valid().iter().enumerate() {
            if *ok {
                sh.extend_from_slice(colors.pixel(i));
            }
        }
    }
    let stride = sh_coeff_len(degree);
    if sh.len() != geometry.len() * stride {
        return Err(Error::dims(
            format!("{} primitives", geometry.len()),
            format!("{} pixel-aligned primitives from the views", sh.len() / stride),
        ));
    }
    let mut out = geometry.clone();
    out.sh_degree = degree;
    out.sh = sh;
    out.validate()?;
    Ok(out)
}
