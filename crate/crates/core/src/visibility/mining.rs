//! Context-pair and target-view selection over a collection of views.

use std::cmp::Ordering;

use rayon::prelude::*;

use super::{
    non_sky_fraction, symmetric_coverage, visibility_mask, ViewId, ViewRecord, DEFAULT_COVERAGE_THRESHOLD,
    DEFAULT_DELTA, DEFAULT_SKY_CUTOFF, DEFAULT_VISIBILITY_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::geom::pose_distance_angle;

/// Slack on the rotation-angle comparisons so that views sharing one orientation
/// (all angles numerically zero) can still count as interpolated.
pub const ANGLE_TOLERANCE: f64 = 1e-9;
/// Context centers closer than this make the interpolation predicate vacuous.
pub const MIN_CONTEXT_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiningConfig {
    pub delta: f64,
    pub sky_cutoff: f64,
    /// Context pairs need symmetric coverage strictly above this.
    pub coverage_threshold: f64,
    /// Targets need a non-sky visibility fraction of at least this.
    pub visibility_threshold: f64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            sky_cutoff: DEFAULT_SKY_CUTOFF,
            coverage_threshold: DEFAULT_COVERAGE_THRESHOLD,
            visibility_threshold: DEFAULT_VISIBILITY_THRESHOLD,
        }
    }
}

/// Two context views and the targets rendered from them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewSet {
    pub context_ids: [ViewId; 2],
    pub target_ids: Vec<ViewId>,
}

impl ViewSet {
    pub fn new(context_ids: [ViewId; 2], target_ids: Vec<ViewId>) -> Result<Self> {
        if context_ids[0] == context_ids[1] {
            return Err(Error::InvalidConfig("context ids must be distinct".into()));
        }
        if target_ids.iter().any(|t| context_ids.contains(t)) {
            return Err(Error::InvalidConfig("targets must be disjoint from contexts".into()));
        }
        Ok(Self {
            context_ids,
            target_ids,
        })
    }
}

/// Partners of `seed_id` whose symmetric coverage exceeds the threshold, sorted by
/// descending coverage, ties by ascending id.
pub fn select_context_pairs(
    views: &[ViewRecord],
    seed_id: ViewId,
    cfg: &MiningConfig,
) -> Result<Vec<(ViewId, ViewId, f64)>> {
    let seed = views
        .iter()
        .find(|v| v.id == seed_id)
        .ok_or(Error::ViewNotFound(seed_id))?;
    let scored = views
        .par_iter()
        .filter(|v| v.id != seed_id)
        .map(|v| symmetric_coverage(seed, v, cfg.delta, cfg.sky_cutoff).map(|c| (v.id, c)))
        .collect::<Result<Vec<_>>>()?;
    let mut pairs: Vec<_> = scored
        .into_iter()
        .filter(|(_, c)| *c > cfg.coverage_threshold)
        .map(|(id, c)| (seed_id, id, c))
        .collect();
    pairs.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
    Ok(pairs)
}

/// Whether `candidate` lies between the two contexts in both position and orientation.
pub fn is_interpolated(ctx1: &ViewRecord, ctx2: &ViewRecord, candidate: &ViewRecord) -> Result<bool> {
    let (d12, t12) = pose_distance_angle(&ctx1.camera, &ctx2.camera);
    if d12 <= MIN_CONTEXT_DISTANCE {
        return Err(Error::Degenerate(format!(
            "context views {} and {} share a camera center",
            ctx1.id, ctx2.id
        )));
    }
    let (d1j, t1j) = pose_distance_angle(&ctx1.camera, &candidate.camera);
    let (dj2, tj2) = pose_distance_angle(&candidate.camera, &ctx2.camera);
    Ok(d1j < d12 && dj2 < d12 && t1j < t12 + ANGLE_TOLERANCE && tj2 < t12 + ANGLE_TOLERANCE)
}

/// Candidates that interpolate the two contexts and are at least
/// `visibility_threshold` visible from them over their non-sky pixels.
pub fn select_targets(
    ctx1: &ViewRecord,
    ctx2: &ViewRecord,
    candidates: &[ViewRecord],
    cfg: &MiningConfig,
) -> Result<Vec<ViewId>> {
    if ctx1.id == ctx2.id {
        return Err(Error::InvalidConfig("context views must differ".into()));
    }
    // Surface the degenerate-context error even with no candidates.
    let (d12, _) = pose_distance_angle(&ctx1.camera, &ctx2.camera);
    if d12 <= MIN_CONTEXT_DISTANCE {
        return Err(Error::Degenerate(format!(
            "context views {} and {} share a camera center",
            ctx1.id, ctx2.id
        )));
    }
    let picked = candidates
        .par_iter()
        .filter(|c| c.id != ctx1.id && c.id != ctx2.id)
        .map(|c| -> Result<Option<ViewId>> {
            if !is_interpolated(ctx1, ctx2, c)? {
                return Ok(None);
            }
            let mask = visibility_mask(c, &[ctx1, ctx2], cfg.delta)?;
            match non_sky_fraction(c, &mask, cfg.sky_cutoff) {
                Ok(f) if f >= cfg.visibility_threshold => Ok(Some(c.id)),
                Ok(_) | Err(Error::EmptyRegion(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(picked.into_iter().flatten().collect())
}

/// Full mining for one seed: best context pair, then its targets.
pub fn mine_view_set(views: &[ViewRecord], seed_id: ViewId, cfg: &MiningConfig) -> Result<Vec<ViewSet>> {
    let pairs = select_context_pairs(views, seed_id, cfg)?;
    let lookup = |id: ViewId| views.iter().find(|v| v.id == id).ok_or(Error::ViewNotFound(id));
    let mut sets = Vec::new();
    for (a, b, _) in pairs {
        let (va, vb) = (lookup(a)?, lookup(b)?);
        let targets = match select_targets(va, vb, views, cfg) {
            Ok(t) => t,
            Err(Error::Degenerate(_)) => Vec::new(),
            Err(e) => return Err(e),
        };
        sets.push(ViewSet::new([a, b], targets)?);
    }
    Ok(sets)
}
