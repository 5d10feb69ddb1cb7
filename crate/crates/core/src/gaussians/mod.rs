//! Pixel-aligned Gaussian construction and appearance-conditioned colors.

mod conv;
mod embedding;
mod sh;

pub use conv::{appearance_head, conv2d_forward, Activation, ConvHeadWeights, ConvLayer};
pub use embedding::{interpolate_embedding, AppearanceEmbedding, DEFAULT_EMBEDDING_DIM};
pub use sh::{
    dc_from_color, sh_basis, sh_basis_count, sh_coeff_len, sh_degree_for_len, sh_to_color, MAX_SH_DEGREE, SH_C0,
};

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::geom::{ray_points, DepthMap, Raster, RayMap};

pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-6;
pub const MIN_SCALE: f64 = 1e-6;
/// Activated opacities are kept this far inside `(0, 1)` so they survive f32 storage.
pub const OPACITY_MARGIN: f64 = 1e-6;
/// Scales are capped at this fraction of the scene bounding-box diagonal.
pub const SCALE_CAP_FRACTION: f64 = 0.1;
pub const DEFAULT_SH_DEGREE: usize = 1;

/// Struct-of-arrays Gaussian primitives.
///
/// Rotations are `(w, x, y, z)` unit quaternions; `sh` holds
/// `sh_coeff_len(sh_degree)` reals per primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSet {
    pub sh_degree: usize,
    pub means: Vec<Point3<f64>>,
    pub opacities: Vec<f64>,
    pub rotations: Vec<[f64; 4]>,
    pub scales: Vec<Vector3<f64>>,
    pub sh: Vec<f64>,
}

impl GaussianSet {
    pub fn empty(sh_degree: usize) -> Self {
        Self {
            sh_degree,
            means: Vec::new(),
            opacities: Vec::new(),
            rotations: Vec::new(),
            scales: Vec::new(),
            sh: Vec::new(),
        }
    }

    pub fn new(
        sh_degree: usize,
        means: Vec<Point3<f64>>,
        opacities: Vec<f64>,
        rotations: Vec<[f64; 4]>,
        scales: Vec<Vector3<f64>>,
        sh: Vec<f64>,
    ) -> Result<Self> {
        let set = Self {
            sh_degree,
            means,
            opacities,
            rotations,
            scales,
            sh,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn sh_stride(&self) -> usize {
        sh_coeff_len(self.sh_degree)
    }

    pub fn sh_of(&self, i: usize) -> &[f64] {
        let k = self.sh_stride();
        &self.sh[i * k..(i + 1) * k]
    }

    pub fn push(&mut self, mean: Point3<f64>, opacity: f64, rotation: [f64; 4], scale: Vector3<f64>, sh: &[f64]) {
        self.means.push(mean);
        self.opacities.push(opacity);
        self.rotations.push(rotation);
        self.scales.push(scale);
        self.sh.extend_from_slice(sh);
    }

    /// Appends another set with the same SH degree.
    pub fn extend(&mut self, other: &GaussianSet) -> Result<()> {
        if other.sh_degree != self.sh_degree {
            return Err(Error::dims(format!("SH degree {}", self.sh_degree), format!("SH degree {}", other.sh_degree)));
        }
        self.means.extend_from_slice(&other.means);
        self.opacities.extend_from_slice(&other.opacities);
        self.rotations.extend_from_slice(&other.rotations);
        self.scales.extend_from_slice(&other.scales);
        self.sh.extend_from_slice(&other.sh);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.sh_degree > MAX_SH_DEGREE {
            return Err(Error::InvalidConfig(format!("SH degree {} above {MAX_SH_DEGREE}", self.sh_degree)));
        }
        let n = self.means.len();
        if self.opacities.len() != n || self.rotations.len() != n || self.scales.len() != n {
            return Err(Error::dims(n, "inconsistent attribute lengths"));
        }
        if self.sh.len() != n * self.sh_stride() {
            return Err(Error::dims(n * self.sh_stride(), self.sh.len()));
        }
        let bad = |index: usize, reason: &str| Error::InvalidGaussian {
            index,
            reason: reason.into(),
        };
        for i in 0..n {
            if !self.means[i].iter().all(|v| v.is_finite()) {
                return Err(bad(i, "non-finite center"));
            }
            let a = self.opacities[i];
            if !(a > 0.0 && a < 1.0) {
                return Err(bad(i, "opacity outside (0, 1)"));
            }
            let q = self.rotations[i];
            let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !((norm - 1.0).abs() <= QUATERNION_NORM_TOLERANCE) {
                return Err(bad(i, "rotation is not a unit quaternion"));
            }
            if !self.scales[i].iter().all(|s| *s > 0.0 && s.is_finite()) {
                return Err(bad(i, "non-positive scale"));
            }
            if !self.sh_of(i).iter().all(|v| v.is_finite()) {
                return Err(bad(i, "non-finite SH coefficient"));
            }
        }
        Ok(())
    }

    /// Diagonal length of the axis-aligned bounding box of the centers.
    pub fn bounding_diagonal(&self) -> f64 {
        bounding_diagonal(self.means.iter())
    }
}

fn bounding_diagonal<'a>(points: impl Iterator<Item = &'a Point3<f64>>) -> f64 {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    let mut any = false;
    for p in points {
        lo = lo.inf(&p.coords);
        hi = hi.sup(&p.coords);
        any = true;
    }
    if any {
        (hi - lo).norm()
    } else {
        0.0
    }
}

/// Per-pixel head outputs before activation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawHeadOutputs {
    pub opacity_logit: Raster,
    pub rotation: Raster,
    pub scale_log: Raster,
    pub depth_offset: Raster,
    pub features: Raster,
}

/// Channel count of a packed head raster: opacity, rotation, scale, depth offset.
pub const PACKED_HEAD_CHANNELS: usize = 9;

impl RawHeadOutputs {
    pub fn new(
        opacity_logit: Raster,
        rotation: Raster,
        scale_log: Raster,
        depth_offset: Raster,
        features: Raster,
    ) -> Result<Self> {
        let (w, h) = (opacity_logit.width(), opacity_logit.height());
        for (name, r, ch) in [
            ("opacity", &opacity_logit, Some(1)),
            ("rotation", &rotation, Some(4)),
            ("scale", &scale_log, Some(3)),
            ("depth offset", &depth_offset, Some(1)),
            ("features", &features, None),
        ] {
            r.check_same_size(w, h)?;
            if let Some(ch) = ch {
                if r.channels() != ch {
                    return Err(Error::dims(format!("{ch} {name} channels"), r.channels()));
                }
            }
        }
        Ok(Self {
            opacity_logit,
            rotation,
            scale_log,
            depth_offset,
            features,
        })
    }

    /// Splits a 9-channel raster `[logit, qw, qx, qy, qz, log sx, log sy, log sz, ΔD]`.
    pub fn from_packed(head: &Raster, features: Raster) -> Result<Self> {
        if head.channels() != PACKED_HEAD_CHANNELS {
            return Err(Error::dims(format!("{PACKED_HEAD_CHANNELS} head channels"), head.channels()));
        }
        Self::new(
            head.select_channels(0, 1)?,
            head.select_channels(1, 4)?,
            head.select_channels(5, 3)?,
            head.select_channels(8, 1)?,
            features,
        )
    }

    pub fn pack(&self) -> Result<Raster> {
        self.opacity_logit
            .concat_channels(&self.rotation)?
            .concat_channels(&self.scale_log)?
            .concat_channels(&self.depth_offset)
    }

    pub fn width(&self) -> usize {
        self.opacity_logit.width()
    }

    pub fn height(&self) -> usize {
        self.opacity_logit.height()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivatedParams {
    pub opacity: Vec<f64>,
    pub rotation: Vec<[f64; 4]>,
    pub scale: Vec<Vector3<f64>>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Normalized quaternion; zero (or non-finite) input becomes the identity.
pub fn normalize_quaternion(q: [f64; 4]) -> [f64; 4] {
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > f64::MIN_POSITIVE && norm.is_finite() {
        q.map(|v| v / norm)
    } else {
        [1.0, 0.0, 0.0, 0.0]
    }
}

/// Opacity via sigmoid, rotation via normalization, scale via `exp` clamped to
/// `[MIN_SCALE, scale_cap]`.
pub fn activate_params(raw: &RawHeadOutputs, scale_cap: f64) -> ActivatedParams {
    let cap = scale_cap.max(MIN_SCALE);
    let opacity = raw
        .opacity_logit
        .data()
        .iter()
        .map(|l| sigmoid(*l).clamp(OPACITY_MARGIN, 1.0 - OPACITY_MARGIN))
        .collect();
    let rotation = raw
        .rotation
        .data()
        .chunks_exact(4)
        .map(|q| normalize_quaternion([q[0], q[1], q[2], q[3]]))
        .collect();
    let scale = raw
        .scale_log
        .data()
        .chunks_exact(3)
        .map(|s| Vector3::new(s[0], s[1], s[2]).map(|v| v.exp().clamp(MIN_SCALE, cap)))
        .collect();
    ActivatedParams {
        opacity,
        rotation,
        scale,
    }
}

/// One primitive per valid pixel with center `o + (D + ΔD)·d`.
///
/// `depth` is distance along the unit rays. The scale cap is
/// [`SCALE_CAP_FRACTION`] of the bounding-box diagonal of the emitted centers.
pub fn assemble_gaussians(rays: &RayMap, depth: &DepthMap, raw: &RawHeadOutputs, sh: &Raster) -> Result<GaussianSet> {
    let (w, h) = (rays.width(), rays.height());
    if raw.width() != w || raw.height() != h {
        return Err(Error::dims(format!("{w}x{h}"), format!("{}x{} head outputs", raw.width(), raw.height())));
    }
    sh.check_same_size(w, h)?;
    let degree = sh_degree_for_len(sh.channels())
        .ok_or_else(|| Error::dims("3·(deg+1)² SH channels", sh.channels()))?;
    let centers = ray_points(rays, depth, Some(raw.depth_offset.data()))?;
    let diag = bounding_diagonal((0..centers.len()).filter_map(|i| centers.at(i)));
    let cap = if diag > 0.0 { SCALE_CAP_FRACTION * diag } else { f64::INFINITY };
    let act = activate_params(raw, cap);
    let mut set = GaussianSet::empty(degree);
    for i in 0..centers.len() {
        if let Some(mu) = centers.at(i) {
            set.push(*mu, act.opacity[i], act.rotation[i], act.scale[i], sh.pixel(i));
        }
    }
    set.validate()?;
    Ok(set)
}

/// Concatenates per-view sets.
pub fn concat_sets(sets: &[GaussianSet]) -> Result<GaussianSet> {
    let mut iter = sets.iter();
    let mut out = iter
        .next()
        .cloned()
        .ok_or_else(|| Error::InvalidConfig("no Gaussian sets to concatenate".into()))?;
    for s in iter {
        out.extend(s)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(w: usize, h: usize) -> RawHeadOutputs {
        let n = w * h;
        RawHeadOutputs::new(
            Raster::zeros(w, h, 1),
            Raster::new(w, h, 4, [2.0, 0.0, 0.0, 0.0].repeat(n)).unwrap(),
            Raster::zeros(w, h, 3),
            Raster::zeros(w, h, 1),
            Raster::zeros(w, h, 2),
        )
        .unwrap()
    }

    #[test]
    fn activation_examples() {
        let act = activate_params(&raw(1, 1), 10.0);
        assert_eq!(act.opacity[0], 0.5);
        assert_eq!(act.rotation[0], [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(act.scale[0], Vector3::new(1.0, 1.0, 1.0));
        assert_eq!(normalize_quaternion([0.0; 4]), [1.0, 0.0, 0.0, 0.0]);
        let act = activate_params(&raw(1, 1), 0.5);
        assert_eq!(act.scale[0], Vector3::repeat(0.5));
    }

    #[test]
    fn extreme_logits_stay_open_interval() {
        assert!(sigmoid(800.0) == 1.0 && sigmoid(-800.0) == 0.0);
        let mut r = raw(2, 1);
        r.opacity_logit = Raster::new(2, 1, 1, vec![800.0, -800.0]).unwrap();
        let act = activate_params(&r, 1.0);
        assert!(act.opacity.iter().all(|a| *a > 0.0 && *a < 1.0));
    }

    #[test]
    fn assemble_counts_valid_pixels() {
        let rays = RayMap::new(2, 2, vec![Point3::origin(); 4], vec![Vector3::z(); 4]).unwrap();
        let depth = DepthMap::constant(2, 2, 1.0).unwrap();
        let sh = Raster::zeros(2, 2, 3);
        let mut head = raw(2, 2);
        assert_eq!(assemble_gaussians(&rays, &depth, &head, &sh).unwrap().len(), 4);
        head.depth_offset = Raster::new(2, 2, 1, vec![0.0, -1.0, 0.0, 0.5]).unwrap();
        let set = assemble_gaussians(&rays, &depth, &head, &sh).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.means[2], Point3::new(0.0, 0.0, 1.5));
        assert!(assemble_gaussians(&rays, &depth, &head, &Raster::zeros(2, 2, 5)).is_err());
    }

    #[test]
    fn packed_round_trip() {
        let r = raw(2, 3);
        let packed = r.pack().unwrap();
        assert_eq!(packed.channels(), PACKED_HEAD_CHANNELS);
        assert_eq!(RawHeadOutputs::from_packed(&packed, r.features.clone()).unwrap(), r);
    }

    #[test]
    fn validation_catches_bad_primitives() {
        let ok = || GaussianSet::new(0, vec![Point3::origin()], vec![0.5], vec![[1.0, 0.0, 0.0, 0.0]], vec![Vector3::repeat(1.0)], vec![0.0; 3]);
        assert!(ok().is_ok());
        let mut s = ok().unwrap();
        s.opacities[0] = 1.0;
        assert!(s.validate().is_err());
        let mut s = ok().unwrap();
        s.rotations[0] = [1.1, 0.0, 0.0, 0.0];
        assert!(s.validate().is_err());
        let mut s = ok().unwrap();
        s.scales[0].x = 0.0;
        assert!(s.validate().is_err());
        let mut s = ok().unwrap();
        s.sh.push(0.0);
        assert!(s.validate().is_err());
    }
}
