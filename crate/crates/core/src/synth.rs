//! Synthetic scenes with known geometry, used as an oracle for the full pipeline.
//!
//! The ground truth is a patch of flat Gaussian discs lying on a gently bumpy
//! surface, seen by cameras on a jittered arc. Everything a learned predictor would
//! supply is synthesized from the ground truth: per-pixel head outputs and ray maps
//! expressed in an arbitrary "prediction frame" that differs from the world by a
//! scale and translation, plus relative depth with sparse metric samples.

use std::fs;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::align::SimScaleTranslation;
use crate::depth_align::{DepthSample, ScaleShift, SparseDepth};
use crate::error::{Error, Result};
use crate::gaussians::{dc_from_color, logit, sh_coeff_len, AppearanceEmbedding, ConvHeadWeights, GaussianSet, SH_C0};
use crate::geom::{depth_to_range, DepthMap, ImageBuffer, PinholeCamera, Pose, Raster, RayMap};
use crate::io::{self, CameraEntry, SceneManifest, VariantEntry, ViewEntry};
use crate::render::rasterize;
use crate::visibility::{SkyProbability, ViewRecord};

/// Ground-truth SH degree; bands above DC are zero.
pub const GT_SH_DEGREE: usize = 1;
/// Side length of the square patch of discs, centered on the origin.
pub const PATCH_EXTENT: f64 = 3.0;
const BUMP_AMPLITUDE: f64 = 0.06;
const BUMP_FREQUENCY: f64 = 2.0;
const RING_RADIUS: f64 = 1.2;
const RING_HEIGHT: f64 = 2.0;
/// Rendered depth counts as valid where accumulated alpha exceeds this.
pub const DEPTH_ALPHA_CUTOFF: f64 = 0.5;
/// Head opacity for every pixel-aligned primitive.
pub const HEAD_OPACITY: f64 = 0.98;
/// Pixel-aligned primitive size, in pixels of the source view.
pub const HEAD_PIXEL_SCALE: f64 = 0.7;
const SPARSE_SAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_gaussians: usize,
    pub n_views: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Lighting variants; variant 0 is always the untinted ground truth.
    pub n_variants: usize,
    /// Angular span of the camera arc.
    pub arc_degrees: f64,
    /// Standard deviation of camera position and look-at jitter.
    pub jitter: f64,
    pub half_fov_degrees: f64,
    pub embedding_dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_gaussians: 500,
            n_views: 4,
            width: 256,
            height: 256,
            seed: 0,
            n_variants: 2,
            arc_degrees: 40.0,
            jitter: 0.02,
            half_fov_degrees: 14.0,
            embedding_dim: crate::gaussians::DEFAULT_EMBEDDING_DIM,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.n_gaussians == 0 {
            return bad("n_gaussians must be at least 1");
        }
        if self.n_views < 2 {
            return bad("n_views must be at least 2");
        }
        if self.width == 0 || self.height == 0 {
            return bad("image size must be positive");
        }
        if self.n_variants == 0 {
            return bad("at least one lighting variant is required");
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive");
        }
        if !(self.arc_degrees.is_finite() && self.arc_degrees >= 0.0 && self.arc_degrees < 360.0) {
            return bad("arc_degrees must lie in [0, 360)");
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return bad("jitter must be non-negative");
        }
        if !(self.half_fov_degrees > 0.0 && self.half_fov_degrees < 80.0) {
            return bad("half_fov_degrees must lie in (0, 80)");
        }
        Ok(())
    }
}

/// Everything rendered or derived for one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthView {
    pub id: u32,
    pub camera: PinholeCamera,
    /// Ground-truth render per lighting variant.
    pub renders: Vec<ImageBuffer>,
    /// Expected camera depth, valid where accumulated alpha exceeds [`DEPTH_ALPHA_CUTOFF`].
    pub depth: DepthMap,
    /// `1 − accumulated alpha`.
    pub sky: SkyProbability,
    /// Packed head outputs in the prediction frame.
    pub head: Raster,
    /// Ray distance in the prediction frame, net of the head's depth offset.
    pub pred_depth: DepthMap,
    /// Ray map in the prediction frame.
    pub rays: RayMap,
    /// Relative depth with `mono_transform.apply(mono_depth) = depth`.
    pub mono_depth: DepthMap,
    pub mono_transform: ScaleShift,
    pub sparse: SparseDepth,
}

impl SynthView {
    pub fn record(&self) -> Result<ViewRecord> {
        ViewRecord::new(self.id, self.camera, self.depth.clone(), self.sky.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub config: SynthConfig,
    pub gaussians: GaussianSet,
    /// Per-variant RGB multipliers applied to the ground-truth colors.
    pub tints: Vec<[f64; 3]>,
    pub embeddings: Vec<AppearanceEmbedding>,
    /// Maps the prediction frame to the world: `world = a·pred + b`.
    pub prediction_frame: SimScaleTranslation,
    pub views: Vec<SynthView>,
}

/// Low-discrepancy point in the unit square (R2 sequence).
fn r2(i: usize, start: [f64; 2]) -> [f64; 2] {
    const G: f64 = 1.324_717_957_244_746;
    let (a1, a2) = (1.0 / G, 1.0 / (G * G));
    [(start[0] + a1 * i as f64).fract(), (start[1] + a2 * i as f64).fract()]
}

struct Surface {
    phase: [f64; 2],
    color: [[f64; 3]; 3],
}

impl Surface {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut color = [[0.0; 3]; 3];
        for c in &mut color {
            *c = [rng.random_range(0.4..1.2), rng.random_range(-1.0..1.0), rng.random_range(0.0..6.3)];
        }
        Self {
            phase: [rng.random_range(0.0..6.3), rng.random_range(0.0..6.3)],
            color,
        }
    }

    fn height(&self, x: f64, y: f64) -> f64 {
        BUMP_AMPLITUDE * (BUMP_FREQUENCY * x + self.phase[0]).sin() * (BUMP_FREQUENCY * y + self.phase[1]).cos()
    }

    fn normal(&self, x: f64, y: f64) -> Vector3<f64> {
        let (sx, cx) = (BUMP_FREQUENCY * x + self.phase[0]).sin_cos();
        let (sy, cy) = (BUMP_FREQUENCY * y + self.phase[1]).sin_cos();
        let dzdx = BUMP_AMPLITUDE * BUMP_FREQUENCY * cx * cy;
        let dzdy = -BUMP_AMPLITUDE * BUMP_FREQUENCY * sx * sy;
        Vector3::new(-dzdx, -dzdy, 1.0).normalize()
    }

    fn color(&self, x: f64, y: f64) -> [f64; 3] {
        self.color.map(|[fx, fy, phase]| 0.5 + 0.3 * (fx * x + fy * y + phase).sin())
    }
}

/// Quaternion `(w, x, y, z)` rotating +z onto `n`.
fn quat_from_z(n: &Vector3<f64>) -> [f64; 4] {
    let q = [1.0 + n.z, -n.y, n.x, 0.0];
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.map(|v| v / norm)
}

fn ground_truth(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<GaussianSet> {
    let surface = Surface::random(rng);
    let start = [rng.random::<f64>(), rng.random::<f64>()];
    let spacing = PATCH_EXTENT / (cfg.n_gaussians as f64).sqrt();
    let radius = 0.6 * spacing;
    let k = sh_coeff_len(GT_SH_DEGREE);
    let mut g = GaussianSet::empty(GT_SH_DEGREE);
    let mut sh = vec![0.0; k];
    for i in 0..cfg.n_gaussians {
        let [s, t] = r2(i, start);
        let x = (s - 0.5) * PATCH_EXTENT;
        let y = (t - 0.5) * PATCH_EXTENT;
        let color = surface.color(x, y);
        for c in 0..3 {
            sh[c] = dc_from_color(color[c]);
        }
        g.push(
            Point3::new(x, y, surface.height(x, y)),
            rng.random_range(0.9..0.99),
            quat_from_z(&surface.normal(x, y)),
            Vector3::new(radius, radius, 0.05 * radius),
            &sh,
        );
    }
    g.validate()?;
    Ok(g)
}

/// Multiplies every primitive's base color by `tint`; an all-ones tint is a no-op.
pub fn tint_gaussians(g: &GaussianSet, tint: [f64; 3]) -> GaussianSet {
    if tint == [1.0; 3] {
        return g.clone();
    }
    let mut out = g.clone();
    let stride = g.sh_stride();
    for coeffs in out.sh.chunks_exact_mut(stride) {
        for c in 0..3 {
            coeffs[c] = (tint[c] * (0.5 + SH_C0 * coeffs[c]) - 0.5) / SH_C0;
        }
        for (j, v) in coeffs.iter_mut().enumerate().skip(3) {
            *v *= tint[j % 3];
        }
    }
    out
}

fn cameras(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<PinholeCamera>> {
    let focal = 0.5 * cfg.width.max(cfg.height) as f64 / cfg.half_fov_degrees.to_radians().tan();
    let center_azimuth = rng.random_range(0.0..std::f64::consts::TAU);
    let arc = cfg.arc_degrees.to_radians();
    let mut noise = || -> Vector3<f64> {
        Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)) * cfg.jitter
    };
    (0..cfg.n_views)
        .map(|i| {
            let phi = center_azimuth + arc * (i as f64 / (cfg.n_views - 1) as f64 - 0.5);
            let eye = Point3::new(RING_RADIUS * phi.cos(), RING_RADIUS * phi.sin(), RING_HEIGHT) + noise();
            let target = Point3::origin() + noise();
            let pose = Pose::look_at(eye, target, Vector3::z())?;
            PinholeCamera::centered(focal, cfg.width, cfg.height, pose)
        })
        .collect()
}

fn random_sparse(depth: &DepthMap, rng: &mut ChaCha8Rng) -> Result<SparseDepth> {
    let valid: Vec<usize> = (0..depth.len()).filter(|i| depth.at(*i).is_some()).collect();
    let n = SPARSE_SAMPLES.min(valid.len());
    let picks = rand::seq::index::sample(rng, valid.len(), n);
    let w = depth.width();
    let mut samples: Vec<DepthSample> = picks
        .iter()
        .map(|k| {
            let i = valid[k];
            DepthSample {
                u: i % w,
                v: i / w,
                depth: depth.at(i).expect("picked from valid pixels"),
            }
        })
        .collect();
    samples.sort_by_key(|s| (s.v, s.u));
    SparseDepth::new(samples)
}

fn synth_view(
    id: u32,
    camera: PinholeCamera,
    variants: &[GaussianSet],
    frame: &SimScaleTranslation,
    rng: &mut ChaCha8Rng,
) -> Result<SynthView> {
    let (w, h) = (camera.width, camera.height);
    let base = rasterize(&variants[0], &camera);
    let mut renders = vec![base.color.clone()];
    for g in &variants[1..] {
        renders.push(rasterize(g, &camera).color);
    }
    let alpha = base.accum_alpha.data();
    let depth_values = base
        .expected_depth
        .data()
        .iter()
        .zip(alpha)
        .map(|(d, a)| if *a > DEPTH_ALPHA_CUTOFF { *d } else { 0.0 })
        .collect();
    let depth = DepthMap::from_values(w, h, depth_values)?;
    let sky = SkyProbability::new(Raster::new(w, h, 1, alpha.iter().map(|a| 1.0 - a).collect())?)?;

    // Prediction frame: world = a·pred + b, so pred = (world − b)/a.
    let range = depth_to_range(&camera, &depth)?;
    let world_rays = RayMap::from_camera(&camera);
    let origin = Point3::from((camera.center().coords - frame.translation) / frame.scale);
    let rays = RayMap::new(w, h, vec![origin; w * h], world_rays.directions().to_vec())?;

    let opacity_logit = logit(HEAD_OPACITY);
    let mut head = Vec::with_capacity(w * h * 9);
    let mut pred = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let (scale_log, offset, d) = match range.at(i) {
            Some(r) => {
                let r_pred = r / frame.scale;
                let offset = r_pred * rng.random_range(-0.02..0.02);
                ((HEAD_PIXEL_SCALE * r_pred / camera.fx).ln(), offset, r_pred - offset)
            }
            None => (0.0, 0.0, 0.0),
        };
        head.extend_from_slice(&[opacity_logit, 1.0, 0.0, 0.0, 0.0, scale_log, scale_log, scale_log, offset]);
        pred.push(d);
    }

    let mono_transform = ScaleShift::new(rng.random_range(0.5..2.0), rng.random_range(-0.5..0.5))?;
    let inverse = mono_transform.inverse();
    let sparse = random_sparse(&depth, rng)?;
    Ok(SynthView {
        id,
        camera,
        renders,
        mono_depth: depth.map(|z| inverse.apply(z)),
        mono_transform,
        sparse,
        depth,
        sky,
        head: Raster::new(w, h, 9, head)?,
        pred_depth: DepthMap::from_values(w, h, pred)?,
        rays,
    })
}

/// Generates a scene. The output depends only on `cfg`.
pub fn synth_scene(cfg: &SynthConfig) -> Result<SyntheticScene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gaussians = ground_truth(cfg, &mut rng)?;
    let cams = cameras(cfg, &mut rng)?;
    let tints: Vec<[f64; 3]> = (0..cfg.n_variants)
        .map(|v| {
            if v == 0 {
                [1.0; 3]
            } else {
                [rng.random_range(0.55..1.0), rng.random_range(0.55..1.0), rng.random_range(0.55..1.0)]
            }
        })
        .collect();
    let embeddings = (0..cfg.n_variants)
        .map(|_| AppearanceEmbedding::new((0..cfg.embedding_dim).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect::<Result<Vec<_>>>()?;
    let prediction_frame = SimScaleTranslation::new(
        rng.random_range(-1.0f64..1.0).exp(),
        Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
    )?;
    let variants: Vec<GaussianSet> = tints.iter().map(|t| tint_gaussians(&gaussians, *t)).collect();
    let views = cams
        .into_iter()
        .enumerate()
        .map(|(i, cam)| synth_view(i as u32, cam, &variants, &prediction_frame, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticScene {
        config: cfg.clone(),
        gaussians,
        tints,
        embeddings,
        prediction_frame,
        views,
    })
}

pub const MANIFEST_FILE: &str = "scene.toml";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.wsgs";
pub const EMBEDDINGS_FILE: &str = "embeddings.wsem";
pub const IDENTITY_WEIGHTS_FILE: &str = "head_identity.wscw";

/// Writes the scene under `dir` and returns its manifest.
///
/// Per view: one PNG per variant, exact renders, depth, sky, head outputs, ray map,
/// prediction-frame depth, relative depth and sparse samples.
pub fn write_scene(scene: &SyntheticScene, dir: impl AsRef<Path>) -> Result<SceneManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_gaussians(dir.join(GROUND_TRUTH_FILE), &scene.gaussians)?;
    io::write_embeddings(dir.join(EMBEDDINGS_FILE), &scene.embeddings)?;
    let identity = ConvHeadWeights::identity_color(3, scene.config.embedding_dim, GT_SH_DEGREE)?;
    io::write_weights(dir.join(IDENTITY_WEIGHTS_FILE), &identity)?;

    let mut entries = Vec::with_capacity(scene.views.len());
    for v in &scene.views {
        let id = v.id;
        let mut images = Vec::new();
        for (k, img) in v.renders.iter().enumerate() {
            let png = format!("image_{id}_{k}.png");
            io::write_png(dir.join(&png), img)?;
            io::write_raster(dir.join(format!("render_{id}_{k}.wsrf")), img.raster())?;
            images.push(png);
        }
        let files = [
            (format!("depth_{id}.wsrf"), v.depth.to_raster()),
            (format!("sky_{id}.wsrf"), v.sky.raster().clone()),
            (format!("head_{id}.wsrf"), v.head.clone()),
            (format!("pred_depth_{id}.wsrf"), v.pred_depth.to_raster()),
            (format!("rays_{id}.wsrf"), v.rays.to_raster()),
            (format!("mono_{id}.wsrf"), v.mono_depth.to_raster()),
        ];
        for (name, raster) in &files {
            io::write_raster(dir.join(name), raster)?;
        }
        let sparse = format!("sparse_{id}.csv");
        io::write_sparse(dir.join(&sparse), &v.sparse)?;
        let [depth, sky, head, pred_depth, rays, mono] = files.map(|(name, _)| name);
        entries.push(ViewEntry {
            id,
            camera: CameraEntry::from_camera(&v.camera),
            depth,
            sky: Some(sky),
            images,
            features: Some(format!("render_{id}_0.wsrf")),
            head: Some(head),
            pred_depth: Some(pred_depth),
            rays: Some(rays),
            mono_depth: Some(mono),
            sparse: Some(sparse),
        });
    }
    let mut manifest = SceneManifest::new(format!("synthetic-{}", scene.config.seed), entries);
    manifest.embeddings = Some(EMBEDDINGS_FILE.into());
    manifest.variants = scene
        .tints
        .iter()
        .enumerate()
        .map(|(k, t)| VariantEntry {
            name: format!("variant_{k}"),
            embedding: k,
            tint: Some(*t),
        })
        .collect();
    manifest.set_base_dir(dir);
    manifest.save(dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
