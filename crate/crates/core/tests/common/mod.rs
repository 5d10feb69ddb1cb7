//! Analytic scenes and independent oracles shared by the integration tests.
#![allow(dead_code, clippy::too_many_arguments, clippy::type_complexity)]

use nalgebra::{Matrix3, Point3, Vector3};
use posefree_core::geom::{axis_angle, DepthMap, PinholeCamera, Pose, Raster};
use posefree_core::visibility::{SkyProbability, ViewRecord};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Axis-aligned box.
#[derive(Clone, Copy, Debug)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

/// Surfaces a ray can hit. Ids: boxes `0..n`, then the plane.
#[derive(Clone, Debug)]
pub struct Scene {
    pub boxes: Vec<Aabb>,
    /// Plane `n·x = d`, optionally limited to a disk of radius `r` around `center`.
    pub plane: Option<(Vector3<f64>, f64, Option<(Point3<f64>, f64)>)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub surface: usize,
}

fn ray_box(o: &Point3<f64>, d: &Vector3<f64>, b: &Aabb) -> Option<f64> {
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..3 {
        if d[k].abs() < 1e-300 {
            if o[k] < b.min[k] || o[k] > b.max[k] {
                return None;
            }
            continue;
        }
        let a = (b.min[k] - o[k]) / d[k];
        let c = (b.max[k] - o[k]) / d[k];
        t0 = t0.max(a.min(c));
        t1 = t1.min(a.max(c));
    }
    (t0 <= t1 && t0 > 1e-9).then_some(t0)
}

impl Scene {
    /// First hit along `o + t·d` with `t > 0`.
    pub fn cast(&self, o: &Point3<f64>, d: &Vector3<f64>) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let mut offer = |t: f64, surface: usize| {
            if best.is_none_or(|b| t < b.t) {
                best = Some(Hit { t, surface });
            }
        };
        for (i, b) in self.boxes.iter().enumerate() {
            if let Some(t) = ray_box(o, d, b) {
                offer(t, i);
            }
        }
        if let Some((n, off, disk)) = &self.plane {
            let denom = n.dot(d);
            if denom.abs() > 1e-12 {
                let t = (off - n.dot(&o.coords)) / denom;
                let inside = disk.is_none_or(|(c, r)| ((o + d * t) - c).norm() <= r);
                if t > 1e-9 && inside {
                    offer(t, self.boxes.len());
                }
            }
        }
        best
    }
}

/// Camera-frame ray through the continuous pixel `(x, y)`, with unit z component.
pub fn pixel_ray(cam: &PinholeCamera, x: f64, y: f64) -> Vector3<f64> {
    Vector3::new((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0)
}

/// Ray-cast z-depth and hit surface per pixel; misses are invalid.
pub fn raycast(scene: &Scene, cam: &PinholeCamera) -> (DepthMap, Vec<Option<usize>>) {
    let r_t = cam.pose.rotation().transpose();
    let c = cam.center();
    let mut depth = vec![0.0; cam.width * cam.height];
    let mut ids = vec![None; cam.width * cam.height];
    for v in 0..cam.height {
        for u in 0..cam.width {
            let dir_cam = pixel_ray(cam, u as f64 + 0.5, v as f64 + 0.5);
            // with dir_cam.z = 1 the ray parameter is the z-depth
            if let Some(h) = scene.cast(&c, &(r_t * dir_cam)) {
                depth[v * cam.width + u] = h.t;
                ids[v * cam.width + u] = Some(h.surface);
            }
        }
    }
    (DepthMap::from_values(cam.width, cam.height, depth).unwrap(), ids)
}

/// View whose sky is exactly the set of pixels that miss the scene.
pub fn raycast_view(id: u32, scene: &Scene, cam: &PinholeCamera) -> (ViewRecord, Vec<Option<usize>>) {
    let (depth, ids) = raycast(scene, cam);
    let sky = ids.iter().map(|h| if h.is_some() { 0.0 } else { 1.0 }).collect();
    let sky = SkyProbability::new(Raster::new(cam.width, cam.height, 1, sky).unwrap()).unwrap();
    (ViewRecord::new(id, *cam, depth, sky).unwrap(), ids)
}

/// World point seen at the center of pixel `i`, or `None` where the depth is invalid.
fn pixel_world_point(view: &ViewRecord, i: usize) -> Option<Point3<f64>> {
    let cam = &view.camera;
    let z = view.depth.at(i)?;
    let (u, v) = (i % cam.width, i / cam.width);
    let p_cam = pixel_ray(cam, u as f64 + 0.5, v as f64 + 0.5) * z;
    Some(Point3::from(cam.pose.rotation().transpose() * (p_cam - cam.pose.translation())))
}

/// Independent log-depth warp: `|ln D_dst(nearest) − ln z_warped|` per src pixel.
pub fn warp_residual(src: &ViewRecord, dst: &ViewRecord) -> Vec<Option<f64>> {
    let dc = &dst.camera;
    (0..src.depth.len())
        .map(|i| {
            let x = pixel_world_point(src, i)?;
            let p = dc.pose.rotation() * x.coords + dc.pose.translation();
            if p.z <= 1e-9 {
                return None;
            }
            let (px, py) = (dc.fx * p.x / p.z + dc.cx, dc.fy * p.y / p.z + dc.cy);
            if !(px >= 0.0 && py >= 0.0 && px < dc.width as f64 && py < dc.height as f64) {
                return None;
            }
            let sampled = dst.depth.get(px.floor() as usize, py.floor() as usize)?;
            Some((sampled.ln() - p.z.ln()).abs())
        })
        .collect()
}

pub fn non_sky(view: &ViewRecord, cutoff: f64) -> Vec<bool> {
    view.sky.values().iter().map(|s| *s < cutoff).collect()
}

/// `CoV_{a→b}` computed from [`warp_residual`].
pub fn coverage_oracle(a: &ViewRecord, b: &ViewRecord, delta: f64, cutoff: f64) -> f64 {
    let res = warp_residual(a, b);
    let domain = non_sky(a, cutoff);
    let n = domain.iter().filter(|x| **x).count();
    let hits = res
        .iter()
        .zip(&domain)
        .filter(|(r, d)| **d && r.is_some_and(|r| r < delta))
        .count();
    hits as f64 / n as f64
}

/// Fraction of the target's non-sky pixels that are consistent with either context.
pub fn visibility_fraction_oracle(target: &ViewRecord, contexts: &[&ViewRecord], delta: f64, cutoff: f64) -> f64 {
    let residuals: Vec<_> = contexts.iter().map(|c| warp_residual(target, c)).collect();
    let domain = non_sky(target, cutoff);
    let n = domain.iter().filter(|x| **x).count();
    let hits = (0..domain.len())
        .filter(|i| domain[*i] && residuals.iter().any(|r| r[*i].is_some_and(|r| r < delta)))
        .count();
    hits as f64 / n as f64
}

/// Rotation angle via the trace formula.
pub fn rotation_angle_oracle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let r = a * b.transpose();
    ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

/// Fronto-parallel wall at z = 10 behind a slab spanning z ∈ [5, 5.5].
pub fn slab_scene() -> Scene {
    Scene {
        boxes: vec![Aabb {
            min: Point3::new(-1.0, -1.0, 5.0),
            max: Point3::new(1.0, 1.0, 5.5),
        }],
        plane: Some((Vector3::z(), 10.0, None)),
    }
}

/// Identity-orientation camera centered at `center`, looking down +z.
pub fn forward_camera(center: Point3<f64>, focal: f64, size: usize) -> PinholeCamera {
    let pose = Pose::new(Matrix3::identity(), -center.coords).unwrap();
    PinholeCamera::centered(focal, size, size, pose).unwrap()
}

/// Ground disk of radius 8 plus two boxes, seen by `n` cameras on a ring looking at
/// the center. The top rows of each image miss the disk and count as sky.
pub fn ring_scene() -> Scene {
    Scene {
        boxes: vec![
            Aabb {
                min: Point3::new(-0.4, -0.4, 0.0),
                max: Point3::new(0.4, 0.4, 0.9),
            },
            Aabb {
                min: Point3::new(1.0, -1.6, 0.0),
                max: Point3::new(1.5, -1.1, 0.5),
            },
        ],
        plane: Some((Vector3::z(), 0.0, Some((Point3::origin(), 8.0)))),
    }
}

pub fn ring_cameras(n: usize, size: usize) -> Vec<PinholeCamera> {
    (0..n)
        .map(|i| {
            let phi = std::f64::consts::TAU * i as f64 / n as f64;
            let r = 3.0 + 0.15 * (i % 3) as f64;
            let eye = Point3::new(r * phi.cos(), r * phi.sin(), 1.3);
            let pose = Pose::look_at(eye, Point3::new(0.0, 0.0, 0.2), Vector3::z()).unwrap();
            PinholeCamera::centered(0.75 * size as f64, size, size, pose).unwrap()
        })
        .collect()
}

pub fn ring_views(n: usize, size: usize) -> Vec<ViewRecord> {
    let scene = ring_scene();
    ring_cameras(n, size)
        .into_iter()
        .enumerate()
        .map(|(i, c)| raycast_view(i as u32, &scene, &c).0)
        .collect()
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let axis = if axis.norm() < 1e-3 { Vector3::x() } else { axis };
    axis_angle(axis, rng.random_range(0.0..std::f64::consts::PI))
}

pub fn random_camera(rng: &mut ChaCha8Rng) -> PinholeCamera {
    let pose = Pose::new(
        random_rotation(rng),
        Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
    )
    .unwrap();
    let (w, h) = (rng.random_range(16..640), rng.random_range(16..480));
    PinholeCamera::new(
        rng.random_range(50.0..800.0),
        rng.random_range(50.0..800.0),
        rng.random_range(1.0..w as f64 - 1.0),
        rng.random_range(1.0..h as f64 - 1.0),
        w,
        h,
        pose,
    )
    .unwrap()
}

/// Sparse samples over a `n × 1` prediction: `ref = (scale·pred + shift)·e^{σ·N}`, with a
/// fraction of references multiplied by a factor in `[3, 10]`. Returns the outlier flags.
pub fn ransac_problem(
    rng: &mut ChaCha8Rng,
    n: usize,
    outlier_fraction: f64,
    log_sigma: f64,
    scale: f64,
    shift: f64,
) -> (DepthMap, posefree_core::depth_align::SparseDepth, Vec<bool>) {
    use posefree_core::depth_align::{DepthSample, SparseDepth};
    use rand_distr::StandardNormal;
    let pred: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
    let mut outliers = vec![false; n];
    let n_out = (outlier_fraction * n as f64).round() as usize;
    for k in rand::seq::index::sample(rng, n, n_out).iter() {
        outliers[k] = true;
    }
    let samples = (0..n)
        .map(|k| {
            let noise: f64 = rng.sample(StandardNormal);
            let mut depth = (scale * pred[k] + shift) * (log_sigma * noise).exp();
            if outliers[k] {
                depth *= rng.random_range(3.0..10.0);
            }
            DepthSample { u: k, v: 0, depth }
        })
        .collect();
    (DepthMap::from_values(n, 1, pred).unwrap(), SparseDepth::new(samples).unwrap(), outliers)
}

/// Ray-cast visibility from `ctx` of the surface point seen at each target pixel.
///
/// `None` marks pixels excluded from comparison: sky, mixed surface ids in the 3×3
/// neighborhood of the target pixel or of the context pixel it lands on, and
/// landings within a pixel of the context image border.
pub fn point_visibility_oracle(scene: &Scene, target: &PinholeCamera, ctx: &PinholeCamera) -> Vec<Option<bool>> {
    let (t_depth, t_ids) = raycast(scene, target);
    let (_, c_ids) = raycast(scene, ctx);
    let uniform = |ids: &[Option<usize>], w: usize, h: usize, u: usize, v: usize| {
        if u == 0 || v == 0 || u + 1 >= w || v + 1 >= h {
            return false;
        }
        let s = ids[v * w + u];
        (v - 1..=v + 1).all(|y| (u - 1..=u + 1).all(|x| ids[y * w + x] == s))
    };
    let (w, h) = (target.width, target.height);
    let r_t = target.pose.rotation().transpose();
    let c = ctx.center();
    (0..w * h)
        .map(|i| {
            let (u, v) = (i % w, i / w);
            let z = t_depth.at(i)?;
            if !uniform(&t_ids, w, h, u, v) {
                return None;
            }
            let x = target.center() + r_t * pixel_ray(target, u as f64 + 0.5, v as f64 + 0.5) * z;
            let p = ctx.pose.rotation() * x.coords + ctx.pose.translation();
            if p.z <= 0.0 {
                return Some(false);
            }
            let (px, py) = (ctx.fx * p.x / p.z + ctx.cx, ctx.fy * p.y / p.z + ctx.cy);
            let (cw, ch) = (ctx.width as f64, ctx.height as f64);
            if px < -1.0 || py < -1.0 || px > cw + 1.0 || py > ch + 1.0 {
                return Some(false);
            }
            if px < 1.0 || py < 1.0 || px > cw - 1.0 || py > ch - 1.0 {
                return None;
            }
            if !uniform(&c_ids, ctx.width, ctx.height, px as usize, py as usize) {
                return None;
            }
            let hit = scene.cast(&c, &(x - c))?;
            Some((hit.t - 1.0).abs() < 1e-6)
        })
        .collect()
}

pub fn random_raster(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize, amplitude: f64) -> Raster {
    Raster::new(w, h, c, (0..w * h * c).map(|_| rng.random_range(-amplitude..amplitude)).collect()).unwrap()
}

/// Head with `kernel`-sized first layer and a 1x1 second layer, weights in `±amplitude`.
pub fn random_head(
    rng: &mut ChaCha8Rng,
    feature_channels: usize,
    embedding_dim: usize,
    hidden: usize,
    kernel: usize,
    sh_degree: usize,
    activation: posefree_core::gaussians::Activation,
    amplitude: f64,
) -> posefree_core::gaussians::ConvHeadWeights {
    use posefree_core::gaussians::{sh_coeff_len, ConvHeadWeights, ConvLayer};
    let cin = feature_channels + embedding_dim;
    let cout = sh_coeff_len(sh_degree);
    let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-amplitude..amplitude)).collect::<Vec<_>>();
    let l1 = ConvLayer::same(hidden, cin, kernel, draw(hidden * cin * kernel * kernel), draw(hidden)).unwrap();
    let l2 = ConvLayer::same(cout, hidden, 1, draw(cout * hidden), draw(cout)).unwrap();
    ConvHeadWeights::new(l1, l2, activation).unwrap()
}

/// `n` predicted points in `[-5, 5]³` and references `a·p + b` with per-axis Gaussian
/// noise of standard deviation `sigma`, laid out as `n × 1` world-frame maps.
pub fn wls_problem(
    rng: &mut ChaCha8Rng,
    n: usize,
    a: f64,
    b: Vector3<f64>,
    sigma: f64,
) -> (posefree_core::geom::PointMap, posefree_core::geom::PointMap) {
    use posefree_core::geom::{Frame, PointMap};
    use rand_distr::StandardNormal;
    let pred: Vec<Point3<f64>> = (0..n)
        .map(|_| Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
        .collect();
    let reference = pred
        .iter()
        .map(|p| {
            let noise = Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
            Point3::from(p.coords * a + b + noise * sigma)
        })
        .collect();
    (
        PointMap::new(n, 1, Frame::World, pred, vec![true; n]).unwrap(),
        PointMap::new(n, 1, Frame::World, reference, vec![true; n]).unwrap(),
    )
}

/// `n` random primitives in front of an identity camera at the origin.
pub fn random_gaussians(rng: &mut ChaCha8Rng, n: usize, sh_degree: usize) -> posefree_core::gaussians::GaussianSet {
    use posefree_core::gaussians::{sh_coeff_len, GaussianSet};
    let mut g = GaussianSet::empty(sh_degree);
    let k = sh_coeff_len(sh_degree);
    for _ in 0..n {
        let z = rng.random_range(0.5..8.0);
        let mean = Point3::new(rng.random_range(-0.6..0.6) * z, rng.random_range(-0.6..0.6) * z, z);
        let q = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let norm = q.iter().map(|v: &f64| v * v).sum::<f64>().sqrt().max(1e-9);
        let scale = Vector3::new(rng.random_range(0.005..0.3), rng.random_range(0.005..0.3), rng.random_range(0.005..0.3));
        let sh: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        g.push(mean, rng.random_range(0.01..1.0), q.map(|v| v / norm), scale, &sh);
    }
    g
}

/// One randomized encode → decode → encode cycle per binary format; returns the
/// number of formats whose bytes differed.
pub fn format_round_trip_diffs(rng: &mut ChaCha8Rng) -> usize {
    use posefree_core::gaussians::{Activation, AppearanceEmbedding};
    use posefree_core::io::*;
    let mut diffs = 0;
    let (w, h, c) = (rng.random_range(1..20), rng.random_range(1..20), rng.random_range(1..10));
    let bytes = encode_raster(&random_raster(rng, w, h, c, 1e3)).unwrap();
    diffs += usize::from(encode_raster(&decode_raster(&bytes).unwrap()).unwrap() != bytes);

    let degree = rng.random_range(0..=3);
    let n = rng.random_range(0..40);
    let bytes = encode_gaussians(&random_gaussians(rng, n, degree)).unwrap();
    diffs += usize::from(encode_gaussians(&decode_gaussians(&bytes).unwrap()).unwrap() != bytes);

    let dim = rng.random_range(1..40);
    let embeddings: Vec<AppearanceEmbedding> = (0..rng.random_range(1..6))
        .map(|_| AppearanceEmbedding::new((0..dim).map(|_| rng.random_range(-10.0..10.0)).collect()).unwrap())
        .collect();
    let bytes = encode_embeddings(&embeddings).unwrap();
    diffs += usize::from(encode_embeddings(&decode_embeddings(&bytes).unwrap()).unwrap() != bytes);

    let activation = if rng.random_bool(0.5) { Activation::Relu } else { Activation::Identity };
    let (dl, dg, hidden) = (rng.random_range(1..6), rng.random_range(0..6), rng.random_range(1..8));
    let kernel = [1, 3, 5][rng.random_range(0..3)];
    let degree = rng.random_range(0..=3);
    let head = random_head(rng, dl, dg, hidden, kernel, degree, activation, 2.0);
    let bytes = encode_weights(&head).unwrap();
    diffs += usize::from(encode_weights(&decode_weights(&bytes).unwrap()).unwrap() != bytes);
    diffs
}

/// Closed-form EWA value of an isotropic primitive of scale `s` at camera-frame `p`,
/// seen by an identity-pose camera at the center of pixel `(u, v)`:
/// `c·min(0.99, o·exp(−½ dᵀΣ⁻¹d))` with `Σ = s²·J·Jᵀ + dilation·I`.
pub fn isotropic_splat_value(cam: &PinholeCamera, p: &Point3<f64>, s: f64, o: f64, c: f64, u: usize, v: usize) -> f64 {
    use nalgebra::{Matrix2, Vector2};
    let (x, y, z) = (p.x, p.y, p.z);
    let (a, b) = (cam.fx / z, cam.fy / z);
    let jjt = Matrix2::new(
        a * a * (1.0 + x * x / (z * z)),
        a * b * x * y / (z * z),
        a * b * x * y / (z * z),
        b * b * (1.0 + y * y / (z * z)),
    );
    let cov = jjt * s * s + Matrix2::identity() * posefree_core::render::COV2D_DILATION;
    let mean = Vector2::new(cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy);
    let d = Vector2::new(u as f64 + 0.5, v as f64 + 0.5) - mean;
    let power = -0.5 * (d.transpose() * cov.try_inverse().unwrap() * d)[0];
    c * (o * power.exp()).min(posefree_core::render::MAX_ALPHA)
}
