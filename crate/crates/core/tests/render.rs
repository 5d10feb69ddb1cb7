mod common;

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use posefree_core::gaussians::{GaussianSet, SH_C0};
use posefree_core::geom::{PinholeCamera, Pose};
use posefree_core::render::{cov3d, project_gaussian, rasterize, COV2D_DILATION};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const IDENTITY_Q: [f64; 4] = [1.0, 0.0, 0.0, 0.0];

fn camera(size: usize) -> PinholeCamera {
    PinholeCamera::centered(size as f64, size, size, Pose::identity()).unwrap()
}

/// DC coefficient rendering as `color` in every channel.
fn dc(color: f64) -> f64 {
    (color - 0.5) / SH_C0
}

fn splat(mean: Point3<f64>, scale: f64, opacity: f64, color: f64) -> GaussianSet {
    GaussianSet::new(0, vec![mean], vec![opacity], vec![IDENTITY_Q], vec![Vector3::repeat(scale)], vec![dc(color); 3]).unwrap()
}

#[test]
fn single_splat_matches_closed_form_footprint() {
    let cam = camera(64);
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for _ in 0..20 {
        let z = rng.random_range(2.0..6.0);
        let (x, y) = (rng.random_range(-0.2..0.2) * z, rng.random_range(-0.2..0.2) * z);
        let (s, o, c) = (rng.random_range(0.02..0.1), rng.random_range(0.1..0.9), rng.random_range(0.2..1.0));
        let p = Point3::new(x, y, z);
        let out = rasterize(&splat(p, s, o, c), &cam);
        let (pu, pv) = ((cam.fx * x / z + cam.cx) as usize, (cam.fy * y / z + cam.cy) as usize);
        let expected = common::isotropic_splat_value(&cam, &p, s, o, c, pu, pv);
        let got = out.color.get(pu, pv, 0);
        assert!((got - expected).abs() < 1e-3, "peak {got} vs {expected}");
        // the whole neighborhood follows the same footprint
        for (du, dv) in [(0, 1), (1, 0), (1, 1)] {
            let e = common::isotropic_splat_value(&cam, &p, s, o, c, pu + du, pv + dv);
            assert!((out.color.get(pu + du, pv + dv, 0) - e).abs() < 1e-3);
        }
    }
}

#[test]
fn accumulated_alpha_integrates_to_the_footprint_mass() {
    let cam = camera(128);
    for (z, s, o) in [(4.0, 0.15, 0.5), (3.0, 0.1, 0.3), (5.0, 0.3, 0.2)] {
        let out = rasterize(&splat(Point3::new(0.0, 0.0, z), s, o, 1.0), &cam);
        let var = (cam.fx * s / z).powi(2) + COV2D_DILATION;
        let mass = o * std::f64::consts::TAU * var;
        let total: f64 = out.accum_alpha.data().iter().sum();
        assert!((total - mass).abs() < 0.05 * mass, "{total} vs {mass}");
    }
}

#[test]
fn opaque_front_splat_hides_the_back_one() {
    let cam = camera(32);
    // both means project onto the center of pixel (16, 16)
    let at = |z: f64| Point3::new(0.5 * z / cam.fx, 0.5 * z / cam.fy, z);
    let mut g = splat(at(2.0), 0.2, 0.999, 0.0);
    g.extend(&splat(at(4.0), 0.4, 0.95, 1.0)).unwrap();
    let out = rasterize(&g, &cam);
    let back = out.color.get(16, 16, 0);
    assert!(back < 1e-2, "back contribution {back}");
    // without the front splat the back one is bright
    assert!(rasterize(&splat(at(4.0), 0.4, 0.95, 1.0), &cam).color.get(16, 16, 0) > 0.9);
}

#[test]
fn doubling_depth_halves_the_footprint() {
    let cam = camera(64);
    let q = IDENTITY_Q;
    let s = Vector3::repeat(0.05);
    let sigma = |z: f64| {
        let g = project_gaussian(&cam, &Point3::new(0.0, 0.0, z), q, &s, 0.5, &[0.0; 3], 0).unwrap();
        (g.cov2d[(0, 0)] - COV2D_DILATION).sqrt()
    };
    for z in [1.0, 2.5, 7.0] {
        assert!((sigma(2.0 * z) - 0.5 * sigma(z)).abs() < 1e-12);
    }
}

#[test]
fn covariance_eigenvalues_are_squared_scales() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    for _ in 0..200 {
        let r = common::random_rotation(&mut rng);
        let q = nalgebra::UnitQuaternion::from_matrix(&r);
        let s = Vector3::new(rng.random_range(0.01..2.0), rng.random_range(0.01..2.0), rng.random_range(0.01..2.0));
        let cov = cov3d([q.w, q.i, q.j, q.k], &s);
        let mut eig: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
        let mut sq: Vec<f64> = s.iter().map(|v| v * v).collect();
        eig.sort_by(f64::total_cmp);
        sq.sort_by(f64::total_cmp);
        for (a, b) in eig.iter().zip(&sq) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b));
        }
        let expected: Matrix3<f64> = r * Matrix3::from_diagonal(&s.component_mul(&s)) * r.transpose();
        assert!((cov - expected).abs().max() < 1e-12);
    }
}

#[test]
fn input_order_does_not_change_the_image() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let g = common::random_gaussians(&mut rng, 300, 1);
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.shuffle(&mut rng);
    let mut shuffled = GaussianSet::empty(1);
    for i in order {
        shuffled.push(g.means[i], g.opacities[i], g.rotations[i], g.scales[i], g.sh_of(i));
    }
    let cam = camera(80);
    assert_eq!(rasterize(&g, &cam), rasterize(&shuffled, &cam));
}

#[test]
fn render_does_not_depend_on_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(54);
    let g = common::random_gaussians(&mut rng, 2000, 2);
    let cam = PinholeCamera::centered(90.0, 100, 70, Pose::identity()).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| rasterize(&g, &cam))
    };
    assert_eq!(run(1), run(8));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn outputs_stay_in_range(seed in 0u64..1_000_000, n in 0usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_gaussians(&mut rng, n, 1);
        let out = rasterize(&g, &camera(24));
        for a in out.accum_alpha.data() {
            prop_assert!((0.0..=1.0).contains(a));
        }
        for c in out.color.data() {
            prop_assert!((0.0..=1.0).contains(c));
        }
        for d in out.expected_depth.data() {
            prop_assert!(d.is_finite() && *d >= 0.0);
        }
    }
}
