mod common;

use std::fs;

use posefree_core::depth_align::{DepthSample, SparseDepth};
use posefree_core::geom::{ImageBuffer, PinholeCamera, Pose};
use posefree_core::io::{
    decode_embeddings, decode_gaussians, decode_png, decode_raster, decode_weights, encode_png, encode_raster,
    format_sparse, load_camera, parse_sparse, save_camera, SceneManifest,
};
use posefree_core::synth::{synth_scene, write_scene, SynthConfig, MANIFEST_FILE};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn binary_formats_round_trip_byte_for_byte() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for _ in 0..100 {
        assert_eq!(common::format_round_trip_diffs(&mut rng), 0);
    }
}

#[test]
fn f32_values_survive_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    let values: Vec<f64> = (0..7 * 5 * 2).map(|_| f64::from(rng.random_range(-1e6f32..1e6))).collect();
    let raster = posefree_core::geom::Raster::new(7, 5, 2, values).unwrap();
    assert_eq!(decode_raster(&encode_raster(&raster).unwrap()).unwrap(), raster);
}

#[test]
fn wrong_magic_and_version_are_rejected() {
    let raster = posefree_core::geom::Raster::zeros(2, 2, 1);
    let good = encode_raster(&raster).unwrap();
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    assert!(decode_raster(&bad_magic).is_err());
    let mut bad_version = good.clone();
    bad_version[4] = 99;
    assert!(decode_raster(&bad_version).is_err());
    assert!(decode_raster(&good[..good.len() - 1]).is_err());
    let mut trailing = good.clone();
    trailing.push(0);
    assert!(decode_raster(&trailing).is_err());
    // a valid file of one kind is not a file of another kind
    assert!(decode_gaussians(&good).is_err());
    assert!(decode_embeddings(&good).is_err());
    assert!(decode_weights(&good).is_err());
}

#[test]
fn sparse_csv_round_trips() {
    let sparse = SparseDepth::new(vec![
        DepthSample { u: 3, v: 1, depth: 2.5 },
        DepthSample { u: 0, v: 7, depth: 0.125 },
    ])
    .unwrap();
    let text = format_sparse(&sparse).unwrap();
    assert!(text.starts_with("u,v,depth\n"));
    assert_eq!(parse_sparse(&text).unwrap(), sparse);
    assert!(parse_sparse("u,v,depth\n1,2,-3\n").is_err());
    assert!(parse_sparse("u,v,depth\n1,x,3\n").is_err());
}

#[test]
fn png_round_trips_quantized_images() {
    let mut rng = ChaCha8Rng::seed_from_u64(63);
    for channels in [1, 3] {
        let data: Vec<f64> = (0..9 * 4 * channels).map(|_| f64::from(rng.random_range(0u8..=255)) / 255.0).collect();
        let img = ImageBuffer::new(9, 4, channels, data).unwrap();
        let back = decode_png(&encode_png(&img).unwrap()).unwrap();
        assert_eq!(back.channels(), 3);
        for i in 0..9 * 4 {
            for c in 0..3 {
                let src = img.data()[i * channels + if channels == 1 { 0 } else { c }];
                assert_eq!(back.data()[i * 3 + c], src);
            }
        }
    }
}

#[test]
fn camera_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    for k in 0..10 {
        let cam = common::random_camera(&mut rng);
        let path = dir.path().join(format!("cam{k}.toml"));
        save_camera(&path, &cam).unwrap();
        let back: PinholeCamera = load_camera(&path).unwrap();
        assert_eq!(back.width, cam.width);
        assert!((back.fx - cam.fx).abs() < 1e-12 && (back.cy - cam.cy).abs() < 1e-12);
        assert!((back.pose.rotation() - cam.pose.rotation()).abs().max() < 1e-12);
        assert!((back.pose.translation() - cam.pose.translation()).norm() < 1e-12);
    }
    let identity = PinholeCamera::centered(10.0, 4, 4, Pose::identity()).unwrap();
    save_camera(dir.path().join("id.toml"), &identity).unwrap();
    assert_eq!(load_camera(dir.path().join("id.toml")).unwrap(), identity);
}

#[test]
fn written_scenes_are_byte_identical_across_runs() {
    let cfg = SynthConfig { n_gaussians: 60, n_views: 3, width: 24, height: 20, embedding_dim: 4, ..SynthConfig::default() };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_scene(&synth_scene(&cfg).unwrap(), a.path()).unwrap();
    write_scene(&synth_scene(&cfg).unwrap(), b.path()).unwrap();
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 20);
    for name in &names {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name:?}");
    }
    let manifest = SceneManifest::load(a.path().join(MANIFEST_FILE)).unwrap();
    manifest.validate().unwrap();
    assert_eq!(manifest.views.len(), 3);
    assert_eq!(manifest.variants.len(), 2);
}

proptest! {
    #[test]
    fn decoding_garbage_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = decode_raster(&bytes);
        let _ = decode_gaussians(&bytes);
        let _ = decode_embeddings(&bytes);
        let _ = decode_weights(&bytes);
        let _ = decode_png(&bytes);
        let _ = parse_sparse(&String::from_utf8_lossy(&bytes));
    }

    #[test]
    fn headers_with_random_bodies_never_panic(tail in prop::collection::vec(any::<u8>(), 0..128), kind in 0usize..4) {
        let magic: &[u8; 4] = [b"WSRF", b"WSGS", b"WSEM", b"WSCW"][kind];
        let mut bytes = magic.to_vec();
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&tail);
        let _ = decode_raster(&bytes);
        let _ = decode_gaussians(&bytes);
        let _ = decode_embeddings(&bytes);
        let _ = decode_weights(&bytes);
    }

    #[test]
    fn sparse_text_round_trips(samples in prop::collection::vec((0usize..5000, 0usize..5000, 1e-3f64..1e4), 0..30)) {
        let sparse = SparseDepth::new(samples.into_iter().map(|(u, v, depth)| DepthSample { u, v, depth }).collect());
        if let Ok(sparse) = sparse {
            prop_assert_eq!(parse_sparse(&format_sparse(&sparse).unwrap()).unwrap(), sparse);
        }
    }
}
