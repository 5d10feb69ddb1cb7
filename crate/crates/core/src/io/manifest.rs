//! Human-readable scene manifests and standalone camera files (TOML).
//!
//! ```toml
//! scene = "example"
//!
//! [[variants]]
//! name = "noon"
//! embedding = 0            # row in the embedding file
//!
//! [[views]]
//! id = 0
//! fx = 300.0
//! fy = 300.0
//! cx = 128.0
//! cy = 128.0
//! width = 256
//! height = 256
//! rotation = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]   # world-to-camera, row-major
//! translation = [0.0, 0.0, 0.0]
//! depth = "depth_0.wsrf"
//! sky = "sky_0.wsrf"
//! images = ["view_0_noon.png"]
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{PinholeCamera, Pose};

/// Intrinsics and world-to-camera pose in manifest form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraEntry {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl CameraEntry {
    pub fn from_camera(c: &PinholeCamera) -> Self {
        let r = c.pose.rotation();
        let mut rotation = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                rotation[i * 3 + j] = r[(i, j)];
            }
        }
        let t = c.pose.translation();
        Self {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            rotation,
            translation: [t.x, t.y, t.z],
        }
    }

    pub fn to_camera(&self) -> Result<PinholeCamera> {
        let rotation = Matrix3::from_row_slice(&self.rotation);
        let pose = Pose::new(rotation, Vector3::from(self.translation))?;
        PinholeCamera::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height, pose)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub id: u32,
    #[serde(flatten)]
    pub camera: CameraEntry,
    /// Scale-aligned camera-frame depth (1-channel raster).
    pub depth: String,
    /// Sky probability (1-channel raster).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sky: Option<String>,
    /// One PNG per lighting variant, in variant order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<String>,
    /// Local feature raster (`d_l` channels).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<String>,
    /// Packed 9-channel head outputs (opacity logit, rotation, log scale, depth offset).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<String>,
    /// Predicted distance along the predicted rays, in the prediction's own frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_depth: Option<String>,
    /// Predicted ray map (6 channels).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rays: Option<String>,
    /// Unaligned relative depth and its sparse metric samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mono_depth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparse: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantEntry {
    pub name: String,
    /// Row of this variant in the scene embedding file.
    pub embedding: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tint: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub scene: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<VariantEntry>,
    pub views: Vec<ViewEntry>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl SceneManifest {
    pub fn new(scene: impl Into<String>, views: Vec<ViewEntry>) -> Self {
        Self {
            scene: scene.into(),
            embeddings: None,
            variants: Vec::new(),
            views,
            base_dir: PathBuf::new(),
        }
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut m: SceneManifest = toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        m.base_dir = base_dir.into();
        m.validate()?;
        Ok(m)
    }

    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    /// Ids are unique and every camera is valid. File existence is checked on access.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for v in &self.views {
            if !seen.insert(v.id) {
                return Err(Error::Manifest(format!("duplicate view id {}", v.id)));
            }
            v.camera.to_camera()?;
            if !v.images.is_empty() && !self.variants.is_empty() && v.images.len() != self.variants.len() {
                return Err(Error::Manifest(format!(
                    "view {} lists {} images for {} variants",
                    v.id,
                    v.images.len(),
                    self.variants.len()
                )));
            }
        }
        Ok(())
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn set_base_dir(&mut self, dir: impl Into<PathBuf>) {
        self.base_dir = dir.into();
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }

    pub fn view(&self, id: u32) -> Result<&ViewEntry> {
        self.views.iter().find(|v| v.id == id).ok_or(Error::ViewNotFound(id))
    }
}

/// Loads a standalone camera file (the [`CameraEntry`] keys at top level).
pub fn load_camera(path: impl AsRef<Path>) -> Result<PinholeCamera> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let entry: CameraEntry = toml::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
    entry.to_camera()
}

pub fn save_camera(path: impl AsRef<Path>, camera: &PinholeCamera) -> Result<()> {
    let path = path.as_ref();
    let text = toml::to_string(&CameraEntry::from_camera(camera)).map_err(|e| Error::Manifest(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::axis_angle;

    fn entry(id: u32) -> ViewEntry {
        let pose = Pose::new(axis_angle(Vector3::new(0.3, 1.0, -0.2), 0.4), Vector3::new(0.1, -2.0, 3.5)).unwrap();
        let cam = PinholeCamera::new(301.5, 299.25, 128.3, 127.9, 256, 256, pose).unwrap();
        ViewEntry {
            id,
            camera: CameraEntry::from_camera(&cam),
            depth: format!("depth_{id}.wsrf"),
            sky: None,
            images: vec![],
            features: None,
            head: None,
            pred_depth: None,
            rays: None,
            mono_depth: None,
            sparse: None,
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = SceneManifest::new("s", vec![entry(0), entry(3)]);
        let back = SceneManifest::parse(&m.to_text().unwrap(), "").unwrap();
        assert_eq!(back, m);
        assert_eq!(back.view(3).unwrap().camera.to_camera().unwrap(), m.views[1].camera.to_camera().unwrap());
    }

    #[test]
    fn duplicate_ids_and_bad_cameras() {
        let m = SceneManifest::new("s", vec![entry(1), entry(1)]);
        assert!(SceneManifest::parse(&m.to_text().unwrap(), "").is_err());
        let mut bad = entry(2);
        bad.camera.fx = -1.0;
        let m = SceneManifest::new("s", vec![bad]);
        assert!(SceneManifest::parse(&m.to_text().unwrap(), "").is_err());
        assert!(SceneManifest::parse("not toml [", "").is_err());
        assert!(matches!(SceneManifest::new("s", vec![]).view(4), Err(Error::ViewNotFound(4))));
    }
}
