//! File formats and scene manifests.

mod binary;
mod formats;
mod manifest;

pub use formats::{
    decode_embeddings, decode_gaussians, decode_raster, decode_weights, encode_embeddings, encode_gaussians,
    encode_raster, encode_weights, DTYPE_F32, EMBEDDING_MAGIC, FORMAT_VERSION, GAUSSIAN_MAGIC, RASTER_MAGIC,
    WEIGHTS_MAGIC,
};
pub use manifest::{load_camera, save_camera, CameraEntry, SceneManifest, VariantEntry, ViewEntry};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::depth_align::{DepthSample, SparseDepth};
use crate::error::{Error, Result};
use crate::gaussians::{AppearanceEmbedding, ConvHeadWeights, GaussianSet};
use crate::geom::{ImageBuffer, Raster};

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster> {
    decode_raster(&read_bytes(path.as_ref())?)
}

pub fn write_raster(path: impl AsRef<Path>, raster: &Raster) -> Result<()> {
    write_bytes(path.as_ref(), &encode_raster(raster)?)
}

pub fn read_gaussians(path: impl AsRef<Path>) -> Result<GaussianSet> {
    decode_gaussians(&read_bytes(path.as_ref())?)
}

pub fn write_gaussians(path: impl AsRef<Path>, g: &GaussianSet) -> Result<()> {
    write_bytes(path.as_ref(), &encode_gaussians(g)?)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Vec<AppearanceEmbedding>> {
    decode_embeddings(&read_bytes(path.as_ref())?)
}

pub fn write_embeddings(path: impl AsRef<Path>, e: &[AppearanceEmbedding]) -> Result<()> {
    write_bytes(path.as_ref(), &encode_embeddings(e)?)
}

/// First embedding of a file; the CLI accepts single-embedding files for `--e1`/`--e2`.
pub fn read_embedding(path: impl AsRef<Path>, index: usize) -> Result<AppearanceEmbedding> {
    let path = path.as_ref();
    let all = read_embeddings(path)?;
    let n = all.len();
    all.into_iter()
        .nth(index)
        .ok_or_else(|| Error::Format(format!("{}: embedding {index} requested, file holds {n}", path.display())))
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<ConvHeadWeights> {
    decode_weights(&read_bytes(path.as_ref())?)
}

pub fn write_weights(path: impl AsRef<Path>, w: &ConvHeadWeights) -> Result<()> {
    write_bytes(path.as_ref(), &encode_weights(w)?)
}

#[derive(Serialize, Deserialize)]
struct SparseRow {
    u: usize,
    v: usize,
    depth: f64,
}

/// Parses a `u,v,depth` CSV with a header row.
pub fn parse_sparse(text: &str) -> Result<SparseDepth> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut samples = Vec::new();
    for row in reader.deserialize::<SparseRow>() {
        let r = row.map_err(|e| Error::Format(format!("sparse depth: {e}")))?;
        samples.push(DepthSample { u: r.u, v: r.v, depth: r.depth });
    }
    SparseDepth::new(samples)
}

pub fn format_sparse(sparse: &SparseDepth) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in sparse.samples() {
        w.serialize(SparseRow { u: s.u, v: s.v, depth: s.depth })
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    // serde writes no header when there are no rows
    let text = String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))?;
    Ok(if text.is_empty() { "u,v,depth\n".into() } else { text })
}

pub fn read_sparse(path: impl AsRef<Path>) -> Result<SparseDepth> {
    let path = path.as_ref();
    parse_sparse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_sparse(path: impl AsRef<Path>, sparse: &SparseDepth) -> Result<()> {
    write_bytes(path.as_ref(), format_sparse(sparse)?.as_bytes())
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes an image as 8-bit PNG (RGB for 3 channels, grayscale for 1).
pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes: Vec<u8> = img.data().iter().map(|v| quantize(*v)).collect();
    let color = match img.channels() {
        3 => image::ExtendedColorType::Rgb8,
        1 => image::ExtendedColorType::L8,
        c => return Err(Error::Image(format!("cannot write {c}-channel image as PNG"))),
    };
    let mut out = Vec::new();
    image::ImageEncoder::write_image(image::codecs::png::PngEncoder::new(&mut out), &bytes, w, h, color)
        .map_err(|e| Error::Image(e.to_string()))?;
    Ok(out)
}

/// Decodes any PNG to a 3-channel image in `[0, 1]`.
pub fn decode_png(bytes: &[u8]) -> Result<ImageBuffer> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Image(e.to_string()))?
        .into_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|b| f64::from(b) / 255.0).collect();
    ImageBuffer::new(w as usize, h as usize, 3, data)
}

pub fn read_png(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    decode_png(&read_bytes(path.as_ref())?)
}

pub fn write_png(path: impl AsRef<Path>, img: &ImageBuffer) -> Result<()> {
    write_bytes(path.as_ref(), &encode_png(img)?)
}
