//! Versioned little-endian binary formats.
//!
//! | format      | magic  | header after magic + u16 version                            |
//! |-------------|--------|-------------------------------------------------------------|
//! | raster      | `WSRF` | width u32, height u32, channels u16, dtype u16 (0 = f32)    |
//! | gaussians   | `WSGS` | count u64, sh_degree u16                                    |
//! | embeddings  | `WSEM` | count u32, dim u32                                          |
//! | conv head   | `WSCW` | activation u16, layers u16, then per layer out/in/k/pad u32 |
//!
//! Payloads are row-major f32. Raster pixels interleave channels. Gaussian records
//! are `μ(3) α(1) r(4) s(3) sh(3·(deg+1)²)`. Conv layers store weights
//! `[out][in][ky][kx]` followed by the bias.

use nalgebra::{Point3, Vector3};

use super::binary::{checked_count, put_f32s, Cursor};
use crate::error::{Error, Result};
use crate::gaussians::{sh_coeff_len, Activation, AppearanceEmbedding, ConvHeadWeights, ConvLayer, GaussianSet, MAX_SH_DEGREE};
use crate::geom::Raster;

pub const RASTER_MAGIC: &[u8; 4] = b"WSRF";
pub const GAUSSIAN_MAGIC: &[u8; 4] = b"WSGS";
pub const EMBEDDING_MAGIC: &[u8; 4] = b"WSEM";
pub const WEIGHTS_MAGIC: &[u8; 4] = b"WSCW";
pub const FORMAT_VERSION: u16 = 1;
pub const DTYPE_F32: u16 = 0;

pub fn encode_raster(raster: &Raster) -> Result<Vec<u8>> {
    let narrow = |v: usize, what: &str| -> Result<u32> {
        u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit the raster header")))
    };
    let channels = u16::try_from(raster.channels())
        .map_err(|_| Error::Format(format!("{} channels do not fit the raster header", raster.channels())))?;
    let mut out = Vec::with_capacity(18 + raster.data().len() * 4);
    out.extend_from_slice(RASTER_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&narrow(raster.width(), "width")?.to_le_bytes());
    out.extend_from_slice(&narrow(raster.height(), "height")?.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&DTYPE_F32.to_le_bytes());
    put_f32s(&mut out, raster.data())?;
    Ok(out)
}

pub fn decode_raster(bytes: &[u8]) -> Result<Raster> {
    let mut c = Cursor::new(bytes, "raster file");
    c.magic(RASTER_MAGIC)?;
    c.version(FORMAT_VERSION)?;
    let width = c.u32()?;
    let height = c.u32()?;
    let channels = c.u16()?;
    let dtype = c.u16()?;
    if dtype != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported raster dtype {dtype}")));
    }
    if channels == 0 {
        return Err(Error::Format("raster declares zero channels".into()));
    }
    let count = checked_count(&[width.into(), height.into(), channels.into()], "raster")?;
    let data = c.f32s(count)?;
    c.finish()?;
    Raster::new(width as usize, height as usize, channels as usize, data)
}

pub fn encode_gaussians(g: &GaussianSet) -> Result<Vec<u8>> {
    g.validate()?;
    let stride = 11 + g.sh_stride();
    let mut out = Vec::with_capacity(16 + g.len() * stride * 4);
    out.extend_from_slice(GAUSSIAN_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(g.len() as u64).to_le_bytes());
    out.extend_from_slice(&(g.sh_degree as u16).to_le_bytes());
    let mut record = Vec::with_capacity(stride);
    for i in 0..g.len() {
        record.clear();
        record.extend_from_slice(g.means[i].coords.as_slice());
        record.push(g.opacities[i]);
        record.extend_from_slice(&g.rotations[i]);
        record.extend_from_slice(g.scales[i].as_slice());
        record.extend_from_slice(g.sh_of(i));
        put_f32s(&mut out, &record)?;
    }
    Ok(out)
}

pub fn decode_gaussians(bytes: &[u8]) -> Result<GaussianSet> {
    let mut c = Cursor::new(bytes, "gaussian file");
    c.magic(GAUSSIAN_MAGIC)?;
    c.version(FORMAT_VERSION)?;
    let count = c.u64()?;
    let degree = c.u16()? as usize;
    if degree > MAX_SH_DEGREE {
        return Err(Error::Format(format!("unsupported SH degree {degree}")));
    }
    let k = sh_coeff_len(degree);
    let stride = 11 + k;
    let values = c.f32s(checked_count(&[count, stride as u64], "gaussian file")?)?;
    c.finish()?;
    let mut g = GaussianSet::empty(degree);
    for r in values.chunks_exact(stride) {
        g.push(
            Point3::new(r[0], r[1], r[2]),
            r[3],
            [r[4], r[5], r[6], r[7]],
            Vector3::new(r[8], r[9], r[10]),
            &r[11..],
        );
    }
    g.validate()?;
    Ok(g)
}

pub fn encode_embeddings(embeddings: &[AppearanceEmbedding]) -> Result<Vec<u8>> {
    let dim = embeddings.first().map_or(0, |e| e.dim());
    if embeddings.iter().any(|e| e.dim() != dim) {
        return Err(Error::InvalidConfig("embeddings in one file must share a dimension".into()));
    }
    let mut out = Vec::with_capacity(14 + embeddings.len() * dim * 4);
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(embeddings.len() as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for e in embeddings {
        put_f32s(&mut out, e.values())?;
    }
    Ok(out)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<Vec<AppearanceEmbedding>> {
    let mut c = Cursor::new(bytes, "embedding file");
    c.magic(EMBEDDING_MAGIC)?;
    c.version(FORMAT_VERSION)?;
    let count = c.u32()?;
    let dim = c.u32()?;
    if count > 0 && dim == 0 {
        return Err(Error::Format("embedding dimension is zero".into()));
    }
    let values = c.f32s(checked_count(&[count.into(), dim.into()], "embedding file")?)?;
    c.finish()?;
    if count == 0 {
        return Ok(Vec::new());
    }
    values
        .chunks_exact(dim as usize)
        .map(|v| AppearanceEmbedding::new(v.to_vec()))
        .collect()
}

fn activation_tag(a: Activation) -> u16 {
    match a {
        Activation::Relu => 0,
        Activation::Identity => 1,
    }
}

pub fn encode_weights(w: &ConvHeadWeights) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&activation_tag(w.activation).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    for layer in [&w.layer1, &w.layer2] {
        for d in [layer.out_channels, layer.in_channels, layer.kernel, layer.padding] {
            let d = u32::try_from(d).map_err(|_| Error::Format(format!("layer dimension {d} too large")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        put_f32s(&mut out, &layer.weights)?;
        put_f32s(&mut out, &layer.bias)?;
    }
    Ok(out)
}

pub fn decode_weights(bytes: &[u8]) -> Result<ConvHeadWeights> {
    let mut c = Cursor::new(bytes, "weight file");
    c.magic(WEIGHTS_MAGIC)?;
    c.version(FORMAT_VERSION)?;
    let activation = match c.u16()? {
        0 => Activation::Relu,
        1 => Activation::Identity,
        t => return Err(Error::Format(format!("unknown activation tag {t}"))),
    };
    let layers = c.u16()?;
    if layers != 2 {
        return Err(Error::Format(format!("expected 2 layers, found {layers}")));
    }
    let mut read_layer = || -> Result<ConvLayer> {
        let (out_ch, in_ch, k, pad) = (c.u32()?, c.u32()?, c.u32()?, c.u32()?);
        let weights = c.f32s(checked_count(&[out_ch.into(), in_ch.into(), k.into(), k.into()], "weight file")?)?;
        let bias = c.f32s(out_ch.into())?;
        ConvLayer::new(out_ch as usize, in_ch as usize, k as usize, pad as usize, weights, bias)
    };
    let l1 = read_layer()?;
    let l2 = read_layer()?;
    c.finish()?;
    ConvHeadWeights::new(l1, l2, activation)
}
