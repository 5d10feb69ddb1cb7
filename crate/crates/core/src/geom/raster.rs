//! Per-pixel containers. All rasters are row-major with interleaved channels.

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

/// Generic multi-channel float raster (features, residuals, head outputs).
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::InvalidRaster("dimension overflow".into()))?;
        if channels == 0 {
            return Err(Error::InvalidRaster("raster needs at least one channel".into()));
        }
        if data.len() != expected {
            return Err(Error::dims(format!("{expected} values"), format!("{} values", data.len())));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidRaster(format!("non-finite value at index {i}")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self::new(width, height, channels, vec![value; width * height * channels])
            .expect("filled raster is well formed")
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, u: usize, v: usize, c: usize) -> f64 {
        self.data[(v * self.width + u) * self.channels + c]
    }

    pub fn set(&mut self, u: usize, v: usize, c: usize, value: f64) {
        self.data[(v * self.width + u) * self.channels + c] = value;
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    /// Copies a contiguous channel range into a new raster.
    pub fn select_channels(&self, start: usize, count: usize) -> Result<Raster> {
        if count == 0 || start + count > self.channels {
            return Err(Error::dims(
                format!("channels {start}..{} within {}", start + count, self.channels),
                "out of range",
            ));
        }
        let mut data = Vec::with_capacity(self.pixel_count() * count);
        for px in self.data.chunks_exact(self.channels) {
            data.extend_from_slice(&px[start..start + count]);
        }
        Raster::new(self.width, self.height, count, data)
    }

    /// Channel-wise concatenation `self ⊕ other`.
    pub fn concat_channels(&self, other: &Raster) -> Result<Raster> {
        self.check_same_size(other.width, other.height)?;
        let channels = self.channels + other.channels;
        let mut data = Vec::with_capacity(self.pixel_count() * channels);
        for (a, b) in self
            .data
            .chunks_exact(self.channels)
            .zip(other.data.chunks_exact(other.channels))
        {
            data.extend_from_slice(a);
            data.extend_from_slice(b);
        }
        Raster::new(self.width, self.height, channels, data)
    }

    pub(crate) fn check_same_size(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::dims(
                format!("{width}x{height}"),
                format!("{}x{}", self.width, self.height),
            ));
        }
        Ok(())
    }
}

/// Image with 1 or 3 channels and values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer(Raster);

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_raster(Raster::new(width, height, channels, data)?)
    }

    pub fn from_raster(raster: Raster) -> Result<Self> {
        if raster.channels != 1 && raster.channels != 3 {
            return Err(Error::InvalidRaster(format!(
                "images have 1 or 3 channels, got {}",
                raster.channels
            )));
        }
        if let Some(v) = raster.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidRaster(format!("image value {v} outside [0, 1]")));
        }
        Ok(Self(raster))
    }

    /// Builds an image, clamping every value into `[0, 1]`.
    pub fn from_clamped(width: usize, height: usize, channels: usize, mut data: Vec<f64>) -> Result<Self> {
        data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Self::new(width, height, channels, data)
    }

    pub fn black(width: usize, height: usize, channels: usize) -> Self {
        Self(Raster::zeros(width, height, channels))
    }

    pub fn raster(&self) -> &Raster {
        &self.0
    }

    pub fn into_raster(self) -> Raster {
        self.0
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn channels(&self) -> usize {
        self.0.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn get(&self, u: usize, v: usize, c: usize) -> f64 {
        self.0.get(u, v, c)
    }
}

/// Per-pixel depth with a validity flag. Valid depths are finite and positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Builds a depth map; pixels with non-finite or non-positive values are invalid.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::dims(width * height, values.len()));
        }
        let valid = values.iter().map(|d| d.is_finite() && *d > 0.0).collect();
        let values = values.into_iter().map(|d| if d.is_finite() && d > 0.0 { d } else { 0.0 }).collect();
        Ok(Self {
            width,
            height,
            values,
            valid,
        })
    }

    pub fn constant(width: usize, height: usize, depth: f64) -> Result<Self> {
        Self::from_values(width, height, vec![depth; width * height])
    }

    pub fn from_raster(raster: &Raster) -> Result<Self> {
        if raster.channels != 1 {
            return Err(Error::dims("1 channel", format!("{} channels", raster.channels)));
        }
        Self::from_values(raster.width, raster.height, raster.data.clone())
    }

    /// Single-channel raster with invalid pixels written as 0.
    pub fn to_raster(&self) -> Raster {
        Raster::new(self.width, self.height, 1, self.values.clone()).expect("depth values are finite")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Depth at a pixel index, or `None` when invalid.
    pub fn at(&self, index: usize) -> Option<f64> {
        self.valid[index].then(|| self.values[index])
    }

    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        self.at(v * self.width + u)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DepthMap {
        let values = self
            .values
            .iter()
            .zip(&self.valid)
            .map(|(d, ok)| if *ok { f(*d) } else { 0.0 })
            .collect();
        DepthMap::from_values(self.width, self.height, values).expect("same size")
    }

    pub(crate) fn check_size(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::dims(
                format!("{width}x{height}"),
                format!("{}x{}", self.width, self.height),
            ));
        }
        Ok(())
    }
}

/// Per-pixel ray origins and unit directions.
#[derive(Debug, Clone, PartialEq)]
pub struct RayMap {
    width: usize,
    height: usize,
    origins: Vec<Point3<f64>>,
    directions: Vec<Vector3<f64>>,
}

pub const RAY_NORM_TOLERANCE: f64 = 1e-6;

impl RayMap {
    pub fn new(
        width: usize,
        height: usize,
        origins: Vec<Point3<f64>>,
        directions: Vec<Vector3<f64>>,
    ) -> Result<Self> {
        let n = width * height;
        if origins.len() != n || directions.len() != n {
            return Err(Error::dims(n, format!("{} origins / {} directions", origins.len(), directions.len())));
        }
        if let Some(i) = directions
            .iter()
            .position(|d| !((d.norm() - 1.0).abs() <= RAY_NORM_TOLERANCE))
        {
            return Err(Error::InvalidRaster(format!("ray direction {i} is not unit length")));
        }
        if origins.iter().any(|o| !o.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidRaster("ray origin is not finite".into()));
        }
        Ok(Self {
            width,
            height,
            origins,
            directions,
        })
    }

    /// Six-channel raster: origin xyz then direction xyz.
    pub fn from_raster(raster: &Raster) -> Result<Self> {
        if raster.channels() != 6 {
            return Err(Error::dims("6 channels", format!("{} channels", raster.channels())));
        }
        let (origins, directions) = raster
            .data()
            .chunks_exact(6)
            .map(|p| (Point3::new(p[0], p[1], p[2]), Vector3::new(p[3], p[4], p[5])))
            .unzip();
        Self::new(raster.width(), raster.height(), origins, directions)
    }

    pub fn to_raster(&self) -> Raster {
        let mut data = Vec::with_capacity(self.origins.len() * 6);
        for (o, d) in self.origins.iter().zip(&self.directions) {
            data.extend_from_slice(&[o.x, o.y, o.z, d.x, d.y, d.z]);
        }
        Raster::new(self.width, self.height, 6, data).expect("ray map is finite")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn origins(&self) -> &[Point3<f64>] {
        &self.origins
    }

    pub fn directions(&self) -> &[Vector3<f64>] {
        &self.directions
    }
}

/// Coordinate frame of a [`PointMap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    World,
    Camera(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointMap {
    width: usize,
    height: usize,
    frame: Frame,
    points: Vec<Point3<f64>>,
    valid: Vec<bool>,
}

impl PointMap {
    pub fn new(
        width: usize,
        height: usize,
        frame: Frame,
        points: Vec<Point3<f64>>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let n = width * height;
        if points.len() != n || valid.len() != n {
            return Err(Error::dims(n, format!("{} points / {} flags", points.len(), valid.len())));
        }
        Ok(Self {
            width,
            height,
            frame,
            points,
            valid,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn at(&self, index: usize) -> Option<&Point3<f64>> {
        self.valid[index].then(|| &self.points[index])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Binary per-pixel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl VisibilityMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::dims(width * height, bits.len()));
        }
        Ok(Self { width, height, bits })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    /// Reads a 1-channel raster; values ≥ 0.5 are set.
    pub fn from_raster(raster: &Raster) -> Result<Self> {
        if raster.channels() != 1 {
            return Err(Error::dims("1 channel", format!("{} channels", raster.channels())));
        }
        let bits = raster.data().iter().map(|v| *v >= 0.5).collect();
        Self::new(raster.width(), raster.height(), bits)
    }

    pub fn to_raster(&self) -> Raster {
        let data = self.bits.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect();
        Raster::new(self.width, self.height, 1, data).expect("mask raster")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.bits[v * self.width + u]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn union(&self, other: &VisibilityMask) -> Result<VisibilityMask> {
        self.check_size(other.width, other.height)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect();
        VisibilityMask::new(self.width, self.height, bits)
    }

    pub(crate) fn check_size(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::dims(
                format!("{width}x{height}"),
                format!("{}x{}", self.width, self.height),
            ));
        }
        Ok(())
    }
}
