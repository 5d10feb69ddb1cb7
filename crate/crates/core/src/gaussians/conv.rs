//! Two-layer convolutional color head.

use rayon::prelude::*;

use super::embedding::AppearanceEmbedding;
use super::sh::sh_degree_for_len;
use crate::error::{Error, Result};
use crate::geom::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }
}

/// One stride-1 convolution with zero padding.
///
/// `weights` are laid out `[out][in][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub padding: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        padding: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 || kernel == 0 {
            return Err(Error::InvalidConfig("convolution dimensions must be positive".into()));
        }
        let expected = out_channels * in_channels * kernel * kernel;
        if weights.len() != expected || bias.len() != out_channels {
            return Err(Error::dims(
                format!("{expected} weights and {out_channels} biases"),
                format!("{} weights and {} biases", weights.len(), bias.len()),
            ));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite convolution parameter".into()));
        }
        Ok(Self {
            out_channels,
            in_channels,
            kernel,
            padding,
            weights,
            bias,
        })
    }

    /// Odd kernel with "same" padding.
    pub fn same(out_channels: usize, in_channels: usize, kernel: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if kernel.is_multiple_of(2) {
            return Err(Error::InvalidConfig("same padding needs an odd kernel".into()));
        }
        Self::new(out_channels, in_channels, kernel, kernel / 2, weights, bias)
    }

    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((o * self.in_channels + i) * self.kernel + ky) * self.kernel + kx]
    }

    fn output_size(&self, width: usize, height: usize) -> Result<(usize, usize)> {
        let (w, h) = (width + 2 * self.padding, height + 2 * self.padding);
        if w < self.kernel || h < self.kernel {
            return Err(Error::dims(format!("input of at least {0}x{0}", self.kernel), format!("{width}x{height}")));
        }
        Ok((w - self.kernel + 1, h - self.kernel + 1))
    }
}

/// Stride-1 cross-correlation of `input` with one layer.
pub fn conv2d_forward(input: &Raster, layer: &ConvLayer) -> Result<Raster> {
    if input.channels() != layer.in_channels {
        return Err(Error::dims(
            format!("{} input channels", layer.in_channels),
            format!("{} channels", input.channels()),
        ));
    }
    let (out_w, out_h) = layer.output_size(input.width(), input.height())?;
    let (in_w, in_h, cin, cout, k) = (input.width(), input.height(), layer.in_channels, layer.out_channels, layer.kernel);
    let pad = layer.padding as isize;
    let data = input.data();
    // Reorder weights to [ky][kx][in][out] so the inner loop is contiguous.
    let mut w = vec![0.0; layer.weights.len()];
    for o in 0..cout {
        for i in 0..cin {
            for ky in 0..k {
                for kx in 0..k {
                    w[((ky * k + kx) * cin + i) * cout + o] = layer.weight(o, i, ky, kx);
                }
            }
        }
    }
    let mut out = vec![0.0; out_w * out_h * cout];
    out.par_chunks_mut(out_w * cout).enumerate().for_each(|(y, row)| {
        for x in 0..out_w {
            let acc = &mut row[x * cout..(x + 1) * cout];
            acc.copy_from_slice(&layer.bias);
            for ky in 0..k {
                let sy = y as isize + ky as isize - pad;
                if sy < 0 || sy >= in_h as isize {
                    continue;
                }
                for kx in 0..k {
                    let sx = x as isize + kx as isize - pad;
                    if sx < 0 || sx >= in_w as isize {
                        continue;
                    }
                    let px = &data[(sy as usize * in_w + sx as usize) * cin..][..cin];
                    let wk = &w[(ky * k + kx) * cin * cout..][..cin * cout];
                    for (i, v) in px.iter().enumerate() {
                        for (a, wv) in acc.iter_mut().zip(&wk[i * cout..(i + 1) * cout]) {
                            *a += v * wv;
                        }
                    }
                }
            }
        }
    });
    Raster::new(out_w, out_h, cout, out)
}

/// Weights of the two-layer head mapping `features ⊕ embedding` to SH coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvHeadWeights {
    pub layer1: ConvLayer,
    pub layer2: ConvLayer,
    pub activation: Activation,
}

impl ConvHeadWeights {
    pub fn new(layer1: ConvLayer, layer2: ConvLayer, activation: Activation) -> Result<Self> {
        if layer2.in_channels != layer1.out_channels {
            return Err(Error::dims(
                format!("layer 2 input of {} channels", layer1.out_channels),
                format!("{} channels", layer2.in_channels),
            ));
        }
        if sh_degree_for_len(layer2.out_channels).is_none() {
            return Err(Error::InvalidConfig(format!(
                "layer 2 emits {} channels, not 3·(deg+1)² for a supported degree",
                layer2.out_channels
            )));
        }
        Ok(Self {
            layer1,
            layer2,
            activation,
        })
    }

    pub fn sh_degree(&self) -> usize {
        sh_degree_for_len(self.layer2.out_channels).expect("validated on construction")
    }

    /// Checks the head against feature and embedding widths.
    pub fn check_inputs(&self, feature_channels: usize, embedding_dim: usize) -> Result<()> {
        if self.layer1.in_channels != feature_channels + embedding_dim {
            return Err(Error::dims(
                format!("{} = d_l + d_g input channels", self.layer1.in_channels),
                format!("{feature_channels} + {embedding_dim}"),
            ));
        }
        Ok(())
    }

    /// Head that passes `d_l` color-like features through a 1x1 layer and maps them to
    /// SH DC terms, ignoring the embedding. `sh_degree` higher bands are zero.
    pub fn identity_color(feature_channels: usize, embedding_dim: usize, sh_degree: usize) -> Result<Self> {
        if feature_channels != 3 {
            return Err(Error::InvalidConfig("identity color head needs 3 feature channels".into()));
        }
        let cin = feature_channels + embedding_dim;
        let mut w1 = vec![0.0; 3 * cin];
        for c in 0..3 {
            w1[c * cin + c] = 1.0;
        }
        let layer1 = ConvLayer::new(3, cin, 1, 0, w1, vec![0.0; 3])?;
        let cout = super::sh::sh_coeff_len(sh_degree);
        let mut w2 = vec![0.0; cout * 3];
        let mut b2 = vec![0.0; cout];
        for c in 0..3 {
            w2[c * 3 + c] = 1.0 / super::sh::SH_C0;
            b2[c] = -0.5 / super::sh::SH_C0;
        }
        let layer2 = ConvLayer::new(cout, 3, 1, 0, w2, b2)?;
        Self::new(layer1, layer2, Activation::Relu)
    }
}

/// `Convs(f ⊕ ê)`: the embedding is broadcast to every pixel and concatenated after
/// the features, then both layers run with the inter-layer activation.
pub fn appearance_head(features: &Raster, embedding: &AppearanceEmbedding, weights: &ConvHeadWeights) -> Result<Raster> {
    weights.check_inputs(features.channels(), embedding.dim())?;
    let broadcast = Raster::new(
        features.width(),
        features.height(),
        embedding.dim(),
        embedding.values().repeat(features.pixel_count()),
    )?;
    let input = features.concat_channels(&broadcast)?;
    let mut hidden = conv2d_forward(&input, &weights.layer1)?;
    let act = weights.activation;
    hidden.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
    conv2d_forward(&hidden, &weights.layer2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_passes_input() {
        let input = Raster::new(3, 2, 2, (0..12).map(|v| v as f64).collect()).unwrap();
        let layer = ConvLayer::new(2, 2, 1, 0, vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 2]).unwrap();
        assert_eq!(conv2d_forward(&input, &layer).unwrap(), input);
    }

    #[test]
    fn zero_kernel_gives_bias() {
        let input = Raster::filled(4, 4, 1, 3.0);
        let layer = ConvLayer::same(2, 1, 3, vec![0.0; 18], vec![0.25, -1.0]).unwrap();
        let out = conv2d_forward(&input, &layer).unwrap();
        assert_eq!((out.width(), out.height()), (4, 4));
        assert!(out.data().chunks(2).all(|p| p == [0.25, -1.0]));
    }

    #[test]
    fn shape_errors() {
        let input = Raster::filled(4, 4, 2, 1.0);
        let layer = ConvLayer::same(1, 3, 3, vec![0.0; 27], vec![0.0]).unwrap();
        assert!(conv2d_forward(&input, &layer).is_err());
        assert!(ConvLayer::new(1, 1, 3, 0, vec![0.0; 8], vec![0.0]).is_err());
        assert!(ConvLayer::same(1, 1, 2, vec![0.0; 4], vec![0.0]).is_err());
        let big = ConvLayer::new(1, 2, 5, 0, vec![0.0; 50], vec![0.0]).unwrap();
        assert!(conv2d_forward(&input, &big).is_err());
    }

    #[test]
    fn head_validation() {
        let l1 = ConvLayer::new(4, 5, 1, 0, vec![0.0; 20], vec![0.0; 4]).unwrap();
        let bad = ConvLayer::new(5, 4, 1, 0, vec![0.0; 20], vec![0.0; 5]).unwrap();
        assert!(ConvHeadWeights::new(l1.clone(), bad, Activation::Relu).is_err());
        let good = ConvLayer::new(12, 4, 1, 0, vec![0.0; 48], vec![0.0; 12]).unwrap();
        let head = ConvHeadWeights::new(l1, good, Activation::Relu).unwrap();
        assert_eq!(head.sh_degree(), 1);
        assert!(head.check_inputs(3, 2).is_ok());
        assert!(head.check_inputs(3, 3).is_err());
    }

    #[test]
    fn identity_color_head_recovers_dc() {
        let head = ConvHeadWeights::identity_color(3, 4, 1).unwrap();
        let f = Raster::new(1, 1, 3, vec![0.2, 0.5, 0.9]).unwrap();
        let e = AppearanceEmbedding::new(vec![1.0, -2.0, 3.0, 4.0]).unwrap();
        let sh = appearance_head(&f, &e, &head).unwrap();
        assert_eq!(sh.channels(), 12);
        let rgb = super::super::sh::sh_to_color(sh.pixel(0), 1, &nalgebra::Vector3::z());
        for (a, b) in rgb.iter().zip([0.2, 0.5, 0.9]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
