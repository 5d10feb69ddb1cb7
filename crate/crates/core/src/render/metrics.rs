use crate::error::{Error, Result};
use crate::geom::{ImageBuffer, VisibilityMask};

/// Reported PSNR when the images agree exactly (or better than this).
pub const PSNR_CAP: f64 = 100.0;
/// Weight of the perceptual term in the photometric loss.
pub const LPIPS_WEIGHT: f64 = 0.5;

fn check_pair(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels() {
        return Err(Error::dims(
            format!("{}x{}x{}", a.width(), a.height(), a.channels()),
            format!("{}x{}x{}", b.width(), b.height(), b.channels()),
        ));
    }
    Ok(())
}

/// Mean of squared channel differences over the pixels set in `mask`.
pub fn masked_mse(rendered: &ImageBuffer, target: &ImageBuffer, mask: Option<&VisibilityMask>) -> Result<f64> {
    check_pair(rendered, target)?;
    let c = rendered.channels();
    if let Some(m) = mask {
        m.check_size(rendered.width(), rendered.height())?;
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, (pa, pb)) in rendered
        .data()
        .chunks_exact(c)
        .zip(target.data().chunks_exact(c))
        .enumerate()
    {
        if mask.is_some_and(|m| !m.bits()[i]) {
            continue;
        }
        sum += pa.iter().zip(pb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        n += c;
    }
    if n == 0 {
        return Err(Error::EmptyRegion("mask selects no pixels".into()));
    }
    Ok(sum / n as f64)
}

/// `10·log10(1 / mse)` with peak 1, capped at [`PSNR_CAP`].
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer, mask: Option<&VisibilityMask>) -> Result<f64> {
    let mse = masked_mse(a, b, mask)?;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * mse.log10()).min(PSNR_CAP))
}

/// Externally computed perceptual distance (e.g. LPIPS from a pretrained network).
pub trait PerceptualMetric {
    fn distance(&self, rendered: &ImageBuffer, target: &ImageBuffer, mask: &VisibilityMask) -> Result<f64>;
}

/// `MSE(M⊙I, M⊙Î) + λ·perceptual` with the mean taken over masked pixels.
pub fn photometric_loss(
    rendered: &ImageBuffer,
    target: &ImageBuffer,
    mask: &VisibilityMask,
    perceptual: Option<&dyn PerceptualMetric>,
) -> Result<f64> {
    let mse = masked_mse(rendered, target, Some(mask))?;
    let extra = match perceptual {
        Some(p) => LPIPS_WEIGHT * p.distance(rendered, target, mask)?,
        None => 0.0,
    };
    Ok(mse + extra)
}
