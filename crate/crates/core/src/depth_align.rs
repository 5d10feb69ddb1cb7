//! Scale-and-shift alignment of relative depth to sparse metric depth.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::DepthMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleShift {
    pub scale: f64,
    pub shift: f64,
}

impl ScaleShift {
    pub const IDENTITY: ScaleShift = ScaleShift { scale: 1.0, shift: 0.0 };

    pub fn new(scale: f64, shift: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) || !shift.is_finite() {
            return Err(Error::NonPositiveScale(scale));
        }
        Ok(Self { scale, shift })
    }

    pub fn apply(&self, d: f64) -> f64 {
        self.scale * d + self.shift
    }

    /// Map undoing `self`: `(1/a, −b/a)`.
    pub fn inverse(&self) -> ScaleShift {
        ScaleShift {
            scale: 1.0 / self.scale,
            shift: -self.shift / self.scale,
        }
    }
}

/// A sparse metric depth sample at an integer pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthSample {
    pub u: usize,
    pub v: usize,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseDepth {
    samples: Vec<DepthSample>,
}

impl SparseDepth {
    pub fn new(samples: Vec<DepthSample>) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| !(s.depth > 0.0 && s.depth.is_finite())) {
            return Err(Error::NonPositiveDepth(s.depth));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[DepthSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn check_bounds(&self, width: usize, height: usize) -> Result<()> {
        match self.samples.iter().find(|s| s.u >= width || s.v >= height) {
            Some(s) => Err(Error::dims(format!("pixel within {width}x{height}"), format!("({}, {})", s.u, s.v))),
            None => Ok(()),
        }
    }
}

/// Least-squares `(scale, shift)` minimizing `Σ (scale·pred + shift − reference)²`.
pub fn fit_scale_shift(pred: &[f64], reference: &[f64]) -> Result<ScaleShift> {
    if pred.len() != reference.len() {
        return Err(Error::dims(pred.len(), reference.len()));
    }
    if pred.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            have: pred.len(),
        });
    }
    // Centered normal equations; identical to the raw 2x2 system.
    let n = pred.len() as f64;
    let mean_p = pred.iter().sum::<f64>() / n;
    let mean_r = reference.iter().sum::<f64>() / n;
    let (mut spp, mut spr) = (0.0, 0.0);
    for (p, r) in pred.iter().zip(reference) {
        let dp = p - mean_p;
        spp += dp * dp;
        spr += dp * (r - mean_r);
    }
    if spp <= f64::EPSILON * f64::EPSILON * n * (1.0 + mean_p * mean_p) {
        return Err(Error::RankDeficient("all predicted values are identical".into()));
    }
    let scale = spr / spp;
    ScaleShift::new(scale, mean_r - scale * mean_p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Inlier bound on `|log(scale·pred + shift) − log(ref)|`.
    pub inlier_log_threshold: f64,
    /// `None` selects `max(10, ⌈0.2·n⌉)`, capped at the sample count.
    pub min_inliers: Option<usize>,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            inlier_log_threshold: 0.05,
            min_inliers: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacFit {
    pub model: ScaleShift,
    /// One flag per input sample; samples without a valid prediction are never inliers.
    pub inliers: Vec<bool>,
    pub inlier_count: usize,
}

#[derive(Debug, Clone, Copy)]
struct Score {
    count: usize,
    residual: f64,
}

impl Score {
    fn better_than(&self, other: &Score) -> bool {
        self.count > other.count || (self.count == other.count && self.residual < other.residual)
    }
}

struct Pairs<'a> {
    pred: &'a [f64],
    log_ref: &'a [f64],
    threshold: f64,
}

impl Pairs<'_> {
    fn score(&self, model: &ScaleShift) -> Score {
        let mut score = Score { count: 0, residual: 0.0 };
        for (p, lr) in self.pred.iter().zip(self.log_ref) {
            if let Some(r) = self.residual(model, *p, *lr) {
                score.count += 1;
                score.residual += r;
            }
        }
        score
    }

    fn residual(&self, model: &ScaleShift, pred: f64, log_ref: f64) -> Option<f64> {
        let fitted = model.apply(pred);
        if fitted <= 0.0 {
            return None;
        }
        let r = (fitted.ln() - log_ref).abs();
        (r < self.threshold).then_some(r)
    }

    fn flags(&self, model: &ScaleShift) -> Vec<bool> {
        self.pred
            .iter()
            .zip(self.log_ref)
            .map(|(p, lr)| self.residual(model, *p, *lr).is_some())
            .collect()
    }
}

/// Robust scale/shift from two-sample hypotheses scored in log-depth, refined on inliers.
///
/// Hypotheses are drawn sequentially from a seeded RNG and scored in parallel; the
/// best is chosen by inlier count, then by lower inlier residual sum, then by draw order,
/// so the result does not depend on the thread count.
pub fn ransac_scale_shift(pred_depth: &DepthMap, sparse: &SparseDepth, cfg: &RansacConfig) -> Result<RansacFit> {
    sparse.check_bounds(pred_depth.width(), pred_depth.height())?;
    if !(cfg.inlier_log_threshold > 0.0) {
        return Err(Error::InvalidConfig("inlier threshold must be positive".into()));
    }
    // Indices into `sparse` of samples with a usable prediction.
    let usable: Vec<usize> = sparse
        .samples()
        .iter()
        .enumerate()
        .filter(|(_, s)| pred_depth.get(s.u, s.v).is_some())
        .map(|(i, _)| i)
        .collect();
    if usable.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            have: usable.len(),
        });
    }
    let pred: Vec<f64> = usable
        .iter()
        .map(|&i| {
            let s = sparse.samples()[i];
            pred_depth.get(s.u, s.v).expect("filtered")
        })
        .collect();
    let reference: Vec<f64> = usable.iter().map(|&i| sparse.samples()[i].depth).collect();
    let log_ref: Vec<f64> = reference.iter().map(|d| d.ln()).collect();
    let n = pred.len();
    let min_inliers = cfg
        .min_inliers
        .unwrap_or_else(|| 10usize.max((0.2 * n as f64).ceil() as usize).min(n));
    let pairs = Pairs {
        pred: &pred,
        log_ref: &log_ref,
        threshold: cfg.inlier_log_threshold,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draws: Vec<(usize, usize)> = (0..cfg.iterations)
        .map(|_| {
            let idx = sample(&mut rng, n, 2);
            (idx.index(0), idx.index(1))
        })
        .collect();

    let best = draws
        .par_iter()
        .enumerate()
        .filter_map(|(k, &(i, j))| {
            let model = fit_scale_shift(&[pred[i], pred[j]], &[reference[i], reference[j]]).ok()?;
            Some((k, model, pairs.score(&model)))
        })
        .reduce_with(|a, b| {
            if b.2.better_than(&a.2) || (!a.2.better_than(&b.2) && b.0 < a.0) {
                b
            } else {
                a
            }
        });

    let Some((_, hypothesis, hyp_score)) = best else {
        return Err(Error::NoModelFound { min_inliers, best: 0 });
    };
    if hyp_score.count < min_inliers {
        return Err(Error::NoModelFound {
            min_inliers,
            best: hyp_score.count,
        });
    }

    // Refit on inliers until the inlier set stops growing; never return a model
    // with fewer inliers than the best hypothesis.
    let (mut model, mut score) = (hypothesis, hyp_score);
    let mut flags = pairs.flags(&model);
    for _ in 0..10 {
        let (p, r): (Vec<f64>, Vec<f64>) = flags
            .iter()
            .zip(pred.iter().zip(&reference))
            .filter(|(f, _)| **f)
            .map(|(_, (p, r))| (*p, *r))
            .unzip();
        let Ok(refit) = fit_scale_shift(&p, &r) else { break };
        let refit_score = pairs.score(&refit);
        if refit_score.count < score.count {
            break;
        }
        let new_flags = pairs.flags(&refit);
        let converged = new_flags == flags;
        model = refit;
        score = refit_score;
        flags = new_flags;
        if converged {
            break;
        }
    }

    let mut inliers = vec![false; sparse.len()];
    for (k, &i) in usable.iter().enumerate() {
        inliers[i] = flags[k];
    }
    Ok(RansacFit {
        model,
        inliers,
        inlier_count: score.count,
    })
}

/// `scale·D + shift` per valid pixel; results ≤ 0 become invalid.
pub fn apply_scale_shift(pred_depth: &DepthMap, ss: &ScaleShift) -> DepthMap {
    pred_depth.map(|d| ss.apply(d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_two_point_fit() {
        let m = fit_scale_shift(&[1.0, 2.0], &[3.0, 5.0]).unwrap();
        assert!((m.scale - 2.0).abs() < 1e-15 && (m.shift - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(fit_scale_shift(&[1.0, 1.0], &[2.0, 3.0]), Err(Error::RankDeficient(_))));
        assert!(matches!(fit_scale_shift(&[1.0], &[2.0]), Err(Error::TooFewSamples { .. })));
        assert!(matches!(fit_scale_shift(&[1.0, 2.0], &[2.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(fit_scale_shift(&[1.0, 2.0], &[3.0, 1.0]), Err(Error::NonPositiveScale(_))));
    }

    #[test]
    fn apply_identity_and_affine() {
        let d = DepthMap::from_values(2, 1, vec![1.0, 3.0]).unwrap();
        assert_eq!(apply_scale_shift(&d, &ScaleShift::IDENTITY), d);
        let c = DepthMap::constant(3, 3, 1.0).unwrap();
        let out = apply_scale_shift(&c, &ScaleShift::new(2.0, -1.0).unwrap());
        assert!(out.values().iter().all(|v| *v == 1.0));
        let out = apply_scale_shift(&d, &ScaleShift::new(1.0, -2.0).unwrap());
        assert_eq!(out.valid(), &[false, true]);
    }

    #[test]
    fn sparse_rejects_bad_depth() {
        assert!(SparseDepth::new(vec![DepthSample { u: 0, v: 0, depth: 0.0 }]).is_err());
    }

    #[test]
    fn ransac_needs_two_usable_samples() {
        let d = DepthMap::from_values(2, 1, vec![1.0, 0.0]).unwrap();
        let s = SparseDepth::new(vec![
            DepthSample { u: 0, v: 0, depth: 1.0 },
            DepthSample { u: 1, v: 0, depth: 1.0 },
        ])
        .unwrap();
        assert!(matches!(
            ransac_scale_shift(&d, &s, &RansacConfig::default()),
            Err(Error::TooFewSamples { .. })
        ));
        let out_of_bounds = SparseDepth::new(vec![DepthSample { u: 5, v: 0, depth: 1.0 }]).unwrap();
        assert!(ransac_scale_shift(&d, &out_of_bounds, &RansacConfig::default()).is_err());
    }
}
