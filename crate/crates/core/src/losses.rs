//! Training objective terms: L1, multi-scale SSIM, the edge-weighted L1
//! term and its inverted squared-error counterpart, and their sum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::edge_weight::{diffbir_weight_map, ggea_weight_map, WeightMap};
use crate::error::{invalid, Error, Result};
use crate::structural::{avg_pool2, ssim_and_cs, window, Plane};
use crate::tensor::{ensure_same_shape, ImageTensor, Shape};

/// Standard five-scale MS-SSIM exponents (finest first).
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// Divisor used by the edge-weighted loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GgeaNormalization {
    /// `N·H·W`: channel errors at a pixel are summed and weighted once.
    #[default]
    PerPixel,
    /// `N·C·H·W`: a plain weighted mean over all elements.
    PerElement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub lambda_ssim: f64,
    pub ms_ssim_kernel: usize,
    /// One exponent per scale; the number of scales is the length.
    pub ms_ssim_scale_weights: Vec<f64>,
    /// When false the MS-SSIM term is reported as zero and no size
    /// constraint applies.
    pub ms_ssim_enabled: bool,
    pub ggea_normalization: GgeaNormalization,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_ssim: 1.0,
            ms_ssim_kernel: 7,
            ms_ssim_scale_weights: MS_SSIM_WEIGHTS.to_vec(),
            ms_ssim_enabled: true,
            ggea_normalization: GgeaNormalization::PerPixel,
        }
    }
}

impl LossConfig {
    pub fn levels(&self) -> usize {
        self.ms_ssim_scale_weights.len()
    }

    /// Smallest admissible `min(H, W)`: `(kernel - 1) · 2^(levels - 1) + 1`.
    pub fn ms_ssim_min_size(&self) -> usize {
        (self.ms_ssim_kernel - 1) * self.downsample_factor() + 1
    }

    fn downsample_factor(&self) -> usize {
        1 << (self.levels().max(1) - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_ssim >= 0.0 && self.lambda_ssim.is_finite()) {
            return Err(invalid(format!("lambda_ssim must be >= 0, got {}", self.lambda_ssim)));
        }
        if self.ms_ssim_kernel.is_multiple_of(2) {
            return Err(invalid(format!(
                "MS-SSIM kernel must be odd, got {}",
                self.ms_ssim_kernel
            )));
        }
        let w = &self.ms_ssim_scale_weights;
        if w.is_empty() || w.iter().any(|&v| !(v >= 0.0)) {
            return Err(invalid(
                "MS-SSIM scale weights must be a nonempty list of nonnegative values",
            ));
        }
        // the published five-scale weights sum to 1.0001
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-3 {
            return Err(invalid(format!("MS-SSIM scale weights must sum to 1, got {total}")));
        }
        Ok(())
    }

    fn check_ms_ssim_size(&self, s: Shape) -> Result<()> {
        let got = s.h.min(s.w);
        let min = self.ms_ssim_min_size();
        if got < min {
            return Err(Error::ImageTooSmall {
                kernel: self.ms_ssim_kernel,
                factor: self.downsample_factor(),
                min,
                got,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l1: f64,
    pub ms_ssim_loss: f64,
    pub ggea: f64,
    pub total: f64,
}

/// Mean absolute error over every element.
pub fn l1_loss(pred: &ImageTensor, gt: &ImageTensor) -> Result<f64> {
    ensure_same_shape(pred, gt)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| (p as f64 - g as f64).abs())
        .sum();
    Ok(sum / pred.data().len() as f64)
}

fn check_weight_shape(img: Shape, w: &WeightMap) -> Result<()> {
    let ws = w.shape();
    if (ws.n, ws.h, ws.w) != (img.n, img.h, img.w) {
        return Err(Error::ShapeMismatch(format!(
            "weight map {ws} does not cover image {img}"
        )));
    }
    Ok(())
}

fn denominator(s: Shape, norm: GgeaNormalization) -> f64 {
    match norm {
        GgeaNormalization::PerPixel => (s.n * s.h * s.w) as f64,
        GgeaNormalization::PerElement => s.len() as f64,
    }
}

/// Weighted sum of `f(pred - gt)` with the weight broadcast over channels.
fn weighted_sum(pred: impl Fn(usize) -> f64, gt: &ImageTensor, w: &WeightMap, f: impl Fn(f64) -> f64) -> f64 {
    let s = gt.shape();
    let p = s.plane();
    let wd = w.tensor().data();
    let gd = gt.data();
    let mut acc = 0.0;
    for n in 0..s.n {
        let wplane = &wd[n * p..(n + 1) * p];
        for c in 0..s.c {
            let base = (n * s.c + c) * p;
            for (i, &wv) in wplane.iter().enumerate() {
                acc += wv as f64 * f(pred(base + i) - gd[base + i] as f64);
            }
        }
    }
    acc
}

/// Edge-weighted L1 with the default `N·H·W` divisor.
pub fn ggea_loss(pred: &ImageTensor, gt: &ImageTensor, w: &WeightMap) -> Result<f64> {
    ggea_loss_with(pred, gt, w, GgeaNormalization::PerPixel)
}

pub fn ggea_loss_with(pred: &ImageTensor, gt: &ImageTensor, w: &WeightMap, norm: GgeaNormalization) -> Result<f64> {
    ensure_same_shape(pred, gt)?;
    check_weight_shape(gt.shape(), w)?;
    let pd = pred.data();
    Ok(weighted_sum(|i| pd[i] as f64, gt, w, f64::abs) / denominator(gt.shape(), norm))
}

/// Same loss evaluated on a double-precision prediction buffer laid out like
/// `gt`. Used for finite-difference checks.
pub fn ggea_loss_f64(pred: &[f64], gt: &ImageTensor, w: &WeightMap, norm: GgeaNormalization) -> Result<f64> {
    if pred.len() != gt.data().len() {
        return Err(Error::ShapeMismatch(format!(
            "prediction buffer of {} values vs {}",
            pred.len(),
            gt.shape()
        )));
    }
    check_weight_shape(gt.shape(), w)?;
    Ok(weighted_sum(|i| pred[i], gt, w, f64::abs) / denominator(gt.shape(), norm))
}

/// Analytic (sub)gradient of [`ggea_loss`] with respect to the prediction:
/// `W · sign(pred - gt) / (N·H·W)` with `sign(0) = 0`. The weight map is a
/// constant.
pub fn ggea_grad(pred: &ImageTensor, gt: &ImageTensor, w: &WeightMap) -> Result<ImageTensor> {
    ggea_grad_with(pred, gt, w, GgeaNormalization::PerPixel)
}

pub fn ggea_grad_with(
    pred: &ImageTensor,
    gt: &ImageTensor,
    w: &WeightMap,
    norm: GgeaNormalization,
) -> Result<ImageTensor> {
    ensure_same_shape(pred, gt)?;
    check_weight_shape(gt.shape(), w)?;
    let s = gt.shape();
    let denom = denominator(s, norm);
    let p = s.plane();
    let (pd, gd, wd) = (pred.data(), gt.data(), w.tensor().data());
    let mut out = Vec::with_capacity(s.len());
    for n in 0..s.n {
        for c in 0..s.c {
            let base = (n * s.c + c) * p;
            for i in 0..p {
                let d = pd[base + i] as f64 - gd[base + i] as f64;
                let sign = if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                out.push((wd[n * p + i] as f64 * sign / denom) as f32);
            }
        }
    }
    Ok(ImageTensor::from_raw(s, out))
}

/// Squared error weighted by `1 - tanh(B)` computed from the prediction,
/// normalized by `N·H·W`.
pub fn diffbir_weighted_loss(pred: &ImageTensor, gt: &ImageTensor) -> Result<f64> {
    ensure_same_shape(pred, gt)?;
    let w = diffbir_weight_map(pred)?;
    let pd = pred.data();
    Ok(weighted_sum(|i| pd[i] as f64, gt, &w, |d| d * d) / denominator(gt.shape(), GgeaNormalization::PerPixel))
}

/// Multi-scale SSIM similarity in `[0, 1]`.
///
/// Each scale filters with a Gaussian window (σ = 1.5) without padding;
/// scales are separated by 2× average pooling. Contrast-structure terms
/// are used at every scale except the coarsest, which uses full SSIM.
/// Negative terms are clamped to zero before exponentiation. The result is
/// averaged over batch and channels.
pub fn ms_ssim(pred: &ImageTensor, gt: &ImageTensor, cfg: &LossConfig) -> Result<f64> {
    ensure_same_shape(pred, gt)?;
    cfg.validate()?;
    let s = pred.shape();
    cfg.check_ms_ssim_size(s)?;
    let taps = window(cfg.ms_ssim_kernel);
    let weights = &cfg.ms_ssim_scale_weights;
    let mut total = 0.0;
    for n in 0..s.n {
        for c in 0..s.c {
            let mut x = Plane::from_f32(pred.plane(n, c), s.h, s.w);
            let mut y = Plane::from_f32(gt.plane(n, c), s.h, s.w);
            let mut value = 1.0f64;
            for (level, &wt) in weights.iter().enumerate() {
                let (ssim, cs) = ssim_and_cs(&x, &y, &taps, 1.0);
                let term = if level + 1 == weights.len() { ssim } else { cs };
                value *= term.max(0.0).powf(wt);
                if level + 1 < weights.len() {
                    x = avg_pool2(&x);
                    y = avg_pool2(&y);
                }
            }
            total += value;
        }
    }
    Ok(total / (s.n * s.c) as f64)
}

pub fn ms_ssim_loss(pred: &ImageTensor, gt: &ImageTensor, cfg: &LossConfig) -> Result<f64> {
    Ok(1.0 - ms_ssim(pred, gt, cfg)?)
}

/// `L1 + λ · (1 - MS-SSIM) + GGEA`, with the edge weights taken from `gt`.
pub fn total_loss(pred: &ImageTensor, gt: &ImageTensor, cfg: &LossConfig) -> Result<LossReport> {
    cfg.validate()?;
    ensure_same_shape(pred, gt)?;
    let l1 = l1_loss(pred, gt)?;
    let ms_ssim_loss = if cfg.ms_ssim_enabled {
        ms_ssim_loss(pred, gt, cfg)?
    } else {
        0.0
    };
    let w = ggea_weight_map(gt)?;
    let ggea = ggea_loss_with(pred, gt, &w, cfg.ggea_normalization)?;
    Ok(LossReport {
        l1,
        ms_ssim_loss,
        ggea,
        total: l1 + cfg.lambda_ssim * ms_ssim_loss + ggea,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub size: usize,
    pub seed: u64,
    pub eps: f64,
    pub checked: usize,
    pub skipped: usize,
    pub max_abs_err: f64,
}

/// Compares [`ggea_grad`] against central differences of the loss on a
/// random `1×3×size×size` pair. Elements with `|pred - gt| < 2·eps` sit too
/// close to the kink of `|·|` and are skipped.
pub fn gradcheck_ggea(size: usize, seed: u64, eps: f64) -> Result<GradCheckReport> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid(format!("eps must be positive, got {eps}")));
    }
    if size == 0 {
        return Err(invalid("size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape::new(1, 3, size, size);
    let gt = ImageTensor::from_fn(shape, |_, _, _, _| rng.random::<f32>())?;
    let pred = ImageTensor::from_fn(shape, |_, _, _, _| rng.random::<f32>())?;
    let w = ggea_weight_map(&gt)?;
    let grad = ggea_grad(&pred, &gt, &w)?;
    let norm = GgeaNormalization::PerPixel;

    let mut buf: Vec<f64> = pred.data().iter().map(|&v| v as f64).collect();
    let mut checked = 0;
    let mut skipped = 0;
    let mut max_abs_err = 0.0f64;
    for i in 0..buf.len() {
        if (buf[i] - gt.data()[i] as f64).abs() < 2.0 * eps {
            skipped += 1;
            continue;
        }
        let orig = buf[i];
        buf[i] = orig + eps;
        let up = ggea_loss_f64(&buf, &gt, &w, norm)?;
        buf[i] = orig - eps;
        let down = ggea_loss_f64(&buf, &gt, &w, norm)?;
        buf[i] = orig;
        let fd = (up - down) / (2.0 * eps);
        max_abs_err = max_abs_err.max((fd - grad.data()[i] as f64).abs());
        checked += 1;
    }
    Ok(GradCheckReport {
        size,
        seed,
        eps,
        checked,
        skipped,
        max_abs_err,
    })
}
