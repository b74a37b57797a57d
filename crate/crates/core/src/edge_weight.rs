//! Sobel-driven spatial weight maps.
//!
//! The edge-aware map is built from the ground truth in four steps:
//! luma conversion, Sobel gradient magnitude with replicate borders,
//! summation over aligned 2×2 blocks, and `tanh` of each block sum
//! broadcast back to the block's four pixels. The inverted variant uses the
//! same pipeline on the prediction with `1 - tanh`.
//!
//! Maps are plain values computed from pixels only; no gradient ever flows
//! through them.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::tensor::{conv_plane_replicate, ImageTensor, Kernel2D, Shape};

/// Luma coefficients for R, G, B.
pub const LUMA_COEFFS: [f64; 3] = [0.2989, 0.5870, 0.1140];

/// Largest `f32` strictly below one. `tanh` of large block sums rounds to
/// 1.0 in single precision, so stored edge weights saturate here.
pub const WEIGHT_CEILING: f32 = 1.0 - f32::EPSILON / 2.0;

/// Per-pixel Sobel gradient magnitude, `N×1×H×W`, nonnegative.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMagnitude(ImageTensor);

impl GradientMagnitude {
    pub fn new(t: ImageTensor) -> Result<Self> {
        if t.shape().c != 1 {
            return Err(invalid(format!(
                "gradient magnitude must have one channel, got {}",
                t.shape()
            )));
        }
        if t.data().iter().any(|&v| v < 0.0) {
            return Err(invalid("gradient magnitude must be nonnegative"));
        }
        Ok(GradientMagnitude(t))
    }

    pub fn tensor(&self) -> &ImageTensor {
        &self.0
    }
}

/// Spatial supervision weights, `N×1×H×W`, piecewise constant on aligned
/// 2×2 blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap(ImageTensor);

impl WeightMap {
    /// Wraps an arbitrary single-channel tensor as a weight map. Values are
    /// not checked against the block structure.
    pub fn from_tensor(t: ImageTensor) -> Result<Self> {
        if t.shape().c != 1 {
            return Err(invalid(format!("weight map must have one channel, got {}", t.shape())));
        }
        Ok(WeightMap(t))
    }

    pub fn tensor(&self) -> &ImageTensor {
        &self.0
    }

    pub fn into_tensor(self) -> ImageTensor {
        self.0
    }

    pub fn shape(&self) -> Shape {
        self.0.shape()
    }

    #[inline]
    pub fn at(&self, n: usize, y: usize, x: usize) -> f32 {
        self.0.get(n, 0, y, x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeightVariant {
    /// `tanh(B)` from the ground truth: edges weighted up.
    #[default]
    Ggea,
    /// `1 - tanh(B)` from the prediction: edges weighted down.
    DiffBir,
}

impl std::str::FromStr for WeightVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ggea" => Ok(WeightVariant::Ggea),
            "diffbir" => Ok(WeightVariant::DiffBir),
            other => Err(format!("unknown weight variant {other:?} (expected ggea or diffbir)")),
        }
    }
}

fn luma_f64(img: &ImageTensor) -> Result<Vec<f64>> {
    let s = img.shape();
    if s.c != 3 {
        return Err(invalid(format!("grayscale conversion needs 3 channels, got {s}")));
    }
    let p = s.plane();
    let mut out = Vec::with_capacity(s.n * p);
    for n in 0..s.n {
        let (r, g, b) = (img.plane(n, 0), img.plane(n, 1), img.plane(n, 2));
        for i in 0..p {
            out.push(LUMA_COEFFS[0] * r[i] as f64 + LUMA_COEFFS[1] * g[i] as f64 + LUMA_COEFFS[2] * b[i] as f64);
        }
    }
    Ok(out)
}

/// RGB to single-channel luma, `0.2989 R + 0.5870 G + 0.1140 B`.
pub fn to_grayscale(img: &ImageTensor) -> Result<ImageTensor> {
    let s = img.shape();
    let luma = luma_f64(img)?;
    Ok(ImageTensor::from_raw(
        Shape { c: 1, ..s },
        luma.into_iter().map(|v| v as f32).collect(),
    ))
}

/// `sqrt((g * Gx)^2 + (g * Gy)^2)` with replicate borders.
pub fn sobel_magnitude(gray: &ImageTensor) -> Result<GradientMagnitude> {
    let s = gray.shape();
    if s.c != 1 {
        return Err(invalid(format!("Sobel magnitude needs a single channel, got {s}")));
    }
    let (gx, gy) = (Kernel2D::sobel_x(), Kernel2D::sobel_y());
    let mut out = Vec::with_capacity(s.len());
    for n in 0..s.n {
        let plane = gray.plane(n, 0);
        let rx = conv_plane_replicate(plane, s.h, s.w, &gx);
        let ry = conv_plane_replicate(plane, s.h, s.w, &gy);
        out.extend(rx.iter().zip(&ry).map(|(a, b)| a.hypot(*b) as f32));
    }
    Ok(GradientMagnitude(ImageTensor::from_raw(s, out)))
}

/// Per-pixel value of the 2×2 block sum that pixel belongs to.
///
/// Odd heights or widths are handled by replicating the last row/column
/// once, so the trailing partial block sums its real pixels twice.
fn block_sums(m: &ImageTensor) -> Vec<f64> {
    let s = m.shape();
    let mut out = vec![0.0f64; s.len()];
    let bh = s.h.div_ceil(2);
    let bw = s.w.div_ceil(2);
    for n in 0..s.n {
        let plane = m.plane(n, 0);
        let base = n * s.plane();
        for bi in 0..bh {
            let rows = [2 * bi, (2 * bi + 1).min(s.h - 1)];
            for bj in 0..bw {
                let cols = [2 * bj, (2 * bj + 1).min(s.w - 1)];
                let mut sum = 0.0f64;
                for &y in &rows {
                    for &x in &cols {
                        sum += plane[y * s.w + x] as f64;
                    }
                }
                for y in 2 * bi..(2 * bi + 2).min(s.h) {
                    for x in 2 * bj..(2 * bj + 2).min(s.w) {
                        out[base + y * s.w + x] = sum;
                    }
                }
            }
        }
    }
    out
}

fn edge_weight(block_sum: f64) -> f32 {
    (block_sum.tanh() as f32).min(WEIGHT_CEILING)
}

fn inverted_weight(block_sum: f64) -> f32 {
    // 1 - tanh(b) == 2 / (exp(2b) + 1), which stays positive in f64.
    let v = 2.0 / ((2.0 * block_sum).exp() + 1.0);
    (v as f32).clamp(f32::MIN_POSITIVE, 1.0)
}

/// Sums `M` over aligned 2×2 blocks and applies `tanh`, broadcasting each
/// block value back to full resolution.
pub fn block_aggregate_tanh(m: &GradientMagnitude) -> WeightMap {
    let t = m.tensor();
    let data = block_sums(t).into_iter().map(edge_weight).collect();
    WeightMap(ImageTensor::from_raw(t.shape(), data))
}

fn inverted_block_weights(m: &GradientMagnitude) -> WeightMap {
    let t = m.tensor();
    let data = block_sums(t).into_iter().map(inverted_weight).collect();
    WeightMap(ImageTensor::from_raw(t.shape(), data))
}

/// Edge-emphasizing weight map of a ground-truth image; values in `[0, 1)`.
pub fn ggea_weight_map(gt: &ImageTensor) -> Result<WeightMap> {
    Ok(block_aggregate_tanh(&sobel_magnitude(&to_grayscale(gt)?)?))
}

/// Edge-suppressing weight map `1 - tanh(B)` of a prediction; values in `(0, 1]`.
pub fn diffbir_weight_map(pred: &ImageTensor) -> Result<WeightMap> {
    Ok(inverted_block_weights(&sobel_magnitude(&to_grayscale(pred)?)?))
}

pub fn weight_map(img: &ImageTensor, variant: WeightVariant) -> Result<WeightMap> {
    match variant {
        WeightVariant::Ggea => ggea_weight_map(img),
        WeightVariant::DiffBir => diffbir_weight_map(img),
    }
}
