//! Browser bindings for the demo page in `www/`.
//!
//! Each exported function has a plain Rust twin returning `Result<_, String>`
//! so the logic is testable without a JS host.

use ggea_core::edge_weight::{weight_map, WeightVariant};
use ggea_core::metrics::psnr;
use ggea_core::pipeline::average_frames;
use ggea_core::train::{lr_at, ScheduleConfig};
use ggea_core::{ImageTensor, Shape};
use wasm_bindgen::prelude::*;

fn rgba_to_tensor(rgba: &[u8], width: usize, height: usize) -> Result<ImageTensor, String> {
    if rgba.len() != width * height * 4 {
        return Err(format!(
            "expected {} RGBA bytes for {width}x{height}, got {}",
            width * height * 4,
            rgba.len()
        ));
    }
    let shape = Shape {
        n: 1,
        c: 3,
        h: height,
        w: width,
    };
    ImageTensor::from_fn(shape, |_, c, y, x| rgba[(y * width + x) * 4 + c] as f32 / 255.0).map_err(|e| e.to_string())
}

fn tensor_to_rgba(t: &ImageTensor) -> Vec<u8> {
    let s = t.shape();
    let mut out = Vec::with_capacity(s.h * s.w * 4);
    for y in 0..s.h {
        for x in 0..s.w {
            for c in 0..3 {
                let v = t.get(0, c.min(s.c - 1), y, x);
                out.push((v.clamp(0.0, 1.0) * 255.0 + 0.5) as u8);
            }
            out.push(255);
        }
    }
    out
}

/// Weight map of an RGBA image rendered as grayscale RGBA.
pub fn weight_map_rgba_impl(rgba: &[u8], width: usize, height: usize, variant: &str) -> Result<Vec<u8>, String> {
    let variant: WeightVariant = variant.parse()?;
    let img = rgba_to_tensor(rgba, width, height)?;
    let map = weight_map(&img, variant).map_err(|e| e.to_string())?;
    Ok(tensor_to_rgba(map.tensor()))
}

/// Learning rate at every step of a schedule, as `f32` for plotting.
pub fn lr_curve_impl(
    lr_init: f64,
    lr_min: f64,
    warmup_epochs: f64,
    total_epochs: usize,
    steps_per_epoch: usize,
) -> Result<Vec<f32>, String> {
    let cfg = ScheduleConfig {
        lr_init,
        lr_min,
        warmup_epochs,
        total_epochs,
        steps_per_epoch,
        ..ScheduleConfig::default()
    };
    cfg.validate().map_err(|e| e.to_string())?;
    (0..=cfg.total_steps())
        .map(|s| lr_at(s, &cfg).map(|v| v as f32).map_err(|e| e.to_string()))
        .collect()
}

/// Noisy copies and their mean, plus PSNR of one copy and of the mean.
pub struct AverageDemo {
    pub noisy: Vec<u8>,
    pub averaged: Vec<u8>,
    pub psnr_single: f64,
    pub psnr_averaged: f64,
}

// xorshift is enough for display noise and keeps rand out of the demo
struct XorShift(u64);

impl XorShift {
    fn next_f64(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    fn gaussian(&mut self) -> f64 {
        let u1 = self.next_f64().max(f64::MIN_POSITIVE);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

pub fn average_demo_impl(
    rgba: &[u8],
    width: usize,
    height: usize,
    frames: usize,
    sigma: f64,
    seed: u64,
) -> Result<AverageDemo, String> {
    if frames == 0 {
        return Err("frames must be positive".into());
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(format!("sigma must be a non-negative number, got {sigma}"));
    }
    let clean = rgba_to_tensor(rgba, width, height)?;
    let mut rng = XorShift(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1);
    let noisy: Vec<ImageTensor> = (0..frames)
        .map(|_| {
            let data = clean
                .data()
                .iter()
                .map(|&v| v + (sigma * rng.gaussian()) as f32)
                .collect();
            ImageTensor::new(clean.shape(), data)
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mean = average_frames(&noisy).map_err(|e| e.to_string())?;
    let psnr_single = psnr(&noisy[0], &clean, 1.0).map_err(|e| e.to_string())?;
    let psnr_averaged = psnr(&mean, &clean, 1.0).map_err(|e| e.to_string())?;
    Ok(AverageDemo {
        noisy: tensor_to_rgba(&noisy[0]),
        averaged: tensor_to_rgba(&mean),
        psnr_single,
        psnr_averaged,
    })
}

#[wasm_bindgen]
pub fn weight_map_rgba(rgba: &[u8], width: usize, height: usize, variant: &str) -> Result<Vec<u8>, JsError> {
    weight_map_rgba_impl(rgba, width, height, variant).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn lr_curve(
    lr_init: f64,
    lr_min: f64,
    warmup_epochs: f64,
    total_epochs: usize,
    steps_per_epoch: usize,
) -> Result<Vec<f32>, JsError> {
    lr_curve_impl(lr_init, lr_min, warmup_epochs, total_epochs, steps_per_epoch).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(getter_with_clone)]
pub struct AverageResult {
    pub noisy: Vec<u8>,
    pub averaged: Vec<u8>,
    pub psnr_single: f64,
    pub psnr_averaged: f64,
}

#[wasm_bindgen]
pub fn average_demo(
    rgba: &[u8],
    width: usize,
    height: usize,
    frames: usize,
    sigma: f64,
    seed: u64,
) -> Result<AverageResult, JsError> {
    let d = average_demo_impl(rgba, width, height, frames, sigma, seed).map_err(|e| JsError::new(&e))?;
    Ok(AverageResult {
        noisy: d.noisy,
        averaged: d.averaged,
        psnr_single: d.psnr_single,
        psnr_averaged: d.psnr_averaged,
    })
}
