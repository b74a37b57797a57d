//! Training-side utilities: learning-rate schedule, scene-diverse batch
//! sampling, paired augmentations and MixUp. No optimizer lives here.
//!
//! Every randomized routine takes its generator (or seed) explicitly, so
//! results are a pure function of the inputs.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tensor::{crop, ensure_same_shape, reflect_index, ImageTensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub lr_init: f64,
    pub lr_min: f64,
    pub warmup_epochs: f64,
    pub total_epochs: usize,
    pub steps_per_epoch: usize,
    /// Learning rate at step 0 of the warmup ramp.
    pub warmup_start_lr: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            lr_init: 3e-4,
            lr_min: 1e-6,
            warmup_epochs: 1.0,
            total_epochs: 40,
            steps_per_epoch: 1000,
            warmup_start_lr: 0.0,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_min > 0.0 && self.lr_init > self.lr_min) {
            return Err(invalid(format!(
                "need lr_init > lr_min > 0, got {} and {}",
                self.lr_init, self.lr_min
            )));
        }
        if !(self.warmup_epochs >= 0.0 && self.warmup_epochs < self.total_epochs as f64) {
            return Err(invalid(format!(
                "need 0 <= warmup_epochs < total_epochs, got {} and {}",
                self.warmup_epochs, self.total_epochs
            )));
        }
        if self.steps_per_epoch == 0 {
            return Err(invalid("steps_per_epoch must be positive"));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.total_epochs * self.steps_per_epoch
    }

    pub fn warmup_steps(&self) -> usize {
        (self.warmup_epochs * self.steps_per_epoch as f64).round() as usize
    }
}

/// Linear warmup to `lr_init`, then cosine annealing down to `lr_min` at
/// the final step.
pub fn lr_at(step: usize, cfg: &ScheduleConfig) -> Result<f64> {
    cfg.validate()?;
    let total = cfg.total_steps();
    if step > total {
        return Err(invalid(format!("step {step} beyond the last step {total}")));
    }
    let warmup = cfg.warmup_steps();
    if warmup > 0 && step < warmup {
        let t = step as f64 / warmup as f64;
        return Ok(cfg.warmup_start_lr + (cfg.lr_init - cfg.warmup_start_lr) * t);
    }
    if step == warmup {
        return Ok(cfg.lr_init);
    }
    let progress = (step - warmup) as f64 / (total - warmup) as f64;
    Ok(cfg.lr_min + 0.5 * (cfg.lr_init - cfg.lr_min) * (1.0 + (PI * progress).cos()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MixupMode {
    /// One coin flip and one λ for the whole batch.
    #[default]
    PerBatch,
    /// Independent coin flip and λ for every sample.
    PerSample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub crop: usize,
    pub rotation_sigma_deg: f64,
    pub flip_h: f64,
    pub flip_v: f64,
    pub mixup_prob: f64,
    pub mixup_alpha: f64,
    pub mixup_mode: MixupMode,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            crop: 128,
            rotation_sigma_deg: 13.0,
            flip_h: 0.5,
            flip_v: 0.5,
            mixup_prob: 0.5,
            mixup_alpha: 1.0,
            mixup_mode: MixupMode::PerBatch,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("flip_h", self.flip_h),
            ("flip_v", self.flip_v),
            ("mixup_prob", self.mixup_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("{name} must be a probability, got {p}")));
            }
        }
        if !(self.rotation_sigma_deg >= 0.0) {
            return Err(invalid("rotation_sigma_deg must be >= 0"));
        }
        if !(self.mixup_alpha > 0.0) {
            return Err(invalid("mixup_alpha must be positive"));
        }
        if self.crop == 0 {
            return Err(invalid("crop must be positive"));
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Optimizer settings kept for reference; nothing in this crate consumes
/// them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerNotes {
    pub name: String,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub grad_accum_steps: usize,
}

impl Default for OptimizerNotes {
    fn default() -> Self {
        OptimizerNotes {
            name: "adamw".into(),
            weight_decay: 1e-4,
            batch_size: 18,
            grad_accum_steps: 4,
        }
    }
}

/// Everything a training run would read from its config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct TrainConfig {
    pub schedule: ScheduleConfig,
    pub augment: AugmentConfig,
    pub optimizer: OptimizerNotes,
    pub loss: crate::losses::LossConfig,
}

impl TrainConfig {
    /// Large-scale pretraining: 200 epochs.
    pub fn pretrain() -> Self {
        let mut cfg = TrainConfig::default();
        cfg.schedule.total_epochs = 200;
        cfg
    }

    /// Fine-tuning: 40 epochs.
    pub fn finetune() -> Self {
        TrainConfig::default()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.schedule.validate()?;
        cfg.augment.validate()?;
        cfg.loss.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn effective_batch_size(&self) -> usize {
        self.optimizer.batch_size * self.optimizer.grad_accum_steps
    }
}

/// One element of a training batch: a scene and one of its frames.
pub type FrameRef = (String, usize);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub items: Vec<FrameRef>,
    /// Set when the batch holds two frames of the same scene, which
    /// happens only when fewer scenes with unused frames remain than the
    /// batch has slots.
    pub has_duplicates: bool,
}

/// Batch sampler that spreads each batch over as many scenes as possible.
///
/// Each epoch draws every frame exactly once. A batch is filled from the
/// scenes with the most unused frames (ties broken randomly), one frame per
/// scene; only when fewer such scenes remain than slots does it take a
/// second round over them, which keeps the per-scene count in that batch
/// as even as possible.
#[derive(Clone, Debug)]
pub struct SceneDiverseSampler {
    scenes: Vec<(String, usize)>,
    batch_size: usize,
    seed: u64,
}

impl SceneDiverseSampler {
    /// `scenes` lists `(scene_id, frame_count)`.
    pub fn new(scenes: Vec<(String, usize)>, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(invalid("batch size must be at least 1"));
        }
        Ok(SceneDiverseSampler {
            scenes,
            batch_size,
            seed,
        })
    }

    pub fn from_records(scenes: &[crate::dataset::SceneRecord], batch_size: usize, seed: u64) -> Result<Self> {
        Self::new(
            scenes.iter().map(|s| (s.scene_id.clone(), s.frame_count())).collect(),
            batch_size,
            seed,
        )
    }

    pub fn total_frames(&self) -> usize {
        self.scenes.iter().map(|(_, k)| k).sum()
    }

    /// Batches of epoch `epoch`.
    pub fn epoch(&self, epoch: u64) -> Vec<Batch> {
        self.epoch_iter(epoch).collect()
    }

    pub fn epoch_iter(&self, epoch: u64) -> EpochIter {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let pools = self
            .scenes
            .iter()
            .map(|(id, k)| {
                let mut frames: Vec<usize> = (0..*k).collect();
                frames.shuffle(&mut rng);
                (id.clone(), frames)
            })
            .collect();
        EpochIter {
            pools,
            batch_size: self.batch_size,
            rng,
        }
    }
}

pub struct EpochIter {
    pools: Vec<(String, Vec<usize>)>,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl Iterator for EpochIter {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        let remaining: usize = self.pools.iter().map(|(_, f)| f.len()).sum();
        if remaining == 0 {
            return None;
        }
        let slots = self.batch_size.min(remaining);
        // active scenes by remaining frames, descending, random tie-break
        let mut order: Vec<(usize, u64)> = self
            .pools
            .iter()
            .enumerate()
            .filter(|(_, (_, f))| !f.is_empty())
            .map(|(i, _)| (i, self.rng.random::<u64>()))
            .collect();
        order.sort_by(|a, b| {
            self.pools[b.0]
                .1
                .len()
                .cmp(&self.pools[a.0].1.len())
                .then(a.1.cmp(&b.1))
        });
        let distinct = order.len() >= slots;
        let mut items = Vec::with_capacity(slots);
        while items.len() < slots {
            for &(i, _) in &order {
                if items.len() == slots {
                    break;
                }
                let (id, frames) = &mut self.pools[i];
                if let Some(f) = frames.pop() {
                    items.push((id.clone(), f));
                }
            }
        }
        items.shuffle(&mut self.rng);
        Some(Batch {
            items,
            has_duplicates: !distinct,
        })
    }
}

/// Geometric decisions shared by an input/target pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub top: usize,
    pub left: usize,
    pub flip_h: bool,
    pub flip_v: bool,
    pub angle_deg: f64,
}

impl AugmentParams {
    pub fn sample(h: usize, w: usize, cfg: &AugmentConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        if cfg.crop > h || cfg.crop > w {
            return Err(invalid(format!("crop {} larger than image {h}x{w}", cfg.crop)));
        }
        let top = rng.random_range(0..=h - cfg.crop);
        let left = rng.random_range(0..=w - cfg.crop);
        let flip_h = rng.random_bool(cfg.flip_h);
        let flip_v = rng.random_bool(cfg.flip_v);
        let angle_deg = if cfg.rotation_sigma_deg > 0.0 {
            Normal::new(0.0, cfg.rotation_sigma_deg)
                .map_err(|e| invalid(e.to_string()))?
                .sample(rng)
        } else {
            0.0
        };
        Ok(AugmentParams {
            top,
            left,
            flip_h,
            flip_v,
            angle_deg,
        })
    }
}

pub fn flip_horizontal(img: &ImageTensor) -> ImageTensor {
    let w = img.shape().w;
    let data = remap(img, |y, x| (y, w - 1 - x));
    ImageTensor::from_raw(img.shape(), data)
}

pub fn flip_vertical(img: &ImageTensor) -> ImageTensor {
    let h = img.shape().h;
    let data = remap(img, |y, x| (h - 1 - y, x));
    ImageTensor::from_raw(img.shape(), data)
}

fn remap(img: &ImageTensor, src: impl Fn(usize, usize) -> (usize, usize)) -> Vec<f32> {
    let s = img.shape();
    let mut out = Vec::with_capacity(s.len());
    for n in 0..s.n {
        for c in 0..s.c {
            let plane = img.plane(n, c);
            for y in 0..s.h {
                for x in 0..s.w {
                    let (sy, sx) = src(y, x);
                    out.push(plane[sy * s.w + sx]);
                }
            }
        }
    }
    out
}

/// Rotates every plane by `angle_deg` (counter-clockwise) about its centre
/// with bilinear sampling; samples falling outside are mirrored back in.
pub fn rotate(img: &ImageTensor, angle_deg: f64) -> ImageTensor {
    let s = img.shape();
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let cy = (s.h as f64 - 1.0) / 2.0;
    let cx = (s.w as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(s.len());
    for n in 0..s.n {
        for c in 0..s.c {
            let plane = img.plane(n, c);
            for y in 0..s.h {
                for x in 0..s.w {
                    let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                    // inverse mapping: output pixel -> source position
                    let sx = cx + cos * dx - sin * dy;
                    let sy = cy + sin * dx + cos * dy;
                    out.push(bilinear_reflect(plane, s.h, s.w, sy, sx));
                }
            }
        }
    }
    ImageTensor::from_raw(s, out)
}

fn bilinear_reflect(plane: &[f32], h: usize, w: usize, y: f64, x: f64) -> f32 {
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let at = |yy: f64, xx: f64| {
        let ry = reflect_index(yy as isize, h);
        let rx = reflect_index(xx as isize, w);
        plane[ry * w + rx] as f64
    };
    let top = at(y0, x0) * (1.0 - fx) + if fx > 0.0 { at(y0, x0 + 1.0) * fx } else { 0.0 };
    if fy == 0.0 {
        return top as f32;
    }
    let bottom = at(y0 + 1.0, x0) * (1.0 - fx) + if fx > 0.0 { at(y0 + 1.0, x0 + 1.0) * fx } else { 0.0 };
    (top * (1.0 - fy) + bottom * fy) as f32
}

/// Applies one set of decisions to an image: crop, flips, then rotation.
pub fn apply_augment(img: &ImageTensor, params: &AugmentParams, crop_size: usize) -> Result<ImageTensor> {
    let mut out = crop(img, params.top, params.left, crop_size, crop_size)?;
    if params.flip_h {
        out = flip_horizontal(&out);
    }
    if params.flip_v {
        out = flip_vertical(&out);
    }
    if params.angle_deg != 0.0 {
        out = rotate(&out, params.angle_deg);
    }
    Ok(out)
}

/// Samples one crop window, flip pair and rotation angle and applies them
/// identically to `lq` and `gt`.
pub fn augment_pair(
    lq: &ImageTensor,
    gt: &ImageTensor,
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<(ImageTensor, ImageTensor, AugmentParams)> {
    ensure_same_shape(lq, gt)?;
    let s = lq.shape();
    let params = AugmentParams::sample(s.h, s.w, cfg, rng)?;
    Ok((
        apply_augment(lq, &params, cfg.crop)?,
        apply_augment(gt, &params, cfg.crop)?,
        params,
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixupResult {
    pub lq: ImageTensor,
    pub gt: ImageTensor,
    /// Mixing coefficient per sample; 1.0 means untouched.
    pub lambdas: Vec<f64>,
    pub permutation: Vec<usize>,
}

/// `λ_i · x_i + (1 - λ_i) · x_perm(i)` applied to both batches with the
/// same coefficients and permutation.
pub fn mixup_with(
    batch_lq: &ImageTensor,
    batch_gt: &ImageTensor,
    lambdas: &[f64],
    permutation: &[usize],
) -> Result<MixupResult> {
    ensure_same_shape(batch_lq, batch_gt)?;
    let s = batch_lq.shape();
    if lambdas.len() != s.n || permutation.len() != s.n || permutation.iter().any(|&p| p >= s.n) {
        return Err(invalid("mixup coefficients and permutation must match the batch size"));
    }
    let per = s.c * s.plane();
    let mix = |t: &ImageTensor| -> Result<ImageTensor> {
        let d = t.data();
        let mut out = Vec::with_capacity(d.len());
        for i in 0..s.n {
            let lam = lambdas[i];
            let (a, b) = (
                &d[i * per..(i + 1) * per],
                &d[permutation[i] * per..(permutation[i] + 1) * per],
            );
            if lam == 1.0 {
                out.extend_from_slice(a);
            } else {
                out.extend(
                    a.iter()
                        .zip(b)
                        .map(|(&x, &y)| (lam * x as f64 + (1.0 - lam) * y as f64) as f32),
                );
            }
        }
        ImageTensor::new(s, out)
    };
    Ok(MixupResult {
        lq: mix(batch_lq)?,
        gt: mix(batch_gt)?,
        lambdas: lambdas.to_vec(),
        permutation: permutation.to_vec(),
    })
}

/// MixUp with probability `cfg.mixup_prob`, `λ ~ Beta(α, α)` and a random
/// batch permutation. Batches of fewer than two samples pass through.
pub fn mixup(
    batch_lq: &ImageTensor,
    batch_gt: &ImageTensor,
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<MixupResult> {
    cfg.validate()?;
    ensure_same_shape(batch_lq, batch_gt)?;
    let n = batch_lq.shape().n;
    let identity: Vec<usize> = (0..n).collect();
    if n < 2 {
        return mixup_with(batch_lq, batch_gt, &vec![1.0; n], &identity);
    }
    let beta = Beta::new(cfg.mixup_alpha, cfg.mixup_alpha).map_err(|e| invalid(e.to_string()))?;
    let lambdas = match cfg.mixup_mode {
        MixupMode::PerBatch => {
            if !rng.random_bool(cfg.mixup_prob) {
                return mixup_with(batch_lq, batch_gt, &vec![1.0; n], &identity);
            }
            vec![beta.sample(rng); n]
        }
        MixupMode::PerSample => (0..n)
            .map(|_| {
                if rng.random_bool(cfg.mixup_prob) {
                    beta.sample(rng)
                } else {
                    1.0
                }
            })
            .collect(),
    };
    let mut permutation = identity;
    permutation.shuffle(rng);
    mixup_with(batch_lq, batch_gt, &lambdas, &permutation)
}
