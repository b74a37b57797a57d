//! Inference composition: pluggable restorers, residual combiners,
//! weighted model fusion and multi-frame averaging.
//!
//! Nothing here clamps; values leave the pipeline unclamped and are only
//! clipped to `[0, 1]` when encoded to an 8-bit file.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{list_images_by_stem, SceneRecord};
use crate::error::{invalid, Error, Result};
use crate::image_io::{load_image, save_image};
use crate::tensor::{conv2d_replicate, ensure_same_shape, pad_to_multiple, unpad, ImageTensor, Kernel2D, Shape};

/// Pad multiple used in front of model inference.
pub const MODEL_PAD_MULTIPLE: usize = 64;
/// Pad multiple used when only averaging frames.
pub const FRAME_PAD_MULTIPLE: usize = 8;

/// Raw network output before it is merged with the input.
#[derive(Clone, Debug, PartialEq)]
pub struct RestorerOutput {
    pub residual: ImageTensor,
    /// Per-pixel input scale (`N×1×H×W` or `N×C×H×W`); present only for
    /// models with a learned skip connection.
    pub scale_map: Option<ImageTensor>,
}

/// A restoration model. Implementations must tolerate concurrent calls.
pub trait Restorer: Send + Sync {
    fn forward(&self, input: &ImageTensor) -> Result<RestorerOutput>;
}

/// Training-free restorers with known outputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReferenceRestorer {
    /// Zero residual, unit scale.
    Identity,
    /// Adds a constant to every value.
    ConstantShift(f32),
    /// Residual `box_k(input) - input`, so the output is a box blur.
    Blur(usize),
    /// Zero residual, uniform input scale.
    Scale(f32),
}

impl Restorer for ReferenceRestorer {
    fn forward(&self, input: &ImageTensor) -> Result<RestorerOutput> {
        let s = input.shape();
        let single = Shape { c: 1, ..s };
        Ok(match *self {
            ReferenceRestorer::Identity => RestorerOutput {
                residual: ImageTensor::zeros(s)?,
                scale_map: Some(ImageTensor::filled(single, 1.0)?),
            },
            ReferenceRestorer::ConstantShift(d) => RestorerOutput {
                residual: ImageTensor::filled(s, d)?,
                scale_map: None,
            },
            ReferenceRestorer::Blur(k) => {
                let blurred = conv2d_replicate(input, &Kernel2D::box_filter(k)?);
                RestorerOutput {
                    residual: blurred.zip_map(input, |b, x| b - x)?,
                    scale_map: None,
                }
            }
            ReferenceRestorer::Scale(v) => RestorerOutput {
                residual: ImageTensor::zeros(s)?,
                scale_map: Some(ImageTensor::filled(single, v)?),
            },
        })
    }
}

/// Global residual connection: `input + residual`.
pub fn combine_base(input: &ImageTensor, residual: &ImageTensor) -> Result<ImageTensor> {
    input.zip_map(residual, |x, r| x + r)
}

/// Learned skip connection: `scale_map ⊙ input + residual`, with a
/// single-channel scale map broadcast over the input channels.
pub fn combine_plus(input: &ImageTensor, residual: &ImageTensor, scale_map: &ImageTensor) -> Result<ImageTensor> {
    ensure_same_shape(input, residual)?;
    let s = input.shape();
    let m = scale_map.shape();
    if (m.n, m.h, m.w) != (s.n, s.h, s.w) || (m.c != 1 && m.c != s.c) {
        return Err(Error::ShapeMismatch(format!("scale map {m} cannot broadcast over {s}")));
    }
    let p = s.plane();
    let (x, r, sm) = (input.data(), residual.data(), scale_map.data());
    let mut out = Vec::with_capacity(s.len());
    for n in 0..s.n {
        for c in 0..s.c {
            let base = (n * s.c + c) * p;
            let mbase = (n * m.c + if m.c == 1 { 0 } else { c }) * p;
            for i in 0..p {
                out.push(sm[mbase + i] * x[base + i] + r[base + i]);
            }
        }
    }
    ImageTensor::new(s, out)
}

pub fn combine(input: &ImageTensor, out: &RestorerOutput) -> Result<ImageTensor> {
    match &out.scale_map {
        Some(m) => combine_plus(input, &out.residual, m),
        None => combine_base(input, &out.residual),
    }
}

/// Pads to `pad_multiple`, runs the model, merges its output with the
/// padded input and crops back to the original size.
pub fn restore_one(model: &dyn Restorer, img: &ImageTensor, pad_multiple: usize) -> Result<ImageTensor> {
    let (padded, spec) = pad_to_multiple(img, pad_multiple)?;
    let out = model.forward(&padded)?;
    let merged = combine(&padded, &out)?;
    unpad(&merged, spec)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub w_a: f64,
    pub w_b: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig { w_a: 0.4, w_b: 0.6 }
    }
}

impl EnsembleConfig {
    pub fn new(w_a: f64, w_b: f64) -> Result<Self> {
        let cfg = EnsembleConfig { w_a, w_b };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        validate_weights(&[self.w_a, self.w_b])
    }
}

fn validate_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(invalid("at least one fusion weight is required"));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(invalid(format!("fusion weights must be nonnegative, got {weights:?}")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("fusion weights must sum to 1, got {total}")));
    }
    Ok(())
}

/// Convex combination `Σ w_i · x_i`, accumulated in `f64`.
pub fn fuse_weighted(outputs: &[&ImageTensor], weights: &[f64]) -> Result<ImageTensor> {
    if outputs.len() != weights.len() {
        return Err(invalid(format!(
            "{} outputs but {} weights",
            outputs.len(),
            weights.len()
        )));
    }
    validate_weights(weights)?;
    let first = outputs[0];
    for o in &outputs[1..] {
        ensure_same_shape(first, o)?;
    }
    let data = (0..first.data().len())
        .map(|i| {
            outputs
                .iter()
                .zip(weights)
                .map(|(o, w)| w * o.data()[i] as f64)
                .sum::<f64>() as f32
        })
        .collect();
    ImageTensor::new(first.shape(), data)
}

/// Two-model fusion `w_a · a + w_b · b`.
pub fn ensemble(out_a: &ImageTensor, out_b: &ImageTensor, cfg: &EnsembleConfig) -> Result<ImageTensor> {
    cfg.validate()?;
    fuse_weighted(&[out_a, out_b], &[cfg.w_a, cfg.w_b])
}

/// Pixel-wise mean of restored frames, accumulated in `f64`.
pub fn average_frames(outputs: &[ImageTensor]) -> Result<ImageTensor> {
    let first = outputs.first().ok_or_else(|| invalid("no frames to average"))?;
    for o in &outputs[1..] {
        ensure_same_shape(first, o)?;
    }
    let k = outputs.len() as f64;
    let data = (0..first.data().len())
        .map(|i| (outputs.iter().map(|o| o.data()[i] as f64).sum::<f64>() / k) as f32)
        .collect();
    ImageTensor::new(first.shape(), data)
}

/// Restores every frame with every model, fuses the models per frame and
/// averages the fused frames.
pub fn run_scene(models: &[(&dyn Restorer, f64)], frames: &[ImageTensor], pad_multiple: usize) -> Result<ImageTensor> {
    let weights: Vec<f64> = models.iter().map(|(_, w)| *w).collect();
    validate_weights(&weights)?;
    let fused = frames
        .iter()
        .map(|frame| {
            let outs = models
                .iter()
                .map(|(m, _)| restore_one(*m, frame, pad_multiple))
                .collect::<Result<Vec<_>>>()?;
            fuse_weighted(&outs.iter().collect::<Vec<_>>(), &weights)
        })
        .collect::<Result<Vec<_>>>()?;
    average_frames(&fused)
}

/// The other order: average each model's frames, then fuse the averages.
/// Equal to [`run_scene`] up to rounding since both steps are linear.
pub fn run_scene_average_first(
    models: &[(&dyn Restorer, f64)],
    frames: &[ImageTensor],
    pad_multiple: usize,
) -> Result<ImageTensor> {
    let weights: Vec<f64> = models.iter().map(|(_, w)| *w).collect();
    validate_weights(&weights)?;
    let per_model = models
        .iter()
        .map(|(m, _)| {
            let outs = frames
                .iter()
                .map(|f| restore_one(*m, f, pad_multiple))
                .collect::<Result<Vec<_>>>()?;
            average_frames(&outs)
        })
        .collect::<Result<Vec<_>>>()?;
    fuse_weighted(&per_model.iter().collect::<Vec<_>>(), &weights)
}

/// Loads the degraded frames of `scene` and runs [`run_scene`].
pub fn run_scene_record(
    models: &[(&dyn Restorer, f64)],
    scene: &SceneRecord,
    pad_multiple: usize,
) -> Result<ImageTensor> {
    let frames = scene
        .degraded_paths
        .iter()
        .map(|p| load_image(p))
        .collect::<Result<Vec<_>>>()?;
    run_scene(models, &frames, pad_multiple)
}

/// Runs many scenes in parallel; results keep the input order.
pub fn run_scenes(
    models: &[(&dyn Restorer, f64)],
    scenes: &[SceneRecord],
    pad_multiple: usize,
) -> Vec<Result<ImageTensor>> {
    scenes
        .par_iter()
        .map(|s| run_scene_record(models, s, pad_multiple))
        .collect()
}

/// Fuses filename-paired images from two directories into `out_dir` as
/// PNG files named `<stem>.png`. Unpaired stems on either side are an
/// error listing them; nothing is written in that case.
pub fn ensemble_directories(a_dir: &Path, b_dir: &Path, cfg: &EnsembleConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let a = list_images_by_stem(a_dir)?;
    let b = list_images_by_stem(b_dir)?;
    let only_a: Vec<&String> = a.keys().filter(|k| !b.contains_key(*k)).collect();
    let only_b: Vec<&String> = b.keys().filter(|k| !a.contains_key(*k)).collect();
    if !only_a.is_empty() || !only_b.is_empty() {
        return Err(invalid(format!(
            "unpaired files: only in {}: {only_a:?}; only in {}: {only_b:?}",
            a_dir.display(),
            b_dir.display()
        )));
    }
    if a.is_empty() {
        return Err(invalid(format!("no images in {}", a_dir.display())));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let jobs: Vec<(&String, &PathBuf, &PathBuf)> = a.iter().map(|(k, pa)| (k, pa, &b[k])).collect();
    jobs.par_iter()
        .map(|(stem, pa, pb)| {
            let fused = ensemble(&load_image(pa)?, &load_image(pb)?, cfg)?;
            let dest = out_dir.join(format!("{stem}.png"));
            save_image(&fused, &dest)?;
            Ok(dest)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Shape, seed: u64) -> ImageTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageTensor::from_fn(shape, |_, _, _, _| rng.random::<f32>()).unwrap()
    }

    #[test]
    fn base_combiner() {
        let x = ImageTensor::filled(Shape::new(1, 3, 2, 2), 0.5).unwrap();
        let r = ImageTensor::filled(Shape::new(1, 3, 2, 2), -0.5).unwrap();
        assert!(combine_base(&x, &r).unwrap().data().iter().all(|&v| v == 0.0));
        let zero = ImageTensor::zeros(x.shape()).unwrap();
        assert_eq!(combine_base(&x, &zero).unwrap(), x);
        let a = random(Shape::new(2, 3, 4, 5), 1);
        let b = random(Shape::new(2, 3, 4, 5), 2);
        let out = combine_base(&a, &b).unwrap();
        for i in 0..a.data().len() {
            assert_eq!(out.data()[i], a.data()[i] + b.data()[i]);
        }
    }

    #[test]
    fn plus_combiner() {
        let x = random(Shape::new(1, 3, 4, 4), 3);
        let zero = ImageTensor::zeros(x.shape()).unwrap();
        let ones = ImageTensor::filled(Shape::new(1, 1, 4, 4), 1.0).unwrap();
        assert_eq!(combine_plus(&x, &zero, &ones).unwrap(), x);
        let r = random(x.shape(), 4);
        let zeros1 = ImageTensor::zeros(Shape::new(1, 1, 4, 4)).unwrap();
        assert_eq!(combine_plus(&x, &r, &zeros1).unwrap(), r);

        let m = random(Shape::new(1, 3, 4, 4), 5);
        let out = combine_plus(&x, &r, &m).unwrap();
        for i in 0..x.data().len() {
            let want = m.data()[i] as f64 * x.data()[i] as f64 + r.data()[i] as f64;
            assert!((out.data()[i] as f64 - want).abs() < 1e-7);
        }
        let m1 = random(Shape::new(1, 1, 4, 4), 6);
        let out = combine_plus(&x, &r, &m1).unwrap();
        assert_eq!(
            out.get(0, 2, 1, 3),
            m1.get(0, 0, 1, 3) * x.get(0, 2, 1, 3) + r.get(0, 2, 1, 3)
        );
        let bad = ImageTensor::zeros(Shape::new(1, 1, 4, 3)).unwrap();
        assert!(combine_plus(&x, &r, &bad).is_err());
    }

    #[test]
    fn reference_restorers() {
        let img = random(Shape::new(1, 3, 100, 130), 7);
        assert_eq!(restore_one(&ReferenceRestorer::Identity, &img, 64).unwrap(), img);
        let shifted = restore_one(&ReferenceRestorer::ConstantShift(0.1), &img, 64).unwrap();
        for i in 0..img.data().len() {
            assert_eq!(shifted.data()[i], img.data()[i] + 0.1);
        }
        let tiny = random(Shape::new(1, 3, 3, 3), 8);
        assert!(restore_one(&ReferenceRestorer::Identity, &tiny, 64).is_err());
    }

    #[test]
    fn ensemble_defaults_and_validation() {
        let a = ImageTensor::zeros(Shape::new(1, 3, 2, 2)).unwrap();
        let b = ImageTensor::filled(Shape::new(1, 3, 2, 2), 1.0).unwrap();
        let out = ensemble(&a, &b, &EnsembleConfig::default()).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.6));
        assert_eq!(ensemble(&b, &b, &EnsembleConfig::default()).unwrap(), b);
        assert!(EnsembleConfig::new(0.5, 0.6).is_err());
        assert!(EnsembleConfig::new(-0.5, 1.5).is_err());
        let c = ImageTensor::zeros(Shape::new(1, 3, 2, 3)).unwrap();
        assert!(ensemble(&a, &c, &EnsembleConfig::default()).is_err());
    }

    #[test]
    fn averaging() {
        assert!(average_frames(&[]).is_err());
        let gt = ImageTensor::from_fn(Shape::new(1, 3, 4, 4), |_, c, y, x| {
            ((c + y * 4 + x) % 16) as f32 / 32.0 + 0.25
        })
        .unwrap();
        assert_eq!(average_frames(std::slice::from_ref(&gt)).unwrap(), gt);
        let eps = 1.0 / 64.0;
        let up = gt.map(|v| v + eps).unwrap();
        let down = gt.map(|v| v - eps).unwrap();
        assert_eq!(average_frames(&[up, down]).unwrap(), gt);
    }

    #[test]
    fn scene_with_identity_models_averages_frames() {
        let frames: Vec<ImageTensor> = (0..3).map(|k| random(Shape::new(1, 3, 16, 16), 10 + k)).collect();
        let id = ReferenceRestorer::Identity;
        let out = run_scene(&[(&id, 0.4), (&id, 0.6)], &frames, 8).unwrap();
        let avg = average_frames(&frames).unwrap();
        for i in 0..avg.data().len() {
            assert!((out.data()[i] - avg.data()[i]).abs() < 1e-6);
        }
        let single = run_scene(&[(&ReferenceRestorer::Blur(3), 1.0)], &frames[..1], 8).unwrap();
        assert_eq!(single, restore_one(&ReferenceRestorer::Blur(3), &frames[0], 8).unwrap());
    }
}
