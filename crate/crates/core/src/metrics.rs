//! Full-reference quality metrics and leaderboard-style directory scoring.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::dataset::list_images_by_stem;
use crate::edge_weight::to_grayscale;
use crate::error::{invalid, Result};
use crate::image_io::load_image;
use crate::structural::{ssim_and_cs, window, Plane};
use crate::tensor::{ensure_same_shape, ImageTensor};

pub const DEFAULT_SSIM_KERNEL: usize = 11;

/// `10 · log10(peak² / MSE)` with the MSE taken over every element.
/// Identical inputs give `f64::INFINITY`.
pub fn psnr(pred: &ImageTensor, gt: &ImageTensor, peak: f64) -> Result<f64> {
    ensure_same_shape(pred, gt)?;
    if !(peak > 0.0) {
        return Err(invalid(format!("peak must be positive, got {peak}")));
    }
    let sse: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| {
            let d = p as f64 - g as f64;
            d * d
        })
        .sum();
    let mse = sse / pred.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Which image planes SSIM is evaluated on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SsimChannels {
    /// Per channel, averaged.
    #[default]
    Mean,
    /// On the luma plane only (RGB inputs).
    Luma,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimOptions {
    pub kernel: usize,
    pub peak: f64,
    pub channels: SsimChannels,
}

impl Default for SsimOptions {
    fn default() -> Self {
        SsimOptions {
            kernel: DEFAULT_SSIM_KERNEL,
            peak: 1.0,
            channels: SsimChannels::Mean,
        }
    }
}

/// Mean single-scale SSIM with a Gaussian window (σ = 1.5) over valid
/// window positions, averaged over batch and channels.
pub fn ssim(pred: &ImageTensor, gt: &ImageTensor, kernel: usize, peak: f64) -> Result<f64> {
    ssim_with(
        pred,
        gt,
        &SsimOptions {
            kernel,
            peak,
            channels: SsimChannels::Mean,
        },
    )
}

pub fn ssim_with(pred: &ImageTensor, gt: &ImageTensor, opts: &SsimOptions) -> Result<f64> {
    ensure_same_shape(pred, gt)?;
    if opts.kernel.is_multiple_of(2) || opts.kernel == 0 {
        return Err(invalid(format!("SSIM window must be odd, got {}", opts.kernel)));
    }
    if !(opts.peak > 0.0) {
        return Err(invalid(format!("peak must be positive, got {}", opts.peak)));
    }
    let s = pred.shape();
    if s.h.min(s.w) < opts.kernel {
        return Err(invalid(format!(
            "image {}x{} is smaller than the {}x{} SSIM window",
            s.h, s.w, opts.kernel, opts.kernel
        )));
    }
    let (a, b);
    let (pred, gt) = match opts.channels {
        SsimChannels::Mean => (pred, gt),
        SsimChannels::Luma => {
            a = to_grayscale(pred)?;
            b = to_grayscale(gt)?;
            (&a, &b)
        }
    };
    let s = pred.shape();
    let taps = window(opts.kernel);
    let mut total = 0.0;
    for n in 0..s.n {
        for c in 0..s.c {
            let x = Plane::from_f32(pred.plane(n, c), s.h, s.w);
            let y = Plane::from_f32(gt.plane(n, c), s.h, s.w);
            total += ssim_and_cs(&x, &y, &taps, opts.peak).0;
        }
    }
    Ok(total / (s.n * s.c) as f64)
}

fn serialize_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

/// Renders a PSNR value, using the literal `inf` for identical images.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreRecord {
    pub scene_id: String,
    #[serde(serialize_with = "serialize_db")]
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FileIssue {
    pub name: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreSummary {
    pub records: Vec<ScoreRecord>,
    pub issues: Vec<FileIssue>,
    #[serde(serialize_with = "serialize_db")]
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
}

impl ScoreSummary {
    /// CSV with header `scene_id,psnr_db,ssim`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["scene_id", "psnr_db", "ssim"])
            .map_err(|e| invalid(e.to_string()))?;
        for r in &self.records {
            w.write_record([r.scene_id.clone(), format_db(r.psnr_db), format!("{}", r.ssim)])
                .map_err(|e| invalid(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn score_pair(restored: &Path, gt: &Path, opts: &SsimOptions) -> Result<(f64, f64)> {
    let a = load_image(restored)?;
    let b = load_image(gt)?;
    Ok((psnr(&a, &b, opts.peak)?, ssim_with(&a, &b, opts)?))
}

/// Scores every image in `restored_dir` against the file with the same
/// stem in `gt_dir`.
///
/// Files without a partner and pairs that fail to load are reported in
/// `issues`; the means cover the pairs that scored. It is an error when no
/// stems match or no pair could be scored. Records are ordered by stem.
pub fn score_directory(restored_dir: &Path, gt_dir: &Path, opts: &SsimOptions) -> Result<ScoreSummary> {
    let restored = list_images_by_stem(restored_dir)?;
    let gts = list_images_by_stem(gt_dir)?;
    let mut issues = Vec::new();
    for stem in restored.keys().filter(|k| !gts.contains_key(*k)) {
        issues.push(FileIssue {
            name: stem.clone(),
            reason: format!("no ground truth in {}", gt_dir.display()),
        });
    }
    for stem in gts.keys().filter(|k| !restored.contains_key(*k)) {
        issues.push(FileIssue {
            name: stem.clone(),
            reason: format!("no restored image in {}", restored_dir.display()),
        });
    }
    let pairs: Vec<(String, PathBuf, PathBuf)> = restored
        .iter()
        .filter_map(|(stem, r)| gts.get(stem).map(|g| (stem.clone(), r.clone(), g.clone())))
        .collect();
    if pairs.is_empty() {
        return Err(invalid(format!(
            "no filename stems shared by {} and {}",
            restored_dir.display(),
            gt_dir.display()
        )));
    }
    let scored: Vec<(String, Result<(f64, f64)>)> = pairs
        .par_iter()
        .map(|(stem, r, g)| (stem.clone(), score_pair(r, g, opts)))
        .collect();

    let mut records = Vec::new();
    for (stem, result) in scored {
        match result {
            Ok((psnr_db, ssim)) => records.push(ScoreRecord {
                scene_id: stem,
                psnr_db,
                ssim,
            }),
            Err(e) => issues.push(FileIssue {
                name: stem,
                reason: e.to_string(),
            }),
        }
    }
    if records.is_empty() {
        return Err(invalid("no image pair could be scored"));
    }
    issues.sort_by(|a, b| a.name.cmp(&b.name));
    let k = records.len() as f64;
    let mean_psnr_db = records.iter().map(|r| r.psnr_db).sum::<f64>() / k;
    let mean_ssim = records.iter().map(|r| r.ssim).sum::<f64>() / k;
    Ok(ScoreSummary {
        records,
        issues,
        mean_psnr_db,
        mean_ssim,
    })
}
