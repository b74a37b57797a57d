//! Dataset layouts: flat `GT_all` / `LQ_all` pair directories and scene
//! folders holding one `gt.png` plus `degraded_*.png` frames.
//!
//! Scans never depend on directory enumeration order: every listing is
//! sorted before it is returned.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use walkdir::WalkDir;

use crate::error::{invalid, Error, Result};
use crate::image_io::is_image_path;

pub const GT_DIR: &str = "GT_all";
pub const LQ_DIR: &str = "LQ_all";
pub const SCENE_GT: &str = "gt.png";
pub const DEGRADED_PREFIX: &str = "degraded_";

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PairedSample {
    pub id: String,
    pub gt_path: PathBuf,
    pub lq_path: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Rain,
    Snow,
    Other,
}

impl Category {
    fn from_dir_name(name: &str) -> Self {
        match name.to_ascii_lowercase().as_str() {
            "rain" => Category::Rain,
            "snow" => Category::Snow,
            _ => Category::Other,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SceneRecord {
    /// Path of the scene folder relative to the scan root, `/`-separated.
    pub scene_id: String,
    pub category: Category,
    pub gt_path: PathBuf,
    /// Sorted by numeric suffix.
    pub degraded_paths: Vec<PathBuf>,
}

impl SceneRecord {
    pub fn frame_count(&self) -> usize {
        self.degraded_paths.len()
    }
}

/// Items found by a scan plus the non-fatal problems encountered.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Scan<T> {
    pub items: Vec<T>,
    pub warnings: Vec<String>,
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        out.push(entry.path());
    }
    out.sort();
    Ok(out)
}

fn stem_of(path: &Path) -> Option<String> {
    path.file_stem().and_then(|s| s.to_str()).map(str::to_owned)
}

/// Image files directly inside `dir`, keyed by filename stem.
pub fn list_images_by_stem(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for path in read_dir_sorted(dir)? {
        if path.is_file() && is_image_path(&path) {
            if let Some(stem) = stem_of(&path) {
                // first extension in sorted order wins on duplicate stems
                out.entry(stem).or_insert(path);
            }
        }
    }
    Ok(out)
}

/// Pairs `root/GT_all/<stem>.*` with `root/LQ_all/<stem>.*`.
pub fn scan_flat_pairs(root: &Path) -> Result<Scan<PairedSample>> {
    let gt_dir = root.join(GT_DIR);
    let lq_dir = root.join(LQ_DIR);
    for d in [&gt_dir, &lq_dir] {
        if !d.is_dir() {
            return Err(invalid(format!("missing subdirectory {}", d.display())));
        }
    }
    let gts = list_images_by_stem(&gt_dir)?;
    let lqs = list_images_by_stem(&lq_dir)?;
    let mut warnings = Vec::new();
    for stem in gts.keys().filter(|s| !lqs.contains_key(*s)) {
        warnings.push(format!("{stem}: present in {GT_DIR} only"));
    }
    for stem in lqs.keys().filter(|s| !gts.contains_key(*s)) {
        warnings.push(format!("{stem}: present in {LQ_DIR} only"));
    }
    let items = gts
        .into_iter()
        .filter_map(|(id, gt_path)| {
            lqs.get(&id).map(|lq| PairedSample {
                id,
                gt_path,
                lq_path: lq.clone(),
            })
        })
        .collect();
    Ok(Scan { items, warnings })
}

/// Sort key for `degraded_<k>.png`: numeric suffixes first in numeric
/// order, anything else after them by name.
fn frame_key(path: &Path) -> (u8, u64, String) {
    let stem = stem_of(path).unwrap_or_default();
    let suffix = stem.strip_prefix(DEGRADED_PREFIX).unwrap_or(&stem);
    match suffix.parse::<u64>() {
        Ok(k) => (0, k, stem),
        Err(_) => (1, 0, stem),
    }
}

fn is_degraded_frame(path: &Path) -> bool {
    path.is_file()
        && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
        && path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with(DEGRADED_PREFIX))
}

/// `degraded_*.png` frames directly inside `dir`, numerically ordered.
pub fn degraded_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut frames: Vec<PathBuf> = read_dir_sorted(dir)?
        .into_iter()
        .filter(|p| is_degraded_frame(p))
        .collect();
    frames.sort_by_key(|p| frame_key(p));
    Ok(frames)
}

/// Frames to average for one scene folder: the degraded frames when any
/// exist, otherwise every image file except `gt.png`.
pub fn scene_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let frames = degraded_frames(dir)?;
    if !frames.is_empty() {
        return Ok(frames);
    }
    Ok(read_dir_sorted(dir)?
        .into_iter()
        .filter(|p| p.is_file() && is_image_path(p))
        .filter(|p| p.file_name().and_then(|n| n.to_str()) != Some(SCENE_GT))
        .collect())
}

/// Finds every scene folder below `root`.
///
/// A folder is a scene when it contains `gt.png` or degraded frames. Scenes
/// lacking either part are skipped with a warning. The category is taken
/// from the first path component below `root` (or from `root`'s own name
/// for scenes directly inside it).
pub fn scan_scenes(root: &Path) -> Result<Scan<SceneRecord>> {
    if !root.is_dir() {
        return Err(invalid(format!("scene root {} is not a directory", root.display())));
    }
    let mut items = Vec::new();
    let mut warnings = Vec::new();
    let walker = WalkDir::new(root).sort_by_file_name().into_iter();
    for entry in walker {
        let entry = entry.map_err(|e| invalid(format!("walking {}: {e}", root.display())))?;
        if !entry.file_type().is_dir() {
            continue;
        }
        let dir = entry.path();
        let gt = dir.join(SCENE_GT);
        let frames = degraded_frames(dir)?;
        let has_gt = gt.is_file();
        if !has_gt && frames.is_empty() {
            continue;
        }
        let rel = dir.strip_prefix(root).unwrap_or(dir);
        let scene_id = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        if !has_gt {
            warnings.push(format!("{scene_id}: no {SCENE_GT}, skipped"));
            continue;
        }
        if frames.is_empty() {
            warnings.push(format!("{scene_id}: no degraded frames, skipped"));
            continue;
        }
        let category_source = match rel.components().next() {
            Some(first) if rel.components().count() > 1 => first.as_os_str().to_string_lossy().into_owned(),
            _ => root
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        };
        items.push(SceneRecord {
            scene_id,
            category: Category::from_dir_name(&category_source),
            gt_path: gt,
            degraded_paths: frames,
        });
    }
    items.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
    Ok(Scan { items, warnings })
}
