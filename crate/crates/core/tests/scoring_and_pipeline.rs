use std::fs;
use std::path::Path;

use ggea_core::image_io::{save_image, save_pfm};
use ggea_core::metrics::{score_directory, SsimOptions};
use ggea_core::pipeline::{restore_one, run_scene, run_scene_average_first, ReferenceRestorer, Restorer};
use ggea_core::train::{lr_at, ScheduleConfig};
use ggea_core::{ImageTensor, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: Shape, seed: u64, hi: f32) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageTensor::from_fn(shape, |_, _, _, _| rng.random_range(0.0..hi)).unwrap()
}

fn write_pair(root: &Path, stem: &str, gt: &ImageTensor, restored: &ImageTensor) {
    save_pfm(gt, &root.join("gt").join(format!("{stem}.pfm"))).unwrap();
    save_pfm(restored, &root.join("restored").join(format!("{stem}.pfm"))).unwrap();
}

fn dirs(root: &Path) {
    fs::create_dir_all(root.join("gt")).unwrap();
    fs::create_dir_all(root.join("restored")).unwrap();
}

#[test]
fn score_two_known_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    dirs(root);
    let shape = Shape::new(1, 3, 24, 20);
    let gt_a = random(shape, 1, 0.7);
    let gt_b = random(shape, 2, 0.7);
    write_pair(root, "a", &gt_a, &gt_a.map(|v| v + 0.1).unwrap());
    write_pair(root, "b", &gt_b, &gt_b.map(|v| v + 0.2).unwrap());
    let s = score_directory(&root.join("restored"), &root.join("gt"), &SsimOptions::default()).unwrap();
    assert_eq!(s.records.len(), 2);
    assert!(s.issues.is_empty());
    assert!((s.records[0].psnr_db - 20.0).abs() < 1e-3);
    assert!((s.records[1].psnr_db - 13.9794).abs() < 1e-3);
    assert!(
        (s.mean_psnr_db - (20.0 + 13.9794) / 2.0).abs() < 1e-3,
        "{}",
        s.mean_psnr_db
    );
}

#[test]
fn score_identical_and_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    dirs(root);
    for (i, stem) in ["x", "y"].iter().enumerate() {
        let img = random(Shape::new(1, 3, 16, 16), 10 + i as u64, 1.0);
        save_image(&img, &root.join("gt").join(format!("{stem}.png"))).unwrap();
        save_image(&img, &root.join("restored").join(format!("{stem}.png"))).unwrap();
    }
    let s = score_directory(&root.join("restored"), &root.join("gt"), &SsimOptions::default()).unwrap();
    assert!(s
        .records
        .iter()
        .all(|r| r.psnr_db.is_infinite() && (r.ssim - 1.0).abs() < 1e-9));
    let json = serde_json::to_value(&s).unwrap();
    assert_eq!(json["mean_psnr_db"], "inf");
    assert!(s.to_csv().unwrap().contains("x,inf,"));

    fs::write(root.join("restored").join("z.png"), b"not a png").unwrap();
    save_image(
        &random(Shape::new(1, 3, 16, 16), 3, 1.0),
        &root.join("gt").join("z.png"),
    )
    .unwrap();
    fs::write(root.join("restored").join("orphan.png"), b"").unwrap();
    let s = score_directory(&root.join("restored"), &root.join("gt"), &SsimOptions::default()).unwrap();
    assert_eq!(s.records.len(), 2);
    let names: Vec<&str> = s.issues.iter().map(|i| i.name.as_str()).collect();
    assert_eq!(names, ["orphan", "z"]);
    assert!(s.issues[1].reason.contains("z.png"), "{}", s.issues[1].reason);
}

#[test]
fn score_without_shared_stems_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    dirs(root);
    let img = random(Shape::new(1, 3, 8, 8), 4, 1.0);
    save_image(&img, &root.join("gt").join("a.png")).unwrap();
    save_image(&img, &root.join("restored").join("b.png")).unwrap();
    assert!(score_directory(&root.join("restored"), &root.join("gt"), &SsimOptions::default()).is_err());
}

fn mirror(i: usize, len: usize) -> usize {
    if i < len {
        i
    } else {
        2 * (len - 1) - i
    }
}

#[test]
fn blur_restorer_matches_hand_composition() {
    let (h, w, k) = (100usize, 130usize, 3usize);
    let img = random(Shape::new(1, 3, h, w), 5, 1.0);
    let got = restore_one(&ReferenceRestorer::Blur(k), &img, 64).unwrap();
    assert_eq!(got.shape(), img.shape());

    let (ph, pw) = (128usize, 192usize);
    let r = (k / 2) as isize;
    let mut worst = 0.0f64;
    for c in 0..3 {
        let padded = |y: isize, x: isize| -> f64 {
            let y = y.clamp(0, ph as isize - 1) as usize;
            let x = x.clamp(0, pw as isize - 1) as usize;
            img.get(0, c, mirror(y, h), mirror(x, w)) as f64
        };
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut sum = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        sum += padded(y + dy, x + dx);
                    }
                }
                let want = sum / (k * k) as f64;
                worst = worst.max((got.get(0, c, y as usize, x as usize) as f64 - want).abs());
            }
        }
    }
    assert!(worst < 1e-6, "{worst:e}");
}

#[test]
fn identity_restorer_is_bit_exact() {
    let img = random(Shape::new(1, 3, 100, 130), 6, 1.0);
    assert_eq!(restore_one(&ReferenceRestorer::Identity, &img, 64).unwrap(), img);
    let shifted = restore_one(&ReferenceRestorer::ConstantShift(0.1), &img, 64).unwrap();
    for (a, b) in shifted.data().iter().zip(img.data()) {
        assert_eq!(*a, b + 0.1);
    }
}

#[test]
fn two_models_three_frames() {
    let shape = Shape::new(1, 3, 10, 12);
    let frames: Vec<ImageTensor> = (0..3).map(|i| random(shape, 20 + i, 1.0)).collect();
    let a = ReferenceRestorer::ConstantShift(0.1);
    let b = ReferenceRestorer::Scale(0.5);
    let models: [(&dyn Restorer, f64); 2] = [(&a, 0.4), (&b, 0.6)];
    let got = run_scene(&models, &frames, 8).unwrap();
    let other = run_scene_average_first(&models, &frames, 8).unwrap();
    for i in 0..shape.len() {
        let want = frames
            .iter()
            .map(|f| {
                let x = f.data()[i] as f64;
                0.4 * (x + 0.1) + 0.6 * (0.5 * x)
            })
            .sum::<f64>()
            / 3.0;
        assert!((got.data()[i] as f64 - want).abs() < 1e-6);
        assert!((other.data()[i] - got.data()[i]).abs() < 1e-6);
    }
}

#[test]
fn single_frame_single_model_is_restore_one() {
    let img = random(Shape::new(1, 3, 9, 11), 30, 1.0);
    let m = ReferenceRestorer::Blur(3);
    let models: [(&dyn Restorer, f64); 1] = [(&m, 1.0)];
    assert_eq!(
        run_scene(&models, std::slice::from_ref(&img), 8).unwrap(),
        restore_one(&m, &img, 8).unwrap()
    );
}

#[test]
fn cosine_midpoint() {
    let cfg = ScheduleConfig::default();
    let mid = cfg.warmup_steps() + (cfg.total_steps() - cfg.warmup_steps()) / 2;
    let want = cfg.lr_min + 0.5 * (cfg.lr_init - cfg.lr_min);
    assert!((lr_at(mid, &cfg).unwrap() - want).abs() < 1e-9);
    assert!((want - 1.505e-4).abs() < 1e-12);
}
