use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ggea_core::image_io::{decode_pfm, load_image, save_image, save_pfm};
use ggea_core::{ImageTensor, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ggea(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ggea"))
        .args(args)
        .env("GGEA_THREADS", "2")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn random(shape: Shape, seed: u64) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageTensor::from_fn(shape, |_, _, _, _| rng.random::<f32>()).unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn weightmap_constant_images() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("flat.png");
    save_image(&ImageTensor::filled(Shape::new(1, 3, 6, 9), 0.4).unwrap(), &img).unwrap();
    for (variant, want) in [("ggea", 0.0f32), ("diffbir", 1.0)] {
        let out = dir.path().join(format!("{variant}.pfm"));
        let o = ggea(&["weightmap", "--gt", s(&img), "--out", s(&out), "--variant", variant]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let map = decode_pfm(&fs::read(&out).unwrap()).unwrap();
        assert_eq!(map.shape(), Shape::new(1, 1, 6, 9));
        assert!(map.data().iter().all(|&v| v == want));
    }
}

#[test]
fn weightmap_png_output() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("board.png");
    let board = ImageTensor::from_fn(Shape::new(1, 3, 8, 8), |_, _, y, x| ((x / 2 + y / 2) % 2) as f32).unwrap();
    save_image(&board, &img).unwrap();
    let out = dir.path().join("w.png");
    let o = ggea(&["weightmap", "--gt", s(&img), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(json(&o)["min"].as_f64().unwrap() > 0.0);
    let w = load_image(&out).unwrap();
    assert!(w.data().iter().all(|&v| v > 0.0));
}

#[test]
fn loss_size_gate_and_zero() {
    let dir = tempfile::tempdir().unwrap();
    let small = dir.path().join("small.png");
    save_image(&random(Shape::new(1, 3, 96, 96), 1), &small).unwrap();
    let o = ggea(&["loss", "--pred", s(&small), "--gt", s(&small)]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("97") && err.contains("(kernel_size - 1)"), "{err}");

    let o = ggea(&["loss", "--pred", s(&small), "--gt", s(&small), "--no-ms-ssim"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    for k in ["l1", "ms_ssim_loss", "ggea", "total"] {
        assert_eq!(v[k].as_f64(), Some(0.0), "{k}");
    }
}

#[test]
fn ensemble_copies_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    save_image(&random(Shape::new(1, 3, 5, 7), 1), &a.join("k.png")).unwrap();
    save_image(&random(Shape::new(1, 3, 5, 7), 2), &b.join("k.png")).unwrap();
    let out = dir.path().join("out");
    let o = ggea(&[
        "ensemble",
        "--a",
        s(&a),
        "--b",
        s(&b),
        "--wa",
        "1",
        "--wb",
        "0",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read(out.join("k.png")).unwrap(), fs::read(a.join("k.png")).unwrap());

    let o = ggea(&[
        "ensemble",
        "--a",
        s(&a),
        "--b",
        s(&b),
        "--wa",
        "0.5",
        "--wb",
        "0.6",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));

    save_image(&random(Shape::new(1, 3, 5, 7), 3), &a.join("extra.png")).unwrap();
    let o = ggea(&["ensemble", "--a", s(&a), "--b", s(&b), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("extra"));
}

#[test]
fn avg_copy_and_midpoint() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    fs::create_dir_all(&scene).unwrap();
    let x = random(Shape::new(1, 3, 11, 13), 4);
    save_pfm(&x, &scene.join("degraded_0.pfm")).unwrap();
    let out = dir.path().join("one.pfm");
    let o = ggea(&["avg", "--scene", s(&scene), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(load_image(&out).unwrap(), x);

    // complementary 8-bit frames average to exact half-steps
    let scene2 = dir.path().join("scene2");
    let a = ImageTensor::from_fn(Shape::new(1, 3, 6, 6), |_, c, y, x| {
        ((c + y * 6 + x) * 5) as f32 / 255.0
    })
    .unwrap();
    let b = a.map(|v| 1.0 - v).unwrap();
    fs::create_dir_all(&scene2).unwrap();
    save_image(&a, &scene2.join("degraded_0.png")).unwrap();
    save_image(&b, &scene2.join("degraded_1.png")).unwrap();
    save_image(&a, &scene2.join("gt.png")).unwrap();
    let out = dir.path().join("mid.pfm");
    let o = ggea(&["avg", "--scene", s(&scene2), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["frames"].as_array().unwrap().len(), 2);
    let mid = load_image(&out).unwrap();
    assert!(mid.data().iter().all(|&v| (v - 0.5).abs() < 1e-6));
}

#[test]
fn gradcheck_contract() {
    let o = ggea(&["gradcheck"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["pass"], true);
    let again = ggea(&["gradcheck"]);
    assert_eq!(o.stdout, again.stdout);

    let o = ggea(&["gradcheck", "--eps", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
}

#[test]
fn score_warns_but_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let (r, g) = (dir.path().join("r"), dir.path().join("g"));
    let img = random(Shape::new(1, 3, 12, 12), 5);
    fs::create_dir_all(&r).unwrap();
    fs::create_dir_all(&g).unwrap();
    save_image(&img, &r.join("one.png")).unwrap();
    save_image(&img, &g.join("one.png")).unwrap();
    save_image(&img, &g.join("two.png")).unwrap();
    let o = ggea(&["score", "--restored", s(&r), "--gt", s(&g)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("two"));
    assert_eq!(json(&o)["records"][0]["psnr_db"], "inf");

    let o = ggea(&["score", "--restored", s(&r), "--gt", s(&dir.path().join("missing"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors() {
    assert_eq!(ggea(&[]).status.code(), Some(1));
    assert_eq!(ggea(&["loss", "--pred", "x.png"]).status.code(), Some(1));
    assert_eq!(ggea(&["frobnicate"]).status.code(), Some(1));
    let help = ggea(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("gradcheck"));
}

#[test]
fn scan_scenes_and_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("rain/2_0_0_9_30");
    fs::create_dir_all(&scene).unwrap();
    for name in ["gt.png", "degraded_0.png", "degraded_10.png", "degraded_2.png"] {
        fs::write(scene.join(name), b"").unwrap();
    }
    let o = ggea(&["scan", "--root", s(dir.path()), "--layout", "scenes"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v[0]["category"], "rain");
    let frames: Vec<String> = v[0]["degraded_paths"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| {
            Path::new(p.as_str().unwrap())
                .file_name()
                .unwrap()
                .to_string_lossy()
                .into_owned()
        })
        .collect();
    assert_eq!(frames, ["degraded_0.png", "degraded_2.png", "degraded_10.png"]);

    let cfg = dir.path().join("train.toml");
    fs::write(
        &cfg,
        ggea_core::train::TrainConfig::finetune()
            .to_toml()
            .unwrap()
            .replace("total_epochs = 40", "total_epochs = 2"),
    )
    .unwrap();
    let o = ggea(&["schedule", "--config", s(&cfg), "--steps-per-epoch", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 9);
    assert!(text.lines().nth(5).unwrap().starts_with("4,3e-4"));
}
