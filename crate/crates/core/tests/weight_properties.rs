use ggea_core::edge_weight::{diffbir_weight_map, ggea_weight_map};
use ggea_core::losses::{ggea_loss, l1_loss};
use ggea_core::pipeline::{ensemble, restore_one, EnsembleConfig, ReferenceRestorer};
use ggea_core::{ImageTensor, Shape};
use proptest::prelude::*;

fn smooth(h: usize, w: usize, fx: f32, fy: f32, phase: f32) -> ImageTensor {
    ImageTensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| {
        0.5 + 0.2 * ((fx * x as f32 + phase + c as f32).sin() * (fy * y as f32).cos())
    })
    .unwrap()
}

fn shift_right_down(img: &ImageTensor, d: usize) -> ImageTensor {
    ImageTensor::from_fn(img.shape(), |n, c, y, x| {
        img.get(n, c, y.saturating_sub(d), x.saturating_sub(d))
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn contrast_never_lowers_weights(
        h in 4usize..24, w in 4usize..24,
        fx in 0.05f32..1.5, fy in 0.05f32..1.5, phase in 0.0f32..6.0,
        s in 1.1f32..2.0,
    ) {
        let base = smooth(h, w, fx, fy, phase);
        let boosted = base.map(|v| 0.5 + s * (v - 0.5)).unwrap();
        prop_assert!(boosted.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let a = ggea_weight_map(&base).unwrap();
        let b = ggea_weight_map(&boosted).unwrap();
        for (x, y) in a.tensor().data().iter().zip(b.tensor().data()) {
            prop_assert!(y >= x, "{y} < {x}");
        }
    }

    #[test]
    fn maps_ignore_the_other_image(seed in 0u64..1000, h in 2usize..12, w in 2usize..12) {
        let gt = smooth(h, w, 0.3, 0.2, seed as f32 * 0.01);
        let p1 = smooth(h, w, 0.9, 0.4, 1.0);
        let p2 = p1.map(|v| 1.0 - v).unwrap();
        let wmap = ggea_weight_map(&gt).unwrap();
        // the loss for either prediction uses the same ground-truth map
        let l1 = ggea_loss(&p1, &gt, &wmap).unwrap();
        let l2 = ggea_loss(&p2, &gt, &wmap).unwrap();
        prop_assert!(l1 >= 0.0 && l2 >= 0.0);
        prop_assert_eq!(ggea_weight_map(&gt).unwrap(), wmap);
        prop_assert_eq!(diffbir_weight_map(&p1).unwrap(), diffbir_weight_map(&p1).unwrap());
    }

    #[test]
    fn ggea_loss_bounded_by_channel_sum(h in 2usize..16, w in 2usize..16, ph in 0.0f32..6.0) {
        let gt = smooth(h, w, 0.8, 0.6, ph);
        let pred = smooth(h, w, 0.2, 1.1, 2.0 * ph);
        let wmap = ggea_weight_map(&gt).unwrap();
        let g = ggea_loss(&pred, &gt, &wmap).unwrap();
        prop_assert!(g <= 3.0 * l1_loss(&pred, &gt).unwrap() + 1e-12);
    }

    #[test]
    fn identity_restore_exact_where_feasible(h in 5usize..80, w in 5usize..80, m in prop::sample::select(vec![8usize, 64])) {
        let img = smooth(h, w, 0.4, 0.3, 0.5);
        match restore_one(&ReferenceRestorer::Identity, &img, m) {
            Ok(out) => prop_assert_eq!(out, img),
            Err(_) => prop_assert!(h.next_multiple_of(m) - h > h - 1 || w.next_multiple_of(m) - w > w - 1),
        }
    }

    #[test]
    fn ensemble_bounded(wa in 0.0f64..=1.0, ph in 0.0f32..6.0) {
        let cfg = EnsembleConfig::new(wa, 1.0 - wa).unwrap();
        let a = smooth(7, 9, 0.5, 0.9, ph);
        let b = smooth(7, 9, 1.3, 0.2, -ph);
        let f = ensemble(&a, &b, &cfg).unwrap();
        for ((x, y), z) in a.data().iter().zip(b.data()).zip(f.data()) {
            prop_assert!(x.min(*y) <= *z && *z <= x.max(*y));
        }
    }
}

#[test]
fn translation_by_two_pixels_barely_moves_the_loss() {
    let gt = smooth(64, 64, 0.1, 0.07, 0.3);
    let pred = gt
        .zip_map(&smooth(64, 64, 0.05, 0.11, 1.7), |g, n| g + 0.1 * (n - 0.5))
        .unwrap();
    let before = ggea_loss(&pred, &gt, &ggea_weight_map(&gt).unwrap()).unwrap();
    let (gt2, pred2) = (shift_right_down(&gt, 2), shift_right_down(&pred, 2));
    let after = ggea_loss(&pred2, &gt2, &ggea_weight_map(&gt2).unwrap()).unwrap();
    assert!((before - after).abs() < 1e-3, "{before} vs {after}");
}
