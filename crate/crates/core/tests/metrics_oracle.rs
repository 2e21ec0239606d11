mod common;

use cbctseg::metrics::{edt_sq, extract_surface, hd95, MetricOptions};
use cbctseg::{flip_axis, Spacing};
use common::*;
use proptest::prelude::*;

const SPACINGS: [[f64; 3]; 3] = [[0.3, 0.5, 1.0], [0.3, 0.3, 0.3], [1.1, 0.7, 0.25]];

#[test]
fn edt_equals_brute_force_exactly() {
    let mut r = rng(11);
    for (k, s) in SPACINGS.iter().enumerate() {
        let sp = Spacing(*s);
        for i in 0..40 {
            let fill = [0.02, 0.1, 0.4][i % 3];
            let m = random_mask(&mut r, 12, sp, fill);
            if m.count() == 0 {
                continue;
            }
            let got = edt_sq(&m).unwrap();
            assert_eq!(got.data(), &brute_edt_sq(&m)[..], "spacing #{k} case {i}");
        }
    }
}

#[test]
fn surface_matches_definition() {
    let mut r = rng(3);
    for _ in 0..50 {
        let m = random_mask(&mut r, 9, Spacing([1.0; 3]), 0.5);
        assert_eq!(extract_surface(&m), brute_surface(&m));
    }
}

#[test]
fn hd95_matches_pairwise_oracle() {
    let mut r = rng(5);
    let opts = MetricOptions::default();
    for i in 0..60 {
        let sp = Spacing(SPACINGS[i % 3]);
        let a = random_mask(&mut r, 10, sp, 0.15);
        let b = random_mask_dims(&mut r, a.dims(), sp, 0.15);
        if a.count() == 0 || b.count() == 0 {
            continue;
        }
        let got = hd95(&a, &b, &opts).unwrap();
        let want = brute_hd(&a, &b, 0.95);
        assert!((got - want).abs() <= 1e-9, "case {i}: {got} vs {want}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hd95_symmetric_and_scales(seed in any::<u64>(), k in 0.5f64..4.0) {
        let mut r = rng(seed);
        let sp = Spacing([0.3, 0.5, 1.0]);
        let a = random_mask(&mut r, 7, sp, 0.2);
        let b = random_mask_dims(&mut r, a.dims(), sp, 0.2);
        let opts = MetricOptions::default();
        let ab = hd95(&a, &b, &opts).unwrap();
        prop_assert_eq!(ab, hd95(&b, &a, &opts).unwrap());
        prop_assert!(ab <= a.diagonal_mm() + 1e-12);

        let sk = sp.scaled(k).unwrap();
        let a2 = a.map(|&v| v);
        let a2 = cbctseg::Volume::new(a2.dims(), sk, a2.into_data()).unwrap();
        let b2 = cbctseg::Volume::new(b.dims(), sk, b.data().to_vec()).unwrap();
        let scaled = hd95(&a2, &b2, &opts).unwrap();
        prop_assert!((scaled - k * ab).abs() <= 1e-9 * (1.0 + k * ab));
    }

    #[test]
    fn hd95_flip_invariant(seed in any::<u64>(), axis in 0usize..3) {
        let mut r = rng(seed);
        let sp = Spacing([0.3, 0.5, 1.0]);
        let a = random_mask(&mut r, 7, sp, 0.2);
        let b = random_mask_dims(&mut r, a.dims(), sp, 0.2);
        let opts = MetricOptions::default();
        let fa = flip_axis(&a, axis).unwrap();
        let fb = flip_axis(&b, axis).unwrap();
        prop_assert_eq!(hd95(&a, &b, &opts).unwrap(), hd95(&fa, &fb, &opts).unwrap());
    }
}
