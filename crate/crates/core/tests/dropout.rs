mod common;

use std::collections::BTreeMap;

use mcme::dropout::*;
use mcme::tensor::Tensor;
use proptest::prelude::*;

fn overlap(m: &MaskSet) -> usize {
    let mut total = 0;
    for i in 0..m.num_masks {
        for j in i + 1..m.num_masks {
            total += (0..m.feature_count).filter(|&f| m.masks[i][f] == 1 && m.masks[j][f] == 1).count();
        }
    }
    total
}

#[test]
fn mcd_keep_fraction_within_three_sigma() {
    let n = 100_000usize;
    for keep in [0.5, 0.625, 0.75, 0.875] {
        let x = Tensor::vector(vec![1.0; n]);
        let y = mcd_forward(&x, keep, Granularity::Element, &mut RngStream::new(17, 0, "site"), false).unwrap();
        let kept = y.data().iter().filter(|&&v| v != 0.0).count() as f64;
        let sigma = (n as f64 * keep * (1.0 - keep)).sqrt();
        assert!((kept - n as f64 * keep).abs() <= 3.0 * sigma, "keep {}: {}", keep, kept);
    }
}

#[test]
fn mcd_streams_are_independent_of_draw_order() {
    let s = RngStream::new(5, 3, "a");
    let mut seq = s.clone();
    let forward: Vec<f64> = (0..64).map(|_| seq.next_uniform()).collect();
    let backward: Vec<f64> = (0..64).rev().map(|n| s.uniform_at(n)).collect();
    assert!(forward.iter().eq(backward.iter().rev()));
    // distinct layer ids and sample indices give distinct streams
    assert_ne!(RngStream::new(5, 3, "b").word(0), s.word(0));
    assert_ne!(RngStream::new(5, 4, "a").word(0), s.word(0));
}

#[test]
fn masks_are_deterministic_and_equal_sized() {
    for (f, n) in [(8, 4), (16, 4), (12, 3)] {
        for s in [1.0, 1.5, 2.0, 3.0] {
            let a = generate_masks(f, n, s).unwrap();
            assert_eq!(a, generate_masks(f, n, s).unwrap());
            let k = a.popcount(0);
            assert!(k > 0);
            assert!((0..n).all(|i| a.popcount(i) == k));
            a.check().unwrap();
            let x = Tensor::vector((0..f).map(|i| i as f32 + 1.0).collect());
            for i in 0..n {
                assert!(masksembles_forward(&x, i, &a).unwrap().bit_eq(&masksembles_forward(&x, i, &a).unwrap()));
            }
        }
    }
}

#[test]
fn overlap_grows_with_scale() {
    for (f, n) in [(8usize, 4usize), (16, 4), (12, 3)] {
        let mut prev = 0;
        let mut s = 1.0;
        while s <= n as f64 {
            let o = overlap(&generate_masks(f, n, s).unwrap());
            assert!(o >= prev, "F={} N={} s={}", f, n, s);
            prev = o;
            s += 0.25;
        }
        assert!(prev > 0);
    }
}

#[test]
fn unit_scale_partitions_features() {
    for (f, n) in [(8, 4), (16, 4), (12, 3), (6, 6)] {
        let m = generate_masks(f, n, 1.0).unwrap();
        for j in 0..f {
            assert_eq!((0..n).map(|i| m.masks[i][j] as usize).sum::<usize>(), 1);
        }
    }
}

#[test]
fn mask_table_file_round_trips() {
    let mut t = BTreeMap::new();
    t.insert("exit1_drop_fc".to_string(), generate_masks(8, 4, 2.0).unwrap());
    t.insert("exit2_drop_fc".to_string(), generate_masks(12, 3, 1.0).unwrap());
    let text = mask_tables_to_json(&t);
    assert_eq!(parse_mask_tables(&text).unwrap(), t);
    assert_eq!(mask_tables_to_json(&parse_mask_tables(&text).unwrap()), text);
}

proptest! {
    #[test]
    fn survivors_are_scaled_exactly(
        xs in prop::collection::vec(-100.0f32..100.0, 1..200),
        keep_idx in 0usize..4,
        seed: u64,
        inverted: bool,
    ) {
        let keep = [0.5, 0.625, 0.75, 0.875][keep_idx];
        let x = Tensor::vector(xs.clone());
        let y = mcd_forward(&x, keep, Granularity::Element, &mut RngStream::new(seed, 1, "d"), inverted).unwrap();
        let scale = if inverted { (1.0 / keep) as f32 } else { keep as f32 };
        for (a, b) in xs.iter().zip(y.data()) {
            prop_assert!(*b == 0.0 || *b == a * scale);
        }
    }

    #[test]
    fn popcounts_agree_for_any_valid_config(f in 1usize..40, n_raw in 1usize..10, s in 1.0f64..6.0) {
        let n = n_raw.min(f);
        let m = generate_masks(f, n, s).unwrap();
        let k = m.popcount(0);
        prop_assert!(k >= 1 && k <= f);
        prop_assert!((0..n).all(|i| m.popcount(i) == k));
    }
}
