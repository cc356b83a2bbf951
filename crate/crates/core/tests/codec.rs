use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spacdc::codec::{self, CodecConfig, ReturnedResult};
use spacdc::RealMatrix;

fn random(rows: usize, cols: usize, seed: u64) -> RealMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RealMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn identity_results(shares: &[codec::EncodedShare], keep: impl Fn(usize) -> bool) -> Vec<ReturnedResult> {
    shares
        .iter()
        .filter(|s| keep(s.worker_index))
        .map(|s| ReturnedResult { worker_index: s.worker_index, payload: s.payload.clone() })
        .collect()
}

/// Textbook scalar barycentric interpolant with alternating weights over
/// nodes sorted ascending, written independently of the library.
fn berrut_scalar(nodes: &[f64], values: &[f64], z: f64) -> f64 {
    let mut pairs: Vec<(f64, f64)> = nodes.iter().copied().zip(values.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let (mut num, mut den) = (0.0, 0.0);
    for (i, (x, y)) in pairs.iter().enumerate() {
        if z == *x {
            return *y;
        }
        let w = if i % 2 == 0 { 1.0 } else { -1.0 } / (z - x);
        num += w * y;
        den += w;
    }
    num / den
}

#[test]
fn every_nonempty_subset_decodes() {
    let cfg = CodecConfig::default_anchors(8, 2, 1).unwrap();
    let blocks = vec![random(3, 2, 1), random(3, 2, 2)];
    let masks = codec::gen_masks(1, 3, 2, 1.0, 3);
    let shares = codec::encode(&blocks, &masks, &cfg).unwrap();
    for mask in 1u32..256 {
        let results = identity_results(&shares, |i| mask >> i & 1 == 1);
        let out = codec::recover(&results, &cfg).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(RealMatrix::is_finite), "subset {mask:08b}");
    }
}

#[test]
fn identity_decode_matches_scalar_oracle() {
    let cfg = CodecConfig::default_anchors(12, 4, 0).unwrap();
    let x = random(8, 3, 4);
    let blocks = x.partition_rows(4).unwrap();
    let shares = codec::encode(&blocks, &[], &cfg).unwrap();
    let out = codec::recover(&identity_results(&shares, |_| true), &cfg).unwrap();
    for (j, h) in out.iter().enumerate() {
        for r in 0..h.rows() {
            for c in 0..h.cols() {
                let values: Vec<f64> = shares.iter().map(|s| s.payload.get(r, c)).collect();
                let want = berrut_scalar(&cfg.alpha, &values, cfg.beta[j]);
                assert!((h.get(r, c) - want).abs() < 1e-12);
            }
        }
        let rel = h.sub(&blocks[j]).unwrap().max_abs() / blocks[j].max_abs();
        // Twelve Chebyshev workers against four anchors: first-order accuracy.
        assert!(rel < 0.5, "block {j}: {rel}");
    }
}

#[test]
fn more_results_do_not_hurt_median_error() {
    let cfg = CodecConfig::default_anchors(16, 2, 1).unwrap();
    let mut full = Vec::new();
    let mut half = Vec::new();
    for trial in 0..40u64 {
        let x = random(6, 4, 100 + trial);
        let blocks = x.partition_rows(2).unwrap();
        let masks = codec::gen_masks(1, 3, 4, 1.0, trial);
        let shares = codec::encode(&blocks, &masks, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let mut idx: Vec<usize> = (0..16).collect();
        rand::seq::SliceRandom::shuffle(&mut idx[..], &mut rng);
        let kept: Vec<usize> = idx[..8].to_vec();
        let err = |res: Vec<ReturnedResult>| {
            let out = codec::recover(&res, &cfg).unwrap();
            out.iter()
                .zip(&blocks)
                .map(|(h, b)| h.sub(b).unwrap().frobenius() / b.frobenius())
                .fold(0.0, f64::max)
        };
        full.push(err(identity_results(&shares, |_| true)));
        half.push(err(identity_results(&shares, |i| kept.contains(&i))));
    }
    let med = |v: &[f64]| spacdc::stats::median(v).unwrap();
    assert!(med(&full) <= med(&half), "{} vs {}", med(&full), med(&half));
}

#[test]
fn anchors_reproduce_masks_too() {
    let cfg = CodecConfig::default_anchors(10, 3, 2).unwrap();
    let blocks: Vec<RealMatrix> = (0..3).map(|j| random(2, 2, j)).collect();
    let masks = codec::gen_masks(2, 2, 2, 50.0, 9);
    for (j, want) in blocks.iter().chain(&masks).enumerate() {
        let got = codec::evaluate_encoder(&blocks, &masks, &cfg.beta, cfg.beta[j]).unwrap();
        assert!(got.sub(want).unwrap().max_abs() <= 1e-9 * want.max_abs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decode_weights_partition_unity(n in 1usize..=32, subset: u32, z in -2.0f64..2.0) {
        let cfg = CodecConfig::default_anchors(n, 1, 0).unwrap();
        let mut idx: Vec<usize> = (0..n).filter(|i| subset >> i & 1 == 1).collect();
        if idx.is_empty() {
            idx.push(0);
        }
        let w = codec::decode_weights(&idx, &cfg, z).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decode_is_linear_in_results(seed: u64, a in -2.0f64..2.0) {
        let cfg = CodecConfig::default_anchors(6, 2, 0).unwrap();
        let r1: Vec<ReturnedResult> = (0..6).map(|i| ReturnedResult { worker_index: i, payload: random(2, 2, seed ^ i as u64) }).collect();
        let r2: Vec<ReturnedResult> = r1.iter().map(|r| ReturnedResult { worker_index: r.worker_index, payload: r.payload.scale(a) }).collect();
        let h1 = codec::recover(&r1, &cfg).unwrap();
        let h2 = codec::recover(&r2, &cfg).unwrap();
        for (x, y) in h1.iter().zip(&h2) {
            prop_assert!(x.scale(a).sub(y).unwrap().max_abs() < 1e-12);
        }
    }
}
