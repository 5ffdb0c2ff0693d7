mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use robosumm::changepoint::{kts_segment, min_segment_len, pool_rows, unpool_boundaries, KtsParams};
use robosumm::model::{FrameRate, ScoredSegment, SegmentRef};
use robosumm::numerics::{cosine_sim, pca_fit, pca_project};
use robosumm::providers::uniform_subsample;
use robosumm::select::{greedy_diverse, knapsack_select, topk_chrono};

fn rel_err(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(1e-300)
}

#[test]
fn jacobi_oracle_diagonalizes() {
    let a = vec![vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 1.0]];
    let (vals, v) = jacobi_eigen(&a);
    for k in 0..3 {
        for i in 0..3 {
            let av: f64 = (0..3).map(|j| a[i][j] * v[j][k]).sum();
            assert!((av - vals[k] * v[i][k]).abs() < 1e-10);
        }
    }
    assert!((vals.iter().sum::<f64>() - 8.0).abs() < 1e-12);
}

#[test]
fn pca_matches_jacobi_oracle() {
    let mut r = rng(10);
    for case in 0..8 {
        let (n, d) = (r.random_range(12..60), r.random_range(3..16));
        let x = spectral_matrix(&mut r, n, d);
        let dims = d.min(n - 1).min(6);
        let m = pca_fit(&x, dims).unwrap();
        let o = oracle_pca(&x, dims);
        let top = o.variances[0];
        for k in 0..dims {
            assert!(rel_err(m.explained_variance[k], o.variances[k], top) < 1e-9, "case {case} variance {k}");
        }
        let y = pca_project(&m, &x).unwrap();
        for (row, yr) in x.iter().zip(&y) {
            let want = o.project(row);
            for k in 0..dims {
                assert!((yr[k] - want[k]).abs() < 1e-7 * top.sqrt(), "case {case} projection {k}");
            }
        }
    }
}

#[test]
fn pca_reconstruction_is_exact_at_full_rank() {
    let mut r = rng(3);
    let x = spectral_matrix(&mut r, 30, 5);
    let m = pca_fit(&x, 5).unwrap();
    for row in &x {
        let back = m.reconstruct_row(&m.project_row(row));
        for (a, b) in back.iter().zip(row) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn kts_matches_exhaustive_search() {
    let mut r = rng(21);
    let rate = FrameRate::whole(10);
    let params = KtsParams { min_segment_s: 0.4, penalty: 1.0, max_change_points: None };
    let min_len = min_segment_len(params.min_segment_s, rate);
    assert_eq!(min_len, 4);
    for case in 0..12 {
        let n = r.random_range(8..28);
        let cut = r.random_range(4..=n - 4);
        let (x, _) = block_stream(&mut r, &[cut, n - cut], 4, 0.3);
        let got = kts_segment(&x, rate, &params).unwrap();
        let (obj, cuts) = exhaustive_kts(&x, min_len, params.penalty);
        assert!((got.objective - obj).abs() < 1e-9 * obj.abs().max(1.0), "case {case}: {} vs {obj}", got.objective);
        assert_eq!(got.boundaries, cuts.iter().map(|&c| c as u64).collect::<Vec<_>>(), "case {case}");
    }
}

#[test]
fn kts_recovers_planted_blocks() {
    let mut r = rng(5);
    let rate = FrameRate::whole(10);
    for _ in 0..10 {
        let lens: Vec<usize> = (0..r.random_range(2..=4)).map(|_| r.random_range(30..120)).collect();
        let (x, truth) = block_stream(&mut r, &lens, 16, 0.05);
        let got = kts_segment(&x, rate, &KtsParams::default()).unwrap();
        assert_eq!(got.boundaries.len(), truth.len());
        for (g, t) in got.boundaries.iter().zip(&truth) {
            assert!((*g as i64 - *t as i64).abs() <= 1);
        }
    }
}

#[test]
fn pooled_boundaries_land_on_stride_multiples() {
    let mut r = rng(8);
    let (x, truth) = block_stream(&mut r, &[150, 300, 150], 8, 0.05);
    let pooled = pool_rows(&x, 15);
    assert_eq!(pooled.len(), 40);
    let kts = kts_segment(&pooled, FrameRate::whole(1), &KtsParams::default()).unwrap();
    let back = unpool_boundaries(&kts.boundaries, 15);
    assert_eq!(back, truth.iter().map(|&t| t as u64).collect::<Vec<_>>());
}

fn items_from(durs: &[u64], scores: &[f64]) -> Vec<ScoredSegment> {
    let rate = FrameRate::whole(1);
    let mut start = 0;
    durs.iter()
        .zip(scores)
        .map(|(&d, &score)| {
            let s = ScoredSegment { segment: SegmentRef::new(start, start + d, rate).unwrap(), score };
            start += d;
            s
        })
        .collect()
}

#[test]
fn knapsack_matches_brute_force() {
    let mut r = rng(44);
    for case in 0..40 {
        let n = r.random_range(1..=12);
        let durs: Vec<u64> = (0..n).map(|_| r.random_range(1..=20)).collect();
        let scores: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let budget = r.random_range(1..=(durs.iter().sum::<u64>() + 5)) as f64;
        let items = items_from(&durs, &scores);
        let sel = knapsack_select(&items, budget, 1.0).unwrap();
        let got: f64 = sel.indices.iter().map(|&i| scores[i]).sum();
        let used: u64 = sel.indices.iter().map(|&i| durs[i]).sum();
        let pairs: Vec<(f64, f64)> = durs.iter().map(|&d| d as f64).zip(scores.iter().copied()).collect();
        assert!((got - brute_knapsack(&pairs, budget)).abs() < 1e-9, "case {case}");
        assert!(used as f64 <= budget);
    }
}

#[test]
fn greedy_matches_replay() {
    let mut r = rng(2);
    for _ in 0..50 {
        let n = r.random_range(1..40);
        let emb: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let scores: Vec<f64> = (0..n).map(|_| (r.random_range(0..5) as f64) / 4.0).collect();
        let delta = r.random_range(0.0..1.0);
        let k = r.random_range(1..10);
        let sel = greedy_diverse(&scores, &emb, delta, k).unwrap();
        assert_eq!(sel.indices, replay_greedy(&scores, &emb, delta, k));
    }
}

fn embeddings() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..30, 1usize..6).prop_flat_map(|(n, d)| {
        prop::collection::vec(
            prop_oneof![
                4 => prop::collection::vec(-1.0f64..1.0, d),
                1 => Just(vec![0.0; d]),
            ],
            n,
        )
    })
}

proptest! {
    #[test]
    fn greedy_invariants(emb in embeddings(), seed in any::<u64>(), delta in 0.0f64..=1.0, k in 1usize..30) {
        let mut r = rng(seed);
        let scores: Vec<f64> = emb.iter().map(|_| r.random_range(-1.0..1.0)).collect();
        let sel = greedy_diverse(&scores, &emb, delta, k).unwrap();
        prop_assert!(sel.indices.len() <= k);
        prop_assert!(sel.indices.windows(2).all(|w| w[0] < w[1]));
        for (a, &i) in sel.indices.iter().enumerate() {
            for &j in &sel.indices[a + 1..] {
                prop_assert!(cosine(&emb[i], &emb[j]) < delta);
            }
        }
        prop_assert_eq!(&sel.indices, &replay_greedy(&scores, &emb, delta, k));
    }

    #[test]
    fn knapsack_respects_budget(durs in prop::collection::vec(1u64..30, 0..14), budget in 1.0f64..200.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let scores: Vec<f64> = durs.iter().map(|_| r.random_range(-0.2..1.0)).collect();
        let items = items_from(&durs, &scores);
        let sel = knapsack_select(&items, budget, 1.0).unwrap();
        let used: u64 = sel.indices.iter().map(|&i| durs[i]).sum();
        prop_assert!(used as f64 <= budget + 1e-9);
        prop_assert!(sel.indices.iter().all(|&i| scores[i] > 0.0));
        prop_assert!(sel.indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn topk_is_chronological_top_scores(scores in prop::collection::vec(-5.0f64..5.0, 1..40), k in 1usize..10) {
        let durs = vec![8u64; scores.len()];
        let items = items_from(&durs, &scores);
        let sel = topk_chrono(&items, k).unwrap();
        prop_assert_eq!(sel.indices.len(), k.min(scores.len()));
        prop_assert!(sel.indices.windows(2).all(|w| w[0] < w[1]));
        let worst_in = sel.indices.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
        for i in 0..scores.len() {
            if !sel.indices.contains(&i) {
                prop_assert!(scores[i] <= worst_in);
            }
        }
    }

    #[test]
    fn kts_segments_tile_the_stream(lens in prop::collection::vec(3usize..25, 1..4), seed in any::<u64>()) {
        let mut r = rng(seed);
        let (x, _) = block_stream(&mut r, &lens, 5, 0.1);
        let rate = FrameRate::whole(3);
        let res = kts_segment(&x, rate, &KtsParams::default()).unwrap();
        let min_len = min_segment_len(1.0, rate) as u64;
        prop_assert_eq!(res.segments.first().map(|s| s.start), Some(0));
        prop_assert_eq!(res.segments.last().map(|s| s.end), Some(x.len() as u64));
        for w in res.segments.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
        }
        if res.segments.len() > 1 {
            prop_assert!(res.segments.iter().all(|s| s.len() >= min_len));
        }
    }

    #[test]
    fn cosine_is_bounded_and_symmetric(u in prop::collection::vec(-10.0f64..10.0, 4), v in prop::collection::vec(-10.0f64..10.0, 4)) {
        let a = cosine_sim(u.as_slice(), v.as_slice());
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&a));
        prop_assert!((a - cosine_sim(v.as_slice(), u.as_slice())).abs() < 1e-12);
        prop_assert!((a - cosine(&u, &v)).abs() < 1e-9);
    }

    #[test]
    fn subsample_is_bounded_and_increasing(n in 0usize..5000, cap in 1usize..200) {
        let idx = uniform_subsample(n, cap);
        prop_assert_eq!(idx.len(), n.min(cap));
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        if n > 0 {
            prop_assert_eq!(idx[0], 0);
        }
        if n > 0 && (cap > 1 || n == 1) {
            prop_assert_eq!(*idx.last().unwrap(), n - 1);
        }
    }
}
