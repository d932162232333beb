use proptest::prelude::*;
use timesuite_core::ops;
use timesuite_core::rng::{seeded, uniform_tensor, uniform_vec};
use timesuite_core::token_shuffle::{
    compress, efficient_init, mean_pool_compress, merge_adjacent, split_merged, ShuffleConfig, ShuffleParams,
};
use timesuite_core::video::{encode_video, segment, uniform_sample, MockEncoder, SamplingPlan};
use timesuite_core::Tensor2D;

fn pow2_m() -> impl Strategy<Value = usize> {
    prop_oneof![Just(1usize), Just(2), Just(4), Just(8)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn efficient_init_is_mean_pooling(m in pow2_m(), groups in 1usize..24, c_q in 1usize..17, c_l in 1usize..9, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let v = uniform_tensor(&mut rng, groups * m, c_q, 2.0);
        let w0 = uniform_tensor(&mut rng, c_l, c_q, 1.0);
        let b0 = uniform_vec(&mut rng, c_l, 1.0);
        let params = efficient_init(&w0, &b0, m).unwrap();
        let got = compress(&v, &params).unwrap();
        let want = mean_pool_compress(&v, m, &w0, &b0).unwrap();
        prop_assert_eq!(got.shape(), (groups, c_l));
        prop_assert!(got.max_abs_diff(&want).unwrap() <= 1e-12);
    }

    #[test]
    fn merge_is_a_concatenating_reshape(m in 1usize..6, groups in 1usize..10, c in 1usize..6, seed in any::<u64>()) {
        let v = uniform_tensor(&mut seeded(seed), groups * m, c, 1.0);
        let merged = merge_adjacent(&v, m).unwrap();
        for i in 0..groups {
            let concat: Vec<f64> = (i * m..(i + 1) * m).flat_map(|r| v.row(r).to_vec()).collect();
            prop_assert_eq!(merged.row(i), &concat[..]);
        }
        prop_assert_eq!(split_merged(&merged, m).unwrap(), v);
    }

    #[test]
    fn sampling_is_in_range_and_ordered(total in 1usize..5000, k in 1usize..20, t in 1usize..10) {
        let plan = SamplingPlan { total_frames_available: total, k, t, n: 1 };
        let idx = uniform_sample(&plan).unwrap();
        prop_assert_eq!(idx.len(), k * t);
        prop_assert!(idx.iter().all(|&i| i < total));
        prop_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
        if total >= k * t {
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        }
        let clips = segment(&idx, k, t).unwrap();
        prop_assert_eq!(clips.concat(), idx);
    }
}

#[test]
fn mismatched_lengths_are_rejected() {
    let v = Tensor2D::zeros(6, 3);
    assert!(merge_adjacent(&v, 4).is_err());
    let w0 = Tensor2D::zeros(2, 3);
    assert!(efficient_init(&w0, &[0.0], 2).is_err());
    assert!(efficient_init(&w0, &[0.0, 0.0], 0).is_err());
}

#[test]
fn random_init_is_not_mean_pooling() {
    let mut rng = seeded(5);
    let v = uniform_tensor(&mut rng, 16, 4, 1.0);
    let w0 = uniform_tensor(&mut rng, 3, 4, 1.0);
    let b0 = vec![0.0; 3];
    let params = ShuffleParams::random(ShuffleConfig { m: 4, c_q: 4, c_l: 3 }, 6).unwrap();
    let diff = compress(&v, &params).unwrap().max_abs_diff(&mean_pool_compress(&v, 4, &w0, &b0).unwrap()).unwrap();
    assert!(diff > 1e-3);
}

#[test]
fn video_to_compressed_tokens() {
    let plan = SamplingPlan { total_frames_available: 3000, k: 16, t: 8, n: 96 };
    let enc = MockEncoder { seed: 1, n: 96, c_q: 8 };
    let v_q = encode_video(&plan, &enc).unwrap();
    assert_eq!(v_q.shape(), (1536, 8));
    assert_eq!(v_q, encode_video(&plan, &enc).unwrap());
    let w0 = uniform_tensor(&mut seeded(2), 12, 8, 1.0);
    let params = efficient_init(&w0, &[0.0; 12], 4).unwrap();
    assert_eq!(compress(&v_q, &params).unwrap().shape(), (384, 12));
    assert_eq!(ops::linear(&v_q, &w0, &[0.0; 12]).unwrap().rows(), 1536);
}
