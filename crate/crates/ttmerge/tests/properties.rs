//! Randomized invariants for the parameter, probability, coefficient,
//! model and dynamic-merging layers.

use proptest::prelude::*;

use ttmerge::coefficient::{
    batch_lambda, coefficient_for, extrapolate, lambda_from_mi, CoefficientConfig, Policy,
};
use ttmerge::dynamic::{precompute_lambdas, predict_t3_batched, ForwardCounter};
use ttmerge::models::{train, Architecture, Dataset, Split, TrainConfig};
use ttmerge::params::{
    decode_checkpoint, encode_checkpoint, lerp_params, slerp_params, task_arithmetic, ties_merge,
    ParameterMap, Tensor,
};
use ttmerge::prob::{
    confidence_ratio, entropy_ratio, js_divergence, js_via_entropy, kl_divergence, softmax,
    LogitVector, ProbVector,
};
use ttmerge::rng::SplitMix64;
use ttmerge::Error;

const LN_2: f64 = std::f64::consts::LN_2;

fn map_of(tensors: &[(&str, Vec<usize>, Vec<f32>)]) -> ParameterMap {
    let mut m = ParameterMap::new();
    for (name, shape, data) in tensors {
        m.insert(*name, Tensor::new(shape.clone(), data.clone()).unwrap()).unwrap();
    }
    m
}

/// Two aligned maps with a matrix and a bias tensor.
fn aligned_pair() -> impl Strategy<Value = (ParameterMap, ParameterMap)> {
    (1usize..5, 1usize..5).prop_flat_map(|(r, c)| {
        let w = proptest::collection::vec(-4.0f32..4.0, r * c);
        let b = proptest::collection::vec(-4.0f32..4.0, r);
        (w.clone(), b.clone(), w, b).prop_map(move |(w1, b1, w2, b2)| {
            (
                map_of(&[("l.W", vec![r, c], w1), ("l.b", vec![r], b1)]),
                map_of(&[("l.W", vec![r, c], w2), ("l.b", vec![r], b2)]),
            )
        })
    })
}

fn simplex(c: usize) -> impl Strategy<Value = ProbVector> {
    proptest::collection::vec(-8.0f64..8.0, c)
        .prop_map(|z| softmax(&LogitVector::new(z).unwrap()))
}

fn simplex_pair() -> impl Strategy<Value = (ProbVector, ProbVector)> {
    prop_oneof![Just(2usize), Just(4), Just(8)].prop_flat_map(|c| (simplex(c), simplex(c)))
}

fn flat(m: &ParameterMap) -> Vec<f64> {
    m.flatten()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn lerp_is_affine((a, b) in aligned_pair(), l in 0.0f64..=1.0) {
        let x = flat(&lerp_params(&a, &b, l).unwrap());
        let y = flat(&lerp_params(&a, &b, 1.0 - l).unwrap());
        for ((xi, yi), (ai, bi)) in x.iter().zip(&y).zip(flat(&a).iter().zip(&flat(&b))) {
            prop_assert!((xi + yi - (ai + bi)).abs() <= 1e-6 * (1.0 + (ai + bi).abs()));
        }
    }

    #[test]
    fn slerp_hits_endpoints((a, b) in aligned_pair()) {
        for (t, want) in [(0.0, &a), (1.0, &b)] {
            let got = flat(&slerp_params(&a, &b, t).unwrap());
            let w = flat(want);
            let diff: Vec<f64> = got.iter().zip(&w).map(|(x, y)| x - y).collect();
            prop_assert!(norm(&diff) <= 1e-7 * norm(&w).max(1.0));
        }
    }

    #[test]
    fn slerp_keeps_unit_norm(
        u in proptest::collection::vec(-1.0f64..1.0, 6),
        v in proptest::collection::vec(-1.0f64..1.0, 6),
        t in 0.0f64..=1.0,
    ) {
        let (nu, nv) = (norm(&u), norm(&v));
        prop_assume!(nu > 1e-3 && nv > 1e-3);
        let unit = |x: &[f64], n: f64| x.iter().map(|y| (y / n) as f32).collect::<Vec<f32>>();
        let a = map_of(&[("v", vec![6], unit(&u, nu))]);
        let b = map_of(&[("v", vec![6], unit(&v, nv))]);
        // Nearly antipodal pairs are rejected as a domain error.
        match slerp_params(&a, &b, t) {
            Ok(s) => prop_assert!((norm(&flat(&s)) - 1.0).abs() <= 1e-6),
            Err(e) => prop_assert!(matches!(e, Error::Domain(_))),
        }
    }

    #[test]
    fn ties_full_keep_is_expert((a, b) in aligned_pair()) {
        prop_assert!(ties_merge(&a, &b, 1.0, 1.0).unwrap().bit_eq(&b));
    }

    #[test]
    fn task_arithmetic_is_lerp((a, b) in aligned_pair(), s in 0.0f64..=1.0) {
        let x = flat(&task_arithmetic(&a, &b, s).unwrap());
        let y = flat(&lerp_params(&a, &b, s).unwrap());
        for (xi, yi) in x.iter().zip(&y) {
            prop_assert!((xi - yi).abs() <= 1e-6);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact((a, _) in aligned_pair()) {
        let bytes = encode_checkpoint(&a);
        let back = decode_checkpoint(&bytes).unwrap();
        prop_assert!(back.bit_eq(&a));
        prop_assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn misaligned_maps_always_raise((a, _) in aligned_pair(), extra in 1usize..4) {
        let b = map_of(&[("other", vec![extra], vec![0.0; extra])]);
        prop_assert!(matches!(lerp_params(&a, &b, 0.5), Err(Error::Alignment(_))));
        prop_assert!(matches!(slerp_params(&a, &b, 0.5), Err(Error::Alignment(_))));
        prop_assert!(matches!(ties_merge(&a, &b, 0.2, 1.0), Err(Error::Alignment(_))));
    }

    #[test]
    fn js_is_bounded_and_matches_entropy_form((p, q) in simplex_pair()) {
        let js = js_divergence(&p, &q).unwrap();
        prop_assert!((0.0..=LN_2 + 1e-9).contains(&js));
        prop_assert!((js - js_via_entropy(&p, &q).unwrap()).abs() <= 1e-8);
        let gap = p.as_slice().iter().zip(q.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap >= 1e-6 {
            prop_assert!(js > 0.0);
        }
        prop_assert!(js_divergence(&p, &p).unwrap() < 1e-9);
    }

    #[test]
    fn kl_is_non_negative((p, q) in simplex_pair()) {
        prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-9);
        prop_assert!(kl_divergence(&p, &p).unwrap() < 1e-9);
    }

    #[test]
    fn ratios_ignore_logit_shifts(
        z1 in proptest::collection::vec(-6.0f64..6.0, 4),
        z2 in proptest::collection::vec(-6.0f64..6.0, 4),
        shift in -50.0f64..50.0,
    ) {
        let sm = |z: &[f64], s: f64| softmax(&LogitVector::new(z.iter().map(|v| v + s).collect()).unwrap());
        let (p, q) = (sm(&z1, 0.0), sm(&z2, 0.0));
        let (ps, qs) = (sm(&z1, shift), sm(&z2, shift));
        prop_assert!((entropy_ratio(&p, &q).unwrap() - entropy_ratio(&ps, &qs).unwrap()).abs() <= 1e-9);
        prop_assert!((confidence_ratio(&p, &q).unwrap() - confidence_ratio(&ps, &qs).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn lambda_is_monotone_on_sorted_draws(mut xs in proptest::collection::vec(0.0f64..LN_2, 1000)) {
        let cfg = CoefficientConfig::default();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let ls: Vec<f64> = xs.iter().map(|&i| lambda_from_mi(i, &cfg).unwrap()).collect();
        for w in ls.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
        prop_assert!(ls.iter().all(|&l| (0.5..=2.0 / 3.0).contains(&l)));
    }

    #[test]
    fn extrapolation_stays_in_unit_interval(l in 0.0f64..=1.0, hp in 0.0f64..3.0, hf in 0.0f64..3.0, delta in 0.0f64..=1.0) {
        let cfg = CoefficientConfig { delta, ..CoefficientConfig::default() };
        let out = extrapolate(l, hp, hf, &cfg).unwrap();
        prop_assert!((0.0..=1.0).contains(&out));
        if hp >= cfg.tau_pt && hf >= cfg.tau_ft {
            prop_assert_eq!(out, l);
        }
    }

    #[test]
    fn batch_lambda_ignores_order(xs in proptest::collection::vec(0.0f64..=1.0, 1..200), seed in any::<u64>()) {
        let mut shuffled = xs.clone();
        SplitMix64::new(seed).shuffle(&mut shuffled);
        prop_assert!((batch_lambda(&xs).unwrap() - batch_lambda(&shuffled).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn coefficient_for_is_pure((p, q) in simplex_pair(), policy in prop_oneof![
        Just(Policy::JsSigmoid), Just(Policy::EntropyRatio), Just(Policy::Fixed(0.3))
    ]) {
        let cfg = CoefficientConfig::with_policy(policy);
        let a = coefficient_for(7, &p, &q, &cfg).unwrap();
        let b = coefficient_for(7, &p, &q, &cfg).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0).contains(&a.lambda_raw) && (0.0..=1.0).contains(&a.lambda_prime));
    }
}

fn blobs(seed: u64, n: usize, d: usize, c: usize) -> Dataset {
    let mut rng = SplitMix64::new(seed);
    let y: Vec<u32> = (0..n).map(|_| rng.below(c) as u32).collect();
    let x = y
        .iter()
        .flat_map(|&k| {
            let mut row: Vec<f32> = (0..d).map(|_| (0.7 * rng.next_gaussian()) as f32).collect();
            row[k as usize % d] += 2.0;
            row
        })
        .collect();
    Dataset::new(x, y, d, c, Split::Test).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn training_is_deterministic_and_aligned(seed in any::<u64>(), hidden in 0usize..4) {
        let data = blobs(seed, 60, 4, 3);
        let arch = if hidden == 0 { Architecture::Linear } else { Architecture::Mlp { hidden: 2 + hidden } };
        let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
        let a = train(&data, &cfg, &mut SplitMix64::new(seed), arch).unwrap();
        let b = train(&data, &cfg, &mut SplitMix64::new(seed), arch).unwrap();
        prop_assert!(a.bit_eq(&b));
        let c = train(&data, &cfg, &mut SplitMix64::new(seed ^ 1), arch).unwrap();
        prop_assert!(a.is_aligned(&c));
    }

    #[test]
    fn batch_means_stay_inside_their_batch(seed in any::<u64>(), n in 1usize..90, bs in 1usize..40, delta in 0.0f64..=1.0) {
        let data = blobs(seed, n, 4, 3);
        let cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
        let pt = train(&data, &cfg, &mut SplitMix64::new(seed), Architecture::Linear).unwrap();
        let ft = train(&data, &cfg, &mut SplitMix64::new(seed.wrapping_add(1)), Architecture::Linear).unwrap();
        let coef = CoefficientConfig { delta, ..CoefficientConfig::default() };
        let mut counter = ForwardCounter::default();
        let run = predict_t3_batched(&pt, &ft, &data, &coef, bs, &mut counter).unwrap();
        prop_assert_eq!(run.batch_means.len(), n.div_ceil(bs));
        for (mean, chunk) in run.batch_means.iter().zip(run.records.chunks(bs)) {
            let lo = chunk.iter().map(|r| r.lambda_prime).fold(f64::INFINITY, f64::min);
            let hi = chunk.iter().map(|r| r.lambda_prime).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= *mean && *mean <= hi);
        }
        let cache = precompute_lambdas(&pt, &ft, &data, &coef, bs).unwrap();
        prop_assert_eq!(cache.per_sample.len(), n);
        prop_assert_eq!(cache.per_batch_means.len(), n.div_ceil(bs));
        for (mean, chunk) in cache.per_batch_means.iter().zip(cache.per_sample.chunks(bs)) {
            let ls: Vec<f64> = chunk.iter().map(|r| r.lambda_prime).collect();
            prop_assert!((mean - batch_lambda(&ls).unwrap()).abs() <= 1e-12);
        }
    }
}

#[test]
fn confident_disagreement_is_isolated() {
    let p = ProbVector::new(vec![0.99, 0.01]).unwrap();
    let q = ProbVector::new(vec![0.01, 0.99]).unwrap();
    assert!((entropy_ratio(&p, &q).unwrap() - 0.5).abs() <= 1e-6);
    assert!(js_divergence(&p, &q).unwrap() > 0.9 * LN_2);
}

#[test]
fn counters_only_grow() {
    let data = blobs(5, 70, 4, 3);
    let cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
    let pt = train(&data, &cfg, &mut SplitMix64::new(1), Architecture::Linear).unwrap();
    let ft = train(&data, &cfg, &mut SplitMix64::new(2), Architecture::Linear).unwrap();
    let coef = CoefficientConfig::default();
    let mut counter = ForwardCounter::default();
    let mut prev = counter;
    for bs in [1, 7, 32, 100] {
        predict_t3_batched(&pt, &ft, &data, &coef, bs, &mut counter).unwrap();
        assert!(counter.batch_forwards >= prev.batch_forwards);
        assert!(counter.sample_forwards >= prev.sample_forwards);
        assert!(counter.merges > prev.merges);
        prev = counter;
    }
}
