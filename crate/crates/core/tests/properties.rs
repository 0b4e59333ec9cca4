use proptest::prelude::*;

use rlse_core::features::{
    istft, mel_power, stft, Complex64, ComplexSpectrogram, MelFilterbank, StftConfig,
};
use rlse_core::mask::{compute_ibm, hamming_distance, Codebook, IbmVector};
use rlse_core::nn::argmax_action;
use rlse_core::recognizer::{Request, Response};
use rlse_core::rl::{chunk_reward, update_action};
use rlse_core::Waveform;

fn ibm(len: usize) -> impl Strategy<Value = IbmVector> {
    proptest::collection::vec(any::<bool>(), len).prop_map(|b| IbmVector::from_bools(&b))
}

fn ibm_triple() -> impl Strategy<Value = (IbmVector, IbmVector, IbmVector)> {
    (1usize..200).prop_flat_map(|n| (ibm(n), ibm(n), ibm(n)))
}

proptest! {
    #[test]
    fn hamming_is_a_metric((a, b, c) in ibm_triple()) {
        let ab = hamming_distance(&a, &b).unwrap();
        prop_assert_eq!(hamming_distance(&a, &a).unwrap(), 0);
        prop_assert_eq!(ab, hamming_distance(&b, &a).unwrap());
        prop_assert!(ab <= hamming_distance(&a, &c).unwrap() + hamming_distance(&c, &b).unwrap());
        prop_assert!(ab <= a.len());
        let naive = a.iter().zip(b.iter()).filter(|(x, y)| x != y).count();
        prop_assert_eq!(ab, naive);
    }

    #[test]
    fn codebook_select_then_nearest(rows in proptest::collection::btree_set(proptest::collection::vec(any::<bool>(), 12), 2..10), pick in any::<prop::sample::Index>()) {
        let centroids: Vec<IbmVector> = rows.iter().map(|r| IbmVector::from_bools(r)).collect();
        let cb = Codebook::new(centroids, 0, 0).unwrap();
        let a = pick.index(cb.len());
        prop_assert_eq!(cb.nearest(cb.select(a).unwrap()).unwrap(), a);
    }

    #[test]
    fn stft_round_trip_interior(samples in proptest::collection::vec(-1.0f64..1.0, 512..6000)) {
        let cfg = StftConfig::default();
        let x = Waveform::new(samples, 16_000).unwrap();
        let spec = stft(&x, &cfg).unwrap();
        let y = istft(&spec, &cfg, 16_000).unwrap();
        let range = cfg.interior(spec.frames());
        let mut num = 0.0;
        let mut den = 0.0;
        for i in range {
            num += (x.samples()[i] - y.samples()[i]).powi(2);
            den += x.samples()[i].powi(2);
        }
        prop_assert!(den == 0.0 || (num / den).sqrt() < 1e-6);
    }

    #[test]
    fn mel_power_is_linear_in_power(
        frames in 1usize..4,
        seed in proptest::collection::vec(0.0f64..2.0, 257 * 3),
        other in proptest::collection::vec(0.0f64..2.0, 257 * 3),
        k in 0.0f64..5.0,
    ) {
        let fb = MelFilterbank::new(64, 512, 16_000).unwrap();
        let to_spec = |p: &[f64]| {
            let values: Vec<Complex64> = p[..frames * 257].iter().map(|v| Complex64::new(v.sqrt(), 0.0)).collect();
            ComplexSpectrogram::new(frames, 257, values).unwrap()
        };
        let sum: Vec<f64> = seed.iter().zip(&other).map(|(a, b)| a + k * b).collect();
        let ma = mel_power(&to_spec(&seed), &fb).unwrap();
        let mb = mel_power(&to_spec(&other), &fb).unwrap();
        let ms = mel_power(&to_spec(&sum), &fb).unwrap();
        for ((a, b), s) in ma.data().iter().zip(mb.data()).zip(ms.data()) {
            prop_assert!((a + k * b - s).abs() <= 1e-9 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn ibm_is_scale_invariant(
        pairs in proptest::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..100),
        k in 1e-3f64..1e3,
    ) {
        let (clean, noise): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let scaled_c: Vec<f64> = clean.iter().map(|v| v * k).collect();
        let scaled_n: Vec<f64> = noise.iter().map(|v| v * k).collect();
        let a = compute_ibm(&clean, &noise).unwrap();
        let b = compute_ibm(&scaled_c, &scaled_n).unwrap();
        for (i, (x, y)) in a.iter().zip(b.iter()).enumerate() {
            // Equality ties can flip under rounding; every other bit must agree.
            if (clean[i] * k - noise[i] * k).abs() > 1e-9 * (clean[i] + noise[i]) * k {
                prop_assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn chunk_reward_between_zero_and_reward(e in 0.0f64..=1.0, r in -1.0f64..1.0) {
        let rc = chunk_reward(e, r).unwrap();
        prop_assert!(rc.abs() <= r.abs() + 1e-15);
        prop_assert!(rc == 0.0 || rc.signum() == r.signum());
    }

    #[test]
    fn update_action_touches_one_coordinate(
        scores in proptest::collection::vec(-2.0f64..2.0, 2..40),
        pred in any::<prop::sample::Index>(),
        oracle in any::<prop::sample::Index>(),
        r in -1.0f64..1.0,
        e in 0.0f64..=1.0,
    ) {
        let (p, o) = (pred.index(scores.len()), oracle.index(scores.len()));
        let rc = chunk_reward(e, r).unwrap();
        let target = update_action(&scores, p, o, rc, r).unwrap();
        let changed: Vec<usize> = (0..scores.len()).filter(|&i| target[i] != scores[i]).collect();
        prop_assert!(changed.len() <= 1);
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if r > 0.0 {
            prop_assert!(target[p] >= max);
            prop_assert!(changed.iter().all(|&i| i == p));
        } else if r < 0.0 {
            prop_assert!(target[o] >= scores[o]);
            prop_assert!(changed.iter().all(|&i| i == o));
        } else {
            prop_assert!(changed.is_empty());
        }
    }

    #[test]
    fn negative_reward_moves_argmax_toward_oracle(
        scores in proptest::collection::vec(-1.0f64..1.0, 2..8),
        oracle in any::<prop::sample::Index>(),
        r in -1.0f64..-1e-6,
        e in 0.0f64..=1.0,
    ) {
        let o = oracle.index(scores.len());
        let before = argmax_action(&scores).unwrap();
        prop_assume!(before != o);
        let rc = chunk_reward(e, r).unwrap();
        let target = update_action(&scores, before, o, rc, r).unwrap();
        let after = argmax_action(&target).unwrap();
        prop_assert!(after == before || after == o);
    }

    #[test]
    fn protocol_round_trip(id in "\\PC{0,20}", wav in "\\PC{0,40}", text in proptest::option::of("\\PC{0,30}"), err in proptest::option::of("\\PC{0,30}")) {
        let req = Request { id: id.clone(), wav };
        let line = req.to_line();
        prop_assert!(!line.contains('\n'));
        prop_assert_eq!(serde_json::from_str::<Request>(&line).unwrap(), req);
        let resp = Response { id, transcript: text, error: err };
        let line = resp.to_line();
        prop_assert!(!line.contains('\n'));
        prop_assert_eq!(Response::parse(&line).unwrap(), resp);
    }
}
