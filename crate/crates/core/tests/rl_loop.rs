#![allow(clippy::needless_range_loop)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rlse_core::features::{floored_ln, make_chunks, make_context};
use rlse_core::mask::{apply_mask, Codebook, IbmVector};
use rlse_core::nn::{Activation, Network, PolicyModel, Standardizer};
use rlse_core::pipeline::mix::mix_at_snr;
use rlse_core::pipeline::synth::{cry_like_noise, speech_like};
use rlse_core::recognizer::{Audio, Recognizer, Reference};
use rlse_core::rl::{RlConfig, RlTrainer, RlUtterance};
use rlse_core::{FeatureExtractor, Result, StftConfig};

const P: usize = 2;
const F: usize = 3;
const N_MELS: usize = 64;
const A: usize = 4;

struct Constant(f64);

impl Recognizer for Constant {
    fn error_rate(&self, _: &str, _: Audio<'_>, _: &Reference) -> Result<f64> {
        Ok(self.0)
    }
}

/// First call returns `first`, every later call `rest`.
struct Scripted {
    calls: AtomicUsize,
    first: f64,
    rest: f64,
}

impl Recognizer for Scripted {
    fn error_rate(&self, _: &str, _: Audio<'_>, _: &Reference) -> Result<f64> {
        Ok(if self.calls.fetch_add(1, Ordering::SeqCst) == 0 {
            self.first
        } else {
            self.rest
        })
    }
}

fn extractor() -> FeatureExtractor {
    FeatureExtractor::new(StftConfig::default(), N_MELS, 16_000).unwrap()
}

fn utterance(ex: &FeatureExtractor, seed: u64) -> RlUtterance {
    let clean = speech_like(seed, 0.6, 16_000);
    let noise = cry_like_noise(seed + 1, 0.6, 16_000);
    let mix = mix_at_snr(&clean, &noise, 5.0, seed).unwrap();
    let spec = ex.spectrogram(&mix.mixture).unwrap();
    let noisy_chunks = make_chunks(&ex.mel(&mix.mixture).unwrap(), P).unwrap();
    let clean_chunks = make_chunks(&ex.mel(&mix.clean).unwrap(), P).unwrap();
    let contexts = make_context(&noisy_chunks, F).unwrap();
    let n = noisy_chunks.len();
    RlUtterance {
        id: format!("utt{seed}"),
        noisy_len: mix.mixture.len(),
        noisy_spec: spec,
        noisy_chunks,
        clean_chunks,
        contexts,
        oracle_actions: (0..n).map(|c| (c * 3 + 1) % A).collect(),
        reference: Reference::Clean(Arc::new(mix.clean.clone())),
    }
}

fn codebook() -> Codebook {
    let rows: Vec<IbmVector> = (0..A)
        .map(|a| {
            if a == 0 {
                IbmVector::ones(N_MELS)
            } else {
                IbmVector::from_bools(&(0..N_MELS).map(|i| (i / (a + 1)) % 2 == 0).collect::<Vec<_>>())
            }
        })
        .collect();
    Codebook::new(rows, 0, 0).unwrap()
}

fn model() -> PolicyModel {
    let dim = F * P * N_MELS;
    PolicyModel::new(
        Standardizer::identity(dim),
        Network::random(dim, &[8], A, Activation::Softmax, 5).unwrap(),
    )
    .unwrap()
}

fn config() -> RlConfig {
    let mut cfg = RlConfig::default();
    cfg.train.batch_size = 4;
    cfg.train.epochs = 2;
    cfg
}

#[test]
fn constant_recognizer_is_a_fixpoint() {
    let ex = extractor();
    let cb = codebook();
    let rec = Constant(0.42);
    let data: Vec<RlUtterance> = (0..3).map(|s| utterance(&ex, s * 10)).collect();
    let mut m = model();
    let before = m.network.flat_params();
    let mut trainer = RlTrainer::new(config(), &ex, &cb, &rec).unwrap();
    for epoch in 0..2 {
        let stats = trainer.epoch(epoch, &data, &mut m).unwrap();
        assert_eq!(stats.mean_reward, 0.0);
        assert_eq!(stats.loss, 0.0);
        assert_eq!(stats.utterances, 3);
    }
    let outcome = trainer.process(&m, &data[0]).unwrap();
    assert_eq!(outcome.targets, outcome.scores);
    assert!(outcome.chunk_rewards.iter().all(|&r| r == 0.0));
    assert_eq!(m.network.flat_params(), before);
}

/// Normalized squared log error per chunk, recomputed from scratch.
fn expected_normalized_errors(utt: &RlUtterance, cb: &Codebook, predicted: &[usize]) -> Vec<f64> {
    let raw: Vec<f64> = predicted
        .iter()
        .enumerate()
        .map(|(c, &a)| {
            let mask = cb.select(a).unwrap().repeated(P);
            let enhanced = apply_mask(utt.noisy_chunks.chunk(c), &mask).unwrap();
            utt.clean_chunks
                .chunk(c)
                .iter()
                .zip(&enhanced)
                .map(|(s, e)| (floored_ln(*s) - floored_ln(*e)).powi(2))
                .sum()
        })
        .collect();
    let max = raw.iter().cloned().fold(0.0, f64::max);
    raw.iter().map(|e| e / max).collect()
}

#[test]
fn scripted_positive_reward_targets() {
    let ex = extractor();
    let cb = codebook();
    let utt = utterance(&ex, 3);
    let rec = Scripted {
        calls: AtomicUsize::new(0),
        first: 0.5,
        rest: 0.3,
    };
    let trainer = RlTrainer::new(config(), &ex, &cb, &rec).unwrap();
    let out = trainer.process(&model(), &utt).unwrap();
    assert_eq!((out.z_noisy, out.z_enhanced), (0.5, 0.3));
    let big_r = (10.0f64 * 0.2).tanh();
    assert!((out.reward - big_r).abs() < 1e-12);
    let e = expected_normalized_errors(&utt, &cb, &out.predicted);
    for c in 0..out.scores.len() {
        let s = &out.scores[c];
        let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let r_c = (1.0 - e[c]) * big_r;
        let mut want = s.clone();
        want[out.predicted[c]] = r_c + max;
        assert!((out.chunk_rewards[c] - r_c).abs() < 1e-12);
        for (g, w) in out.targets[c].iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "chunk {c}");
        }
    }
}

#[test]
fn scripted_negative_reward_targets() {
    let ex = extractor();
    let cb = codebook();
    let utt = utterance(&ex, 4);
    let rec = Scripted {
        calls: AtomicUsize::new(0),
        first: 0.3,
        rest: 0.5,
    };
    let trainer = RlTrainer::new(config(), &ex, &cb, &rec).unwrap();
    let out = trainer.process(&model(), &utt).unwrap();
    let big_r = (10.0f64 * -0.2).tanh();
    assert!((out.reward - big_r).abs() < 1e-12);
    let e = expected_normalized_errors(&utt, &cb, &out.predicted);
    for c in 0..out.scores.len() {
        let s = &out.scores[c];
        let oracle = utt.oracle_actions[c];
        let r_c = e[c] * big_r;
        let mut want = s.clone();
        want[oracle] = s[oracle] - r_c;
        for (g, w) in out.targets[c].iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "chunk {c}");
        }
        assert!(out.targets[c][oracle] >= s[oracle]);
    }
}

struct Failing;

impl Recognizer for Failing {
    fn error_rate(&self, id: &str, _: Audio<'_>, _: &Reference) -> Result<f64> {
        Err(rlse_core::Error::Recognizer {
            id: id.into(),
            reason: "offline".into(),
        })
    }
}

#[test]
fn epoch_aborts_when_recognizer_fails_everywhere() {
    let ex = extractor();
    let cb = codebook();
    let data = vec![utterance(&ex, 1)];
    let mut m = model();
    let mut trainer = RlTrainer::new(config(), &ex, &cb, &Failing).unwrap();
    assert!(trainer.epoch(0, &data, &mut m).unwrap_err().is_recognizer());
}
