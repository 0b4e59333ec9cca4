//! Benchmark fixtures built from the synthetic signal generators.

use rlse_core::features::{make_chunks, make_context, log_features};
use rlse_core::mask::compute_ibm;
use rlse_core::pipeline::mix::mix_at_snr;
use rlse_core::pipeline::synth::{cry_like_noise, speech_like};
use rlse_core::{FeatureExtractor, IbmVector, StftConfig, Waveform};

pub const SAMPLE_RATE: u32 = 16_000;
pub const N_MELS: usize = 64;
pub const P: usize = 2;
pub const CONTEXT: usize = 5;

pub fn extractor() -> FeatureExtractor {
    FeatureExtractor::new(StftConfig::default(), N_MELS, SAMPLE_RATE).unwrap()
}

/// A 5 dB mixture of `secs` seconds.
pub fn mixture(secs: f64, seed: u64) -> (Waveform, Waveform, Waveform) {
    let clean = speech_like(seed, secs, SAMPLE_RATE);
    let noise = cry_like_noise(seed + 1, secs, SAMPLE_RATE);
    let m = mix_at_snr(&clean, &noise, 5.0, seed).unwrap();
    (m.clean, m.noise, m.mixture)
}

/// Chunk-level ideal masks from `utterances` one-second mixtures.
pub fn chunk_masks(utterances: u64) -> Vec<IbmVector> {
    let ex = extractor();
    let mut out = Vec::new();
    for seed in 0..utterances {
        let (clean, noise, _) = mixture(1.0, seed * 2);
        let c = make_chunks(&ex.mel(&clean).unwrap(), P).unwrap();
        let n = make_chunks(&ex.mel(&noise).unwrap(), P).unwrap();
        for i in 0..c.len() {
            out.push(compute_ibm(c.chunk(i), n.chunk(i)).unwrap());
        }
    }
    out
}

/// Log-feature contexts of one noisy mixture.
pub fn contexts(secs: f64) -> Vec<Vec<f64>> {
    let ex = extractor();
    let (_, _, mixed) = mixture(secs, 3);
    let chunks = make_chunks(&ex.mel(&mixed).unwrap(), P).unwrap();
    make_context(&chunks, CONTEXT)
        .unwrap()
        .iter()
        .map(|c| log_features(c))
        .collect()
}
