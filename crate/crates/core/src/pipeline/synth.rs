//! Synthetic desk-scale corpus: voiced harmonic "speech" with pauses and a
//! non-stationary cry-like noise source.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::Waveform;
use crate::error::Result;

fn raised_cosine_envelope(i: usize, len: usize, ramp: usize) -> f64 {
    let ramp = ramp.min(len / 2).max(1);
    if i < ramp {
        0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos()
    } else if i >= len - ramp {
        0.5 - 0.5 * (PI * (len - i) as f64 / ramp as f64).cos()
    } else {
        1.0
    }
}

fn formant_gain(f: f64, formants: &[(f64, f64)]) -> f64 {
    let resonance: f64 = formants
        .iter()
        .map(|&(centre, bw)| (-((f - centre) / bw).powi(2)).exp())
        .sum();
    (0.05 + resonance) / (1.0 + f / 1000.0)
}

/// Voiced syllables (gliding f0, formant-shaped harmonics) separated by
/// silences. Peak-normalized to 0.5.
pub fn speech_like(seed: u64, duration_secs: f64, sample_rate: u32) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = sample_rate as f64;
    let len = (duration_secs * sr) as usize;
    let mut out = vec![0.0; len];
    let ms = |x: f64| (x * sr / 1000.0) as usize;
    let mut pos = ms(rng.gen_range(60.0..150.0));
    let base_f0 = rng.gen_range(95.0..210.0);
    while pos + ms(80.0) < len {
        let seg = ms(rng.gen_range(120.0..260.0)).min(len - pos);
        let f0_start = base_f0 * rng.gen_range(0.85..1.2);
        let f0_end = f0_start * rng.gen_range(0.8..1.2);
        let formants = [
            (rng.gen_range(300.0..800.0), rng.gen_range(80.0..160.0)),
            (rng.gen_range(900.0..2200.0), rng.gen_range(100.0..200.0)),
            (rng.gen_range(2400.0..3200.0), rng.gen_range(150.0..250.0)),
        ];
        let level = rng.gen_range(0.5..1.0);
        let mut phase = 0.0;
        for i in 0..seg {
            let frac = i as f64 / seg as f64;
            let f0 = f0_start + (f0_end - f0_start) * frac;
            phase += 2.0 * PI * f0 / sr;
            let mut v = 0.0;
            let mut k = 1;
            while k as f64 * f0 < 4000.0 {
                v += formant_gain(k as f64 * f0, &formants) * (k as f64 * phase).sin();
                k += 1;
            }
            out[pos + i] += level * v * raised_cosine_envelope(i, seg, ms(20.0));
        }
        pos += seg;
        // Occasional fricative: differenced noise burst.
        if rng.gen_bool(0.3) && pos + ms(60.0) < len {
            let burst = ms(rng.gen_range(30.0..70.0));
            let mut prev = 0.0;
            for i in 0..burst {
                let w: f64 = rng.gen_range(-1.0..1.0);
                out[pos + i] += 0.08 * (w - prev) * raised_cosine_envelope(i, burst, ms(10.0));
                prev = w;
            }
            pos += burst;
        }
        pos += ms(rng.gen_range(40.0..160.0));
    }
    normalize_peak(out, 0.5, sample_rate)
}

/// Cry-like harmonic bursts with vibrato over a low-level smoothed noise
/// floor. Peak-normalized to 0.5.
pub fn cry_like_noise(seed: u64, duration_secs: f64, sample_rate: u32) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = sample_rate as f64;
    let len = (duration_secs * sr) as usize;
    let ms = |x: f64| (x * sr / 1000.0) as usize;
    let mut out = vec![0.0; len];

    // Background: one-pole low-passed white noise.
    let mut state = 0.0;
    for x in out.iter_mut() {
        state = 0.9 * state + 0.1 * rng.gen_range(-1.0..1.0);
        *x = 0.6 * state + 0.05 * rng.gen_range(-1.0..1.0);
    }

    let mut pos = ms(rng.gen_range(0.0..200.0));
    while pos < len {
        let seg = ms(rng.gen_range(250.0..700.0)).min(len - pos);
        let f0 = rng.gen_range(380.0..560.0);
        let vibrato_hz = rng.gen_range(4.0..8.0);
        let depth = rng.gen_range(0.02..0.06);
        let level = rng.gen_range(0.6..1.0);
        let mut phase = 0.0;
        for i in 0..seg {
            let t = i as f64 / sr;
            let f = f0 * (1.0 + depth * (2.0 * PI * vibrato_hz * t).sin());
            phase += 2.0 * PI * f / sr;
            let mut v = 0.0;
            for k in 1..=10 {
                if k as f64 * f > 7000.0 {
                    break;
                }
                let gain = 1.0 / (1.0 + ((k as f64 * f - 1500.0) / 1200.0).powi(2));
                v += gain * (k as f64 * phase).sin();
            }
            out[pos + i] += level * v * raised_cosine_envelope(i, seg, ms(30.0));
        }
        pos += seg + ms(rng.gen_range(100.0..400.0));
    }
    normalize_peak(out, 0.5, sample_rate)
}

/// Shape of a generated desk-scale corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusSpec {
    pub train: usize,
    pub test: usize,
    pub utterance_secs: f64,
    pub noise_secs: f64,
    pub seed: u64,
    pub sample_rate: u32,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            train: 24,
            test: 8,
            utterance_secs: 1.5,
            noise_secs: 60.0,
            seed: 0,
            sample_rate: crate::audio::DEFAULT_SAMPLE_RATE,
        }
    }
}

pub const NOISE_FILE: &str = "noise.wav";

/// Writes `train/utt_NNN.wav`, `test/utt_NNN.wav` and `noise.wav` under
/// `dir`. Returns the noise file path.
pub fn write_corpus(dir: &Path, spec: &CorpusSpec) -> Result<PathBuf> {
    for (split, count, offset) in [("train", spec.train, 0u64), ("test", spec.test, 1_000_000)] {
        let sub = dir.join(split);
        std::fs::create_dir_all(&sub)?;
        for i in 0..count {
            let seed = spec.seed.wrapping_mul(10_000_019).wrapping_add(offset + i as u64);
            speech_like(seed, spec.utterance_secs, spec.sample_rate)
                .write_wav(sub.join(format!("utt_{i:03}.wav")))?;
        }
    }
    let noise_path = dir.join(NOISE_FILE);
    cry_like_noise(spec.seed ^ 0x5eed_0fc0_ffee, spec.noise_secs, spec.sample_rate)
        .write_wav(&noise_path)?;
    Ok(noise_path)
}

fn normalize_peak(mut samples: Vec<f64>, target: f64, sample_rate: u32) -> Waveform {
    let peak = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        samples.iter_mut().for_each(|x| *x *= target / peak);
    }
    Waveform::new(samples, sample_rate).expect("finite synthetic samples")
}
