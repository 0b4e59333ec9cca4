use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub mixture: Waveform,
    /// Clean component after any anti-clipping gain.
    pub clean: Waveform,
    /// Noise component actually added.
    pub noise: Waveform,
    /// Amplitude scale applied to the noise to hit the SNR.
    pub noise_scale: f64,
    /// Joint gain applied to everything to keep the peak at or below 1.
    pub joint_gain: f64,
}

/// Noise segment of exactly `len` samples: a prefix when long enough,
/// otherwise tiled from a seeded offset.
pub fn fit_noise(noise: &[f64], len: usize, seed: u64) -> Result<Vec<f64>> {
    if noise.is_empty() {
        return Err(Error::invalid("empty noise signal"));
    }
    if noise.len() >= len {
        return Ok(noise[..len].to_vec());
    }
    let offset = ChaCha8Rng::seed_from_u64(seed).gen_range(0..noise.len());
    Ok((0..len).map(|i| noise[(offset + i) % noise.len()]).collect())
}

/// Adds noise scaled so that the clean-to-noise power ratio equals `snr_db`.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr_db: f64, seed: u64) -> Result<Mixture> {
    if !snr_db.is_finite() {
        return Err(Error::NonFinite("snr"));
    }
    let clean_power = clean.power();
    if clean_power == 0.0 {
        return Err(Error::invalid("clean signal is silent"));
    }
    let segment = fit_noise(noise.samples(), clean.len(), seed)?;
    let noise_power = segment.iter().map(|x| x * x).sum::<f64>() / segment.len() as f64;
    if noise_power == 0.0 {
        return Err(Error::invalid("noise segment is silent"));
    }
    let noise_scale = (clean_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt();
    let mut mix: Vec<f64> = clean
        .samples()
        .iter()
        .zip(&segment)
        .map(|(s, n)| s + noise_scale * n)
        .collect();
    let peak = mix.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let joint_gain = if peak > 1.0 { 0.99 / peak } else { 1.0 };
    mix.iter_mut().for_each(|x| *x *= joint_gain);
    let sr = clean.sample_rate();
    Ok(Mixture {
        mixture: Waveform::new(mix, sr)?,
        clean: clean.scaled(joint_gain),
        noise: Waveform::new(
            segment.iter().map(|n| n * noise_scale * joint_gain).collect(),
            sr,
        )?,
        noise_scale,
        joint_gain,
    })
}

pub fn measured_snr_db(clean: &Waveform, noise: &Waveform) -> f64 {
    10.0 * (clean.power() / noise.power()).log10()
}
