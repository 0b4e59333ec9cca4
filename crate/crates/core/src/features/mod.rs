//! Audio ⇄ chunked mel-power feature space.

pub mod chunk;
pub mod mel;
pub mod stft;

pub use chunk::{make_chunks, make_context, ChunkSequence};
pub use mel::{mel_power, MelFilterbank, MelPowerSpectrogram};
pub use rustfft::num_complex::Complex64;
pub use stft::{istft, stft, ComplexSpectrogram, StftConfig, WindowKind};

use crate::audio::Waveform;
use crate::error::{check_dim, Error, Result};

/// Power floor applied before every logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

pub fn floored_ln(x: f64) -> f64 {
    x.max(LOG_FLOOR).ln()
}

pub fn log_features(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| floored_ln(x)).collect()
}

/// Applies per-frame linear-frequency masks to the noisy magnitude, keeps
/// the noisy phase and resynthesizes.
pub fn reconstruct(
    noisy: &ComplexSpectrogram,
    masks: &[Vec<f64>],
    cfg: &StftConfig,
    sample_rate: u32,
) -> Result<Waveform> {
    check_dim("reconstruct masks", noisy.frames(), masks.len())?;
    let mut masked = noisy.clone();
    for (t, mask) in masks.iter().enumerate() {
        check_dim("reconstruct mask bins", noisy.bins(), mask.len())?;
        for (v, &m) in masked.frame_mut(t).iter_mut().zip(mask) {
            *v *= m;
        }
    }
    istft(&masked, cfg, sample_rate)
}

/// Expands chunk-level mel masks into one mel mask per original frame.
/// A mask of length `n_mels` is shared by all `p` frames of its chunk; a
/// mask of length `p * n_mels` is split frame by frame.
pub fn frame_masks(
    chunk_masks: &[Vec<f64>],
    p: usize,
    n_mels: usize,
    frames: usize,
) -> Result<Vec<Vec<f64>>> {
    if chunk_masks.len() * p < frames {
        return Err(Error::invalid(format!(
            "{} chunk masks of {} frames cannot cover {} frames",
            chunk_masks.len(),
            p,
            frames
        )));
    }
    (0..frames)
        .map(|t| {
            let mask = &chunk_masks[t / p];
            if mask.len() == n_mels {
                Ok(mask.clone())
            } else {
                check_dim("chunk mask", p * n_mels, mask.len())?;
                let j = t % p;
                Ok(mask[j * n_mels..(j + 1) * n_mels].to_vec())
            }
        })
        .collect()
}

/// Analysis front end shared by every stage: STFT settings plus filterbank.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub stft: StftConfig,
    pub filterbank: MelFilterbank,
    pub sample_rate: u32,
}

impl FeatureExtractor {
    pub fn new(stft: StftConfig, n_mels: usize, sample_rate: u32) -> Result<Self> {
        stft.validate()?;
        let filterbank = MelFilterbank::new(n_mels, stft.frame_length, sample_rate)?;
        Ok(Self {
            stft,
            filterbank,
            sample_rate,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.filterbank.n_mels()
    }

    pub fn spectrogram(&self, w: &Waveform) -> Result<ComplexSpectrogram> {
        stft(w, &self.stft)
    }

    pub fn mel(&self, w: &Waveform) -> Result<MelPowerSpectrogram> {
        mel_power(&self.spectrogram(w)?, &self.filterbank)
    }

    /// Resynthesizes `noisy` under chunk-level mel masks and returns a
    /// waveform of the same length as `original_len` (zero padded).
    pub fn enhance_with_chunk_masks(
        &self,
        noisy: &ComplexSpectrogram,
        chunk_masks: &[Vec<f64>],
        p: usize,
        original_len: usize,
    ) -> Result<Waveform> {
        let mel_masks = frame_masks(chunk_masks, p, self.n_mels(), noisy.frames())?;
        let linear = mel_masks
            .iter()
            .map(|m| self.filterbank.project_mask(m))
            .collect::<Result<Vec<_>>>()?;
        let out = reconstruct(noisy, &linear, &self.stft, self.sample_rate)?;
        Ok(out.resized(original_len))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        Waveform::new((0..len).map(|_| rng.gen_range(-0.5..0.5)).collect(), 16_000).unwrap()
    }

    #[test]
    fn ones_mask_is_plain_resynthesis() {
        let cfg = StftConfig::default();
        let spec = stft(&noise(8000), &cfg).unwrap();
        let ones = vec![vec![1.0; spec.bins()]; spec.frames()];
        let a = reconstruct(&spec, &ones, &cfg, 16_000).unwrap();
        let b = istft(&spec, &cfg, 16_000).unwrap();
        assert_eq!(a, b);
        let zeros = vec![vec![0.0; spec.bins()]; spec.frames()];
        let z = reconstruct(&spec, &zeros, &cfg, 16_000).unwrap();
        assert!(z.samples().iter().all(|&x| x == 0.0));
        assert!(reconstruct(&spec, &ones[1..], &cfg, 16_000).is_err());
    }

    #[test]
    fn frame_masks_split_and_share() {
        let split = frame_masks(&[vec![1.0, 2.0, 3.0, 4.0]], 2, 2, 2).unwrap();
        assert_eq!(split, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let shared = frame_masks(&[vec![1.0, 0.0], vec![0.0, 1.0]], 2, 2, 3).unwrap();
        assert_eq!(shared, vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(frame_masks(&[vec![1.0; 3]], 2, 2, 2).is_err());
        assert!(frame_masks(&[vec![1.0; 2]], 1, 2, 2).is_err());
    }

    #[test]
    fn floored_log() {
        assert_eq!(floored_ln(0.0), LOG_FLOOR.ln());
        assert_eq!(floored_ln(1.0), 0.0);
    }
}
