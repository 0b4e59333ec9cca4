//! Triangular mel filterbank and mel power spectrogram.

use crate::error::{check_dim, Error, Result};
use crate::features::stft::ComplexSpectrogram;

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// `n_mels` triangular filters with unit peak spaced uniformly on the mel
/// scale between 0 Hz and Nyquist.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    n_mels: usize,
    bins: usize,
    weights: Vec<f64>,
    centers_hz: Vec<f64>,
    dominant: Vec<usize>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, frame_length: usize, sample_rate: u32) -> Result<Self> {
        if n_mels == 0 {
            return Err(Error::invalid("n_mels must be positive"));
        }
        if frame_length < 2 {
            return Err(Error::invalid("frame_length must be at least 2"));
        }
        let bins = frame_length / 2 + 1;
        let nyquist = sample_rate as f64 / 2.0;
        let bin_hz = sample_rate as f64 / frame_length as f64;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();

        let mut weights = vec![0.0; n_mels * bins];
        for m in 0..n_mels {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let row = &mut weights[m * bins..(m + 1) * bins];
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                let rising = (f - lo) / (mid - lo);
                let falling = (hi - f) / (hi - mid);
                *w = rising.min(falling).max(0.0);
            }
            if row.iter().all(|&w| w <= 0.0) {
                let nearest = ((mid / bin_hz).round() as usize).min(bins - 1);
                row[nearest] = 1.0;
            }
        }
        let centers_hz = edges[1..=n_mels].to_vec();

        // Each bin follows the band with the largest weight (lowest index on
        // ties); bins outside every filter follow the nearest band centre.
        let dominant = (0..bins)
            .map(|k| {
                let mut best = None;
                let mut best_w = 0.0;
                for m in 0..n_mels {
                    let w = weights[m * bins + k];
                    if w > best_w {
                        best_w = w;
                        best = Some(m);
                    }
                }
                best.unwrap_or_else(|| {
                    let f = k as f64 * bin_hz;
                    let mut nearest = 0;
                    for (m, c) in centers_hz.iter().enumerate() {
                        if (c - f).abs() < (centers_hz[nearest] - f).abs() {
                            nearest = m;
                        }
                    }
                    nearest
                })
            })
            .collect();

        Ok(Self {
            n_mels,
            bins,
            weights,
            centers_hz,
            dominant,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.bins..(m + 1) * self.bins]
    }

    pub fn weight(&self, m: usize, k: usize) -> f64 {
        self.weights[m * self.bins + k]
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Band whose mask value each linear bin inherits.
    pub fn dominant_bands(&self) -> &[usize] {
        &self.dominant
    }

    /// Applies the filterbank to one frame of per-bin power.
    pub fn apply(&self, power: &[f64]) -> Result<Vec<f64>> {
        check_dim("filterbank input", self.bins, power.len())?;
        Ok((0..self.n_mels)
            .map(|m| self.row(m).iter().zip(power).map(|(w, p)| w * p).sum())
            .collect())
    }

    /// Maps a mel-band mask to a per-bin linear-frequency mask.
    pub fn project_mask(&self, mel_mask: &[f64]) -> Result<Vec<f64>> {
        check_dim("mel mask", self.n_mels, mel_mask.len())?;
        Ok(self.dominant.iter().map(|&m| mel_mask[m]).collect())
    }
}

/// Frames × n_mels matrix of nonnegative power values.
#[derive(Debug, Clone, PartialEq)]
pub struct MelPowerSpectrogram {
    n_mels: usize,
    data: Vec<f64>,
}

impl MelPowerSpectrogram {
    pub fn new(n_mels: usize, data: Vec<f64>) -> Result<Self> {
        if n_mels == 0 || !data.len().is_multiple_of(n_mels) {
            return Err(Error::invalid(format!(
                "{} values do not form rows of {} mel bands",
                data.len(),
                n_mels
            )));
        }
        if data.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid("mel power must be finite and nonnegative"));
        }
        Ok(Self { n_mels, data })
    }

    pub fn from_frames(frames: &[Vec<f64>]) -> Result<Self> {
        let n_mels = frames.first().map(Vec::len).unwrap_or(0);
        Self::new(n_mels, frames.concat())
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn frames(&self) -> usize {
        self.data.len() / self.n_mels
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_mels..(t + 1) * self.n_mels]
    }

    pub fn iter_frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_mels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

pub fn mel_power(spec: &ComplexSpectrogram, fb: &MelFilterbank) -> Result<MelPowerSpectrogram> {
    check_dim("mel_power bins", fb.bins(), spec.bins())?;
    let mut data = Vec::with_capacity(spec.frames() * fb.n_mels());
    let mut power = vec![0.0; spec.bins()];
    for t in 0..spec.frames() {
        for (p, v) in power.iter_mut().zip(spec.frame(t)) {
            *p = v.norm_sqr();
        }
        data.extend(fb.apply(&power)?);
    }
    Ok(MelPowerSpectrogram {
        n_mels: fb.n_mels(),
        data,
    })
}
