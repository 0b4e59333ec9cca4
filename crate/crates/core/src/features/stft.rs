//! Short-time Fourier analysis and weighted overlap-add synthesis.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    #[default]
    PeriodicHann,
    Rectangular,
}

impl WindowKind {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::PeriodicHann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
            WindowKind::Rectangular => vec![1.0; len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftConfig {
    pub frame_length: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    /// 32 ms frames with a 16 ms shift at 16 kHz.
    fn default() -> Self {
        Self {
            frame_length: 512,
            hop: 256,
            window: WindowKind::PeriodicHann,
        }
    }
}

impl StftConfig {
    pub fn bins(&self) -> usize {
        self.frame_length / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_length < 2 || self.hop == 0 || self.hop > self.frame_length {
            return Err(Error::invalid(format!(
                "need 0 < hop <= frame_length, got hop={} frame_length={}",
                self.hop, self.frame_length
            )));
        }
        if !satisfies_cola(&self.window.coefficients(self.frame_length), self.hop) {
            return Err(Error::invalid(format!(
                "{:?} window of length {} is not constant-overlap-add at hop {}",
                self.window, self.frame_length, self.hop
            )));
        }
        Ok(())
    }

    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.frame_length {
            0
        } else {
            1 + (len - self.frame_length) / self.hop
        }
    }

    /// Length of the signal produced by overlap-adding `frames` frames.
    pub fn synthesis_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.frame_length
        }
    }

    /// Sample range covered by the full overlap of `frame_length / hop` frames.
    pub fn interior(&self, frames: usize) -> std::ops::Range<usize> {
        let start = self.frame_length - self.hop;
        let end = frames * self.hop;
        start..end.max(start)
    }
}

/// True when shifted copies of `window` sum to a constant.
pub fn satisfies_cola(window: &[f64], hop: usize) -> bool {
    if hop == 0 || hop > window.len() {
        return false;
    }
    let sums: Vec<f64> = (0..hop)
        .map(|offset| window.iter().skip(offset).step_by(hop).sum())
        .collect();
    let reference = sums[0];
    reference > 0.0 && sums.iter().all(|s| (s - reference).abs() <= 1e-9 * reference)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    frames: usize,
    bins: usize,
    values: Vec<Complex64>,
}

impl ComplexSpectrogram {
    pub fn new(frames: usize, bins: usize, values: Vec<Complex64>) -> Result<Self> {
        check_dim("spectrogram values", frames * bins, values.len())?;
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("spectrogram"));
        }
        Ok(Self {
            frames,
            bins,
            values,
        })
    }

    pub fn zeros(frames: usize, bins: usize) -> Self {
        Self {
            frames,
            bins,
            values: vec![Complex64::new(0.0, 0.0); frames * bins],
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.values[t * self.bins..(t + 1) * self.bins]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Complex64] {
        &mut self.values[t * self.bins..(t + 1) * self.bins]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Per-bin power `|X|^2`, frames × bins row-major.
    pub fn power(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }
}

pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    let n = cfg.frame_length;
    if w.len() < n {
        return Err(Error::TooShort { len: w.len(), min: n });
    }
    let frames = cfg.frame_count(w.len());
    let bins = cfg.bins();
    let window = cfg.window.coefficients(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let samples = w.samples();

    let mut values = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for t in 0..frames {
        let offset = t * cfg.hop;
        for (k, slot) in buf.iter_mut().enumerate() {
            *slot = Complex64::new(samples[offset + k] * window[k], 0.0);
        }
        fft.process(&mut buf);
        values.extend_from_slice(&buf[..bins]);
    }
    Ok(ComplexSpectrogram {
        frames,
        bins,
        values,
    })
}

/// Weighted overlap-add: each inverse frame is multiplied by the synthesis
/// window and the sum is divided by the accumulated squared window. Samples
/// whose squared-window sum is below `1e-10` are set to zero.
pub fn istft(spec: &ComplexSpectrogram, cfg: &StftConfig, sample_rate: u32) -> Result<Waveform> {
    cfg.validate()?;
    check_dim("istft bins", cfg.bins(), spec.bins)?;
    let n = cfg.frame_length;
    let len = cfg.synthesis_len(spec.frames);
    let window = cfg.window.coefficients(n);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);

    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for t in 0..spec.frames {
        let frame = spec.frame(t);
        buf[..spec.bins].copy_from_slice(frame);
        for k in spec.bins..n {
            buf[k] = frame[n - k].conj();
        }
        // DC and Nyquist of a real signal are real.
        buf[0].im = 0.0;
        if n.is_multiple_of(2) {
            buf[n / 2].im = 0.0;
        }
        ifft.process(&mut buf);
        let offset = t * cfg.hop;
        for k in 0..n {
            out[offset + k] += buf[k].re / n as f64 * window[k];
            norm[offset + k] += window[k] * window[k];
        }
    }
    for (x, w2) in out.iter_mut().zip(&norm) {
        *x = if *w2 > 1e-10 { *x / w2 } else { 0.0 };
    }
    Waveform::new(out, sample_rate)
}
