//! Time-domain audio and 16-bit PCM WAV I/O.

use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

const PCM_SCALE: f64 = 32767.0;

/// Mono time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("waveform samples"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean power over the whole signal.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|x| x * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Truncates or zero-pads to exactly `len` samples.
    pub fn resized(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    pub fn read_wav(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let audio_err = |reason: String| Error::Audio {
            path: path.to_path_buf(),
            reason,
        };
        let mut reader = hound::WavReader::open(path).map_err(|e| match e {
            hound::Error::IoError(io) => Error::Io(io),
            other => audio_err(other.to_string()),
        })?;
        let spec = reader.spec();
        if spec.channels != 1 {
            return Err(audio_err(format!("expected mono, found {} channels", spec.channels)));
        }
        if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
            return Err(audio_err(format!(
                "expected 16-bit PCM, found {:?} {} bits",
                spec.sample_format, spec.bits_per_sample
            )));
        }
        if spec.sample_rate != DEFAULT_SAMPLE_RATE {
            return Err(audio_err(format!(
                "expected {} Hz, found {} Hz",
                DEFAULT_SAMPLE_RATE, spec.sample_rate
            )));
        }
        let samples = reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / PCM_SCALE))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| audio_err(e.to_string()))?;
        Self::new(samples, spec.sample_rate)
    }

    /// Writes 16-bit PCM; samples outside [-1, 1] are clipped.
    pub fn write_wav(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let wrap = |e: hound::Error| match e {
            hound::Error::IoError(io) => Error::Io(io),
            other => Error::Audio {
                path: path.to_path_buf(),
                reason: other.to_string(),
            },
        };
        let mut writer = hound::WavWriter::create(path, spec).map_err(wrap)?;
        for &x in &self.samples {
            writer.write_sample(quantize(x)).map_err(wrap)?;
        }
        writer.finalize().map_err(wrap)
    }

    /// Round-trips the samples through 16-bit quantization.
    pub fn quantized(&self) -> Self {
        Self {
            samples: self
                .samples
                .iter()
                .map(|&x| quantize(x) as f64 / PCM_SCALE)
                .collect(),
            sample_rate: self.sample_rate,
        }
    }
}

fn quantize(x: f64) -> i16 {
    (x.clamp(-1.0, 1.0) * PCM_SCALE).round() as i16
}
