//! Objective quality measures.

use crate::error::{check_dim, Error, Result};
use crate::features::MelPowerSpectrogram;

/// Per-frame SNR bounds in dB.
pub const SEGSNR_MIN_DB: f64 = -10.0;
pub const SEGSNR_MAX_DB: f64 = 35.0;

/// Mean of per-frame SNRs over non-overlapping frames of `frame_len`
/// samples, each clamped to [-10, 35] dB. Signals are trimmed to the
/// shorter length; a trailing partial frame is ignored.
pub fn segmental_snr(clean: &[f64], estimate: &[f64], frame_len: usize) -> Result<f64> {
    if frame_len == 0 {
        return Err(Error::invalid("frame length must be positive"));
    }
    let len = clean.len().min(estimate.len());
    let frames = len / frame_len;
    if frames == 0 {
        return Err(Error::TooShort {
            len,
            min: frame_len,
        });
    }
    let total: f64 = (0..frames)
        .map(|f| {
            let range = f * frame_len..(f + 1) * frame_len;
            let signal: f64 = clean[range.clone()].iter().map(|x| x * x).sum();
            let error: f64 = clean[range.clone()]
                .iter()
                .zip(&estimate[range])
                .map(|(s, e)| (s - e).powi(2))
                .sum();
            let snr = if error == 0.0 {
                SEGSNR_MAX_DB
            } else if signal == 0.0 {
                SEGSNR_MIN_DB
            } else {
                10.0 * (signal / error).log10()
            };
            snr.clamp(SEGSNR_MIN_DB, SEGSNR_MAX_DB)
        })
        .sum();
    Ok(total / frames as f64)
}

/// Default dynamic range below the reference peak kept by
/// [`log_spectral_distance`].
pub const LSD_DYNAMIC_RANGE_DB: f64 = 50.0;

/// Mean over frames of the RMS difference (dB) between the log mel power
/// of `estimate` and `reference`. Both are floored at the reference peak
/// power minus `dynamic_range_db`. Frame counts are trimmed to the shorter.
pub fn log_spectral_distance(
    estimate: &MelPowerSpectrogram,
    reference: &MelPowerSpectrogram,
    dynamic_range_db: f64,
) -> Result<f64> {
    check_dim("lsd mel bands", reference.n_mels(), estimate.n_mels())?;
    let peak = reference.data().iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::invalid("reference is silent"));
    }
    let frames = estimate.frames().min(reference.frames());
    if frames == 0 {
        return Err(Error::invalid("no frames to compare"));
    }
    let floor = peak * 10f64.powf(-dynamic_range_db / 10.0);
    let db = |x: f64| 10.0 * x.max(floor).log10();
    let total: f64 = (0..frames)
        .map(|t| {
            let sq: f64 = estimate
                .frame(t)
                .iter()
                .zip(reference.frame(t))
                .map(|(&e, &r)| (db(e) - db(r)).powi(2))
                .sum();
            (sq / reference.n_mels() as f64).sqrt()
        })
        .sum();
    Ok(total / frames as f64)
}

/// `(baseline - system) / baseline` in percent.
pub fn relative_reduction(baseline: f64, system: f64) -> Result<f64> {
    if baseline == 0.0 || !baseline.is_finite() || !system.is_finite() {
        return Err(Error::invalid("relative reduction needs a finite nonzero baseline"));
    }
    Ok(100.0 * (baseline - system) / baseline)
}

/// Linear-interpolated percentile (`q` in [0, 100]) of unsorted values.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData("percentile of no values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 100.0) / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}
