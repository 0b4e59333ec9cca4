//! Scoring of enhanced test sets and report emission.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::mask::Codebook;
use crate::metrics::{relative_reduction, segmental_snr};
use crate::pipeline::config::ExperimentConfig;
use crate::pipeline::dataset::{load_rows, DatasetManifest, Split};
use crate::pipeline::enhance::enhanced_path;
use crate::pipeline::stages::reference_for;
use crate::recognizer::{lsd_between, Audio, RecognizerEndpoint};

pub const NOISY: &str = "noisy";
pub const REPORT_FILE: &str = "report.csv";
pub const PER_UTTERANCE_FILE: &str = "per_utterance.csv";
pub const PLOTS_DIR: &str = "plots";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub snr_db: f64,
    pub id: String,
    pub system: String,
    pub error_rate: f64,
    pub segsnr_db: f64,
    pub lsd_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub snr_db: f64,
    pub system: String,
    pub utterances: usize,
    pub mean_error_rate: f64,
    pub mean_segsnr_db: f64,
    pub mean_lsd_db: f64,
    /// Relative error-rate reduction against the noisy input, percent.
    pub relative_reduction_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub per_utterance: Vec<UtteranceScore>,
    /// Systems or files that could not be scored.
    pub missing: Vec<String>,
}

impl Report {
    pub fn row(&self, snr_db: f64, system: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.snr_db == snr_db && r.system == system)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join(REPORT_FILE))?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join(PER_UTTERANCE_FILE))?;
        for r in &self.per_utterance {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(dir.join(REPORT_FILE))?;
        let rows = r.deserialize().collect::<std::result::Result<_, _>>()?;
        let per_utterance = match csv::Reader::from_path(dir.join(PER_UTTERANCE_FILE)) {
            Ok(mut r) => r.deserialize().collect::<std::result::Result<_, _>>()?,
            Err(_) => Vec::new(),
        };
        Ok(Self {
            rows,
            per_utterance,
            missing: Vec::new(),
        })
    }

    /// Fixed-width table: one line per SNR, one column group per system.
    pub fn render(&self) -> String {
        let mut systems: Vec<&str> = Vec::new();
        let mut snrs: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !systems.contains(&r.system.as_str()) {
                systems.push(&r.system);
            }
            if !snrs.contains(&r.snr_db) {
                snrs.push(r.snr_db);
            }
        }
        let mut out = String::new();
        let _ = write!(out, "{:>9}", "SNR");
        for s in &systems {
            let _ = write!(out, " | {:>22}", format!("{s} ER% (rel%)"));
        }
        out.push('\n');
        for snr in &snrs {
            let _ = write!(out, "{:>6} dB", snr);
            for s in &systems {
                match self.row(*snr, s) {
                    Some(r) => {
                        let _ = write!(
                            out,
                            " | {:>22}",
                            format!(
                                "{:.2} ({:+.2})",
                                100.0 * r.mean_error_rate,
                                r.relative_reduction_pct
                            )
                        );
                    }
                    None => {
                        let _ = write!(out, " | {:>22}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out.push('\n');
        let _ = writeln!(out, "{:>9} | {:>10} | {:>10} | {:>10}", "SNR", "system", "segSNR dB", "LSD dB");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>6} dB | {:>10} | {:>10.2} | {:>10.2}",
                r.snr_db, r.system, r.mean_segsnr_db, r.mean_lsd_db
            );
        }
        out
    }
}

/// Scores the noisy mixtures and each system's enhanced outputs. Missing
/// outputs are reported and skipped.
pub fn evaluate(
    cfg: &ExperimentConfig,
    manifest: &DatasetManifest,
    endpoint: &RecognizerEndpoint,
    systems: &[&str],
) -> Result<Report> {
    let extractor = cfg.extractor()?;
    let recognizer = endpoint.connect(&extractor)?;
    let rows = load_rows(&cfg.work_dir, manifest, Split::Test)?;
    if rows.is_empty() {
        return Err(Error::InsufficientData("manifest has no test rows".into()));
    }
    let mut all_systems = vec![NOISY];
    all_systems.extend(systems.iter().copied().filter(|s| *s != NOISY));

    let mut report = Report::default();
    for &system in &all_systems {
        let scored: Vec<std::result::Result<UtteranceScore, (String, Option<Error>)>> = rows
            .par_iter()
            .map(|r| {
                let rel = enhanced_path(system, &r.row);
                let path = if system == NOISY {
                    cfg.work_dir.join(&r.row.mixed)
                } else {
                    cfg.work_dir.join(&rel)
                };
                if !path.is_file() {
                    return Err((path.display().to_string(), None));
                }
                let score = || -> Result<UtteranceScore> {
                    let audio = Waveform::read_wav(&path)?;
                    let reference = reference_for(endpoint, r)?;
                    let error_rate =
                        recognizer.error_rate(&r.row.key(), Audio::File(&path), &reference)?;
                    Ok(UtteranceScore {
                        snr_db: r.row.snr_db,
                        id: r.row.id.clone(),
                        system: system.to_string(),
                        error_rate,
                        segsnr_db: segmental_snr(
                            r.clean.samples(),
                            audio.samples(),
                            cfg.stft.frame_length,
                        )?,
                        lsd_db: lsd_between(&extractor, &audio, &r.clean, cfg.mock.dynamic_range_db)?,
                    })
                };
                score().map_err(|e| (format!("{}: {e}", path.display()), Some(e)))
            })
            .collect();
        let mut recognizer_error = None;
        for s in scored {
            match s {
                Ok(score) => report.per_utterance.push(score),
                Err((missing, err)) => {
                    log::warn!("not scored: {missing}");
                    report.missing.push(missing);
                    if let Some(e) = err.filter(Error::is_recognizer) {
                        recognizer_error.get_or_insert(e);
                    }
                }
            }
        }
        // Without a single noisy score there is no baseline to report.
        if system == NOISY && report.per_utterance.is_empty() {
            if let Some(e) = recognizer_error {
                return Err(e);
            }
            return Err(Error::InsufficientData("no noisy test utterance could be scored".into()));
        }
    }

    for snr in manifest.test_snrs() {
        let mut baseline = None;
        for &system in &all_systems {
            let scores: Vec<&UtteranceScore> = report
                .per_utterance
                .iter()
                .filter(|u| u.snr_db == snr && u.system == system)
                .collect();
            if scores.is_empty() {
                continue;
            }
            let n = scores.len() as f64;
            let mean = |f: fn(&UtteranceScore) -> f64| scores.iter().map(|u| f(u)).sum::<f64>() / n;
            let er = mean(|u| u.error_rate);
            if system == NOISY {
                baseline = Some(er);
            }
            let reduction = match baseline {
                Some(b) if b > 0.0 => relative_reduction(b, er)?,
                _ => 0.0,
            };
            report.rows.push(ReportRow {
                snr_db: snr,
                system: system.to_string(),
                utterances: scores.len(),
                mean_error_rate: er,
                mean_segsnr_db: mean(|u| u.segsnr_db),
                mean_lsd_db: mean(|u| u.lsd_db),
                relative_reduction_pct: reduction,
            });
        }
    }
    Ok(report)
}

fn write_matrix(path: &Path, rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(f, "{}", line.join(" "))?;
    }
    f.flush()?;
    Ok(())
}

/// Gnuplot-friendly matrices: log10 mel power (frames × bands) of the first
/// test utterance per SNR for the clean reference and each system, and the
/// codebook bits (clusters × mask dimension).
pub fn write_plot_data(
    cfg: &ExperimentConfig,
    manifest: &DatasetManifest,
    codebook: Option<&Codebook>,
    systems: &[&str],
) -> Result<()> {
    let extractor = cfg.extractor()?;
    let dir = cfg.work_dir.join(PLOTS_DIR);
    std::fs::create_dir_all(&dir)?;
    if let Some(cb) = codebook {
        write_matrix(&dir.join("codebook.dat"), cb.centroids().iter().map(|c| c.to_f64()))?;
    }
    for snr in manifest.test_snrs() {
        let Some(row) = manifest
            .rows(Split::Test)
            .find(|r| r.snr_db == snr)
        else {
            continue;
        };
        let mut sources = vec![("clean".to_string(), cfg.work_dir.join(&row.clean))];
        sources.push((NOISY.to_string(), cfg.work_dir.join(&row.mixed)));
        for s in systems.iter().filter(|s| **s != NOISY) {
            sources.push((s.to_string(), cfg.work_dir.join(enhanced_path(s, row))));
        }
        for (name, path) in sources {
            if !path.is_file() {
                continue;
            }
            let mps = extractor.mel(&Waveform::read_wav(&path)?)?;
            write_matrix(
                &dir.join(format!("spectrogram_{name}_snr{snr}_{}.dat", row.id)),
                mps.iter_frames()
                    .map(|f| f.iter().map(|v| v.max(1e-10).log10()).collect()),
            )?;
        }
    }
    Ok(())
}
