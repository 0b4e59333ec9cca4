//! Noisy/clean corpus preparation and the dataset manifest.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::metrics::percentile;
use crate::pipeline::config::ExperimentConfig;
use crate::pipeline::mix::{fit_noise, mix_at_snr};
use crate::recognizer::lsd_between;

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const CALIBRATION_FILE: &str = "calibration.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// One mixture. Paths are relative to the work directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub split: Split,
    pub snr_db: f64,
    pub clean: String,
    pub noise: String,
    pub mixed: String,
    /// Absolute sample range of the source noise file used by this row.
    pub noise_start: usize,
    pub noise_len: usize,
    pub noise_scale: f64,
    pub joint_gain: f64,
    #[serde(default)]
    pub transcript: String,
}

impl ManifestRow {
    pub fn noise_range(&self) -> std::ops::Range<usize> {
        self.noise_start..self.noise_start + self.noise_len
    }

    /// `<id>@snr<snr>`: unique within a manifest.
    pub fn key(&self) -> String {
        format!("{}@snr{}", self.id, self.snr_db)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
}

impl DatasetManifest {
    pub fn rows(&self, split: Split) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn test_snrs(&self) -> Vec<f64> {
        let mut snrs: Vec<f64> = Vec::new();
        for r in self.rows(Split::Test) {
            if !snrs.contains(&r.snr_db) {
                snrs.push(r.snr_db);
            }
        }
        snrs
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self { rows })
    }
}

/// Audio for one manifest row, loaded from disk.
#[derive(Debug, Clone)]
pub struct LoadedRow {
    pub row: ManifestRow,
    pub clean: Waveform,
    pub noise: Waveform,
    pub mixed: Waveform,
}

pub fn load_row(work_dir: &Path, row: &ManifestRow) -> Result<LoadedRow> {
    Ok(LoadedRow {
        row: row.clone(),
        clean: Waveform::read_wav(work_dir.join(&row.clean))?,
        noise: Waveform::read_wav(work_dir.join(&row.noise))?,
        mixed: Waveform::read_wav(work_dir.join(&row.mixed))?,
    })
}

pub fn load_rows(work_dir: &Path, manifest: &DatasetManifest, split: Split) -> Result<Vec<LoadedRow>> {
    let rows: Vec<&ManifestRow> = manifest.rows(split).collect();
    rows.par_iter().map(|r| load_row(work_dir, r)).collect()
}

/// Distance that maps to pseudo error rate 1 for the mock recognizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub lsd_cal: f64,
    pub percentile: f64,
    pub dynamic_range_db: f64,
}

impl Calibration {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::InsufficientData(format!(
            "missing directory {}",
            dir.display()
        )));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

fn snr_tag(snr: f64) -> String {
    format!("snr{snr}")
}

/// Mixes `clean_dir/train/*.wav` at the training SNR and
/// `clean_dir/test/*.wav` at every test SNR, using disjoint halves of the
/// noise file, and writes audio, manifest and mock calibration under the
/// work directory.
pub fn prepare(cfg: &ExperimentConfig, clean_dir: &Path, noise_file: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let train_files = wav_files(&clean_dir.join("train"))?;
    let test_files = wav_files(&clean_dir.join("test"))?;
    if train_files.is_empty() || test_files.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} train and {} test clean files",
            train_files.len(),
            test_files.len()
        )));
    }
    let noise = Waveform::read_wav(noise_file)?;
    let half = noise.len() / 2;
    if half < cfg.stft.frame_length {
        return Err(Error::InsufficientData(format!(
            "noise file has {} samples; each half needs at least {}",
            noise.len(),
            cfg.stft.frame_length
        )));
    }
    let halves = [(Split::Train, 0usize), (Split::Test, half)];

    let mut jobs = Vec::new();
    for (split, files, snrs) in [
        (Split::Train, &train_files, vec![cfg.snr_train_db]),
        (Split::Test, &test_files, cfg.snr_test_db.clone()),
    ] {
        for file in files.iter() {
            for &snr in &snrs {
                jobs.push((split, file.clone(), snr));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let work = &cfg.work_dir;
    std::fs::create_dir_all(work)?;
    let planned: Vec<(Split, PathBuf, f64, usize, u64)> = jobs
        .into_iter()
        .map(|(split, file, snr)| (split, file, snr, rng.gen::<usize>(), rng.gen::<u64>()))
        .collect();

    let rows = planned
        .par_iter()
        .map(|(split, file, snr, offset_draw, tile_seed)| {
            let clean = Waveform::read_wav(file)?;
            let half_start = halves.iter().find(|h| h.0 == *split).unwrap().1;
            let source = &noise.samples()[half_start..half_start + half];
            let n = clean.len();
            let (segment, start, used) = if n <= half {
                let offset = offset_draw % (half - n + 1);
                (source[offset..offset + n].to_vec(), half_start + offset, n)
            } else {
                (fit_noise(source, n, *tile_seed)?, half_start, half)
            };
            let segment = Waveform::new(segment, noise.sample_rate())?;
            let mix = mix_at_snr(&clean, &segment, *snr, *tile_seed)?;
            let id = file.file_stem().unwrap().to_string_lossy().into_owned();
            let dir = PathBuf::from("audio").join(split.as_str()).join(snr_tag(*snr));
            let rel = |kind: &str| dir.join(format!("{id}_{kind}.wav"));
            let (clean_rel, noise_rel, mix_rel) = (rel("clean"), rel("noise"), rel("mix"));
            mix.clean.write_wav(work.join(&clean_rel))?;
            mix.noise.write_wav(work.join(&noise_rel))?;
            mix.mixture.write_wav(work.join(&mix_rel))?;
            let transcript = std::fs::read_to_string(file.with_extension("txt"))
                .map(|t| t.trim().to_string())
                .unwrap_or_default();
            Ok(ManifestRow {
                id,
                split: *split,
                snr_db: *snr,
                clean: clean_rel.to_string_lossy().into_owned(),
                noise: noise_rel.to_string_lossy().into_owned(),
                mixed: mix_rel.to_string_lossy().into_owned(),
                noise_start: start,
                noise_len: used,
                noise_scale: mix.noise_scale,
                joint_gain: mix.joint_gain,
                transcript,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = DatasetManifest { rows };
    manifest.save(work.join(MANIFEST_FILE))?;

    let calibration = calibrate(cfg, &manifest)?;
    calibration.save(work.join(CALIBRATION_FILE))?;
    Ok(manifest)
}

/// Percentile of noisy-vs-clean log-spectral distances over training rows.
pub fn calibrate(cfg: &ExperimentConfig, manifest: &DatasetManifest) -> Result<Calibration> {
    let extractor = cfg.extractor()?;
    let rows = load_rows(&cfg.work_dir, manifest, Split::Train)?;
    let distances = rows
        .par_iter()
        .map(|r| lsd_between(&extractor, &r.mixed, &r.clean, cfg.mock.dynamic_range_db))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Calibration {
        lsd_cal: percentile(&distances, cfg.mock.calibration_percentile)?,
        percentile: cfg.mock.calibration_percentile,
        dynamic_range_db: cfg.mock.dynamic_range_db,
    })
}
