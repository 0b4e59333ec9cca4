//! Test-time enhancement: per-chunk mask selection, masking and resynthesis.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::features::{log_features, make_chunks, FeatureExtractor};
use crate::mask::Codebook;
use crate::nn::{argmax_action, PolicyModel};
use crate::pipeline::config::ExperimentConfig;
use crate::pipeline::dataset::{load_rows, DatasetManifest, ManifestRow, Split};
use crate::pipeline::stages::{
    chunk_ibms, load_codebook, noisy_features, utterance_features, ACTION_MODEL_FILE,
};

/// Nearest-neighbour lookup from noisy log-mel contexts to cluster labels.
#[derive(Debug, Clone)]
pub struct NnIndex {
    points: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl NnIndex {
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        crate::error::check_dim("nn labels", points.len(), labels.len())?;
        if points.is_empty() {
            return Err(Error::InsufficientData("empty nearest-neighbour index".into()));
        }
        Ok(Self { points, labels })
    }

    /// Indexes every training chunk under the label of its IBM's nearest
    /// codebook cluster.
    pub fn build(cfg: &ExperimentConfig, manifest: &DatasetManifest, codebook: &Codebook) -> Result<Self> {
        let extractor = cfg.extractor()?;
        let rows = load_rows(&cfg.work_dir, manifest, Split::Train)?;
        let parts = rows
            .par_iter()
            .map(|r| {
                let f = utterance_features(cfg, &extractor, r)?;
                let labels = chunk_ibms(cfg, &f.clean, &f.noise)?
                    .iter()
                    .map(|m| codebook.nearest(m))
                    .collect::<Result<Vec<_>>>()?;
                let points: Vec<Vec<f64>> = f.contexts.iter().map(|c| log_features(c)).collect();
                Ok((points, labels))
            })
            .collect::<Result<Vec<_>>>()?;
        let (mut points, mut labels) = (Vec::new(), Vec::new());
        for (p, l) in parts {
            points.extend(p);
            labels.extend(l);
        }
        Self::new(points, labels)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    /// Index of the closest stored point (Euclidean; lowest index on ties).
    pub fn nearest(&self, query: &[f64]) -> Result<usize> {
        crate::error::check_dim("nn query", self.points[0].len(), query.len())?;
        let mut best = (0, f64::INFINITY);
        for (i, p) in self.points.iter().enumerate() {
            let d: f64 = p.iter().zip(query).map(|(a, b)| (a - b).powi(2)).sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best.0)
    }

    pub fn label_for(&self, query: &[f64]) -> Result<usize> {
        Ok(self.labels[self.nearest(query)?])
    }
}

/// How each chunk's mask is chosen.
pub enum MaskSelector<'a> {
    /// Argmax of the action network over codebook entries.
    Policy(&'a PolicyModel),
    /// Codebook entry of the nearest training chunk.
    NearestNeighbor(&'a NnIndex),
    /// The same codebook entry for every chunk.
    Fixed(usize),
    /// True ideal binary masks from the clean and noise components.
    Oracle { clean: &'a Waveform, noise: &'a Waveform },
}

#[derive(Debug, Clone)]
pub struct Enhanced {
    pub waveform: Waveform,
    /// Codebook index per chunk; empty for the oracle.
    pub actions: Vec<usize>,
}

/// Selects a mask per chunk, applies it in the mel domain (projected onto
/// STFT bins) and resynthesizes with the noisy phase. The output has the
/// input's length.
pub fn enhance_waveform(
    cfg: &ExperimentConfig,
    extractor: &FeatureExtractor,
    codebook: Option<&Codebook>,
    selector: &MaskSelector<'_>,
    noisy: &Waveform,
) -> Result<Enhanced> {
    let (spec, chunks, contexts) = noisy_features(cfg, extractor, noisy)?;
    let need_codebook = || codebook.ok_or_else(|| Error::invalid("selector needs a codebook"));
    let actions: Vec<usize> = match selector {
        MaskSelector::Policy(model) => contexts
            .iter()
            .map(|c| argmax_action(&model.forward(c)?))
            .collect::<Result<_>>()?,
        MaskSelector::NearestNeighbor(index) => contexts
            .iter()
            .map(|c| index.label_for(&log_features(c)))
            .collect::<Result<_>>()?,
        MaskSelector::Fixed(a) => vec![*a; chunks.len()],
        MaskSelector::Oracle { .. } => Vec::new(),
    };
    let masks: Vec<Vec<f64>> = match selector {
        MaskSelector::Oracle { clean, noise } => {
            let s = make_chunks(&extractor.mel(clean)?, cfg.p)?;
            let n = make_chunks(&extractor.mel(noise)?, cfg.p)?;
            chunk_ibms(cfg, &s, &n)?.iter().map(|m| m.to_f64()).collect()
        }
        _ => {
            let cb = need_codebook()?;
            actions
                .iter()
                .map(|&a| Ok(cb.select(a)?.to_f64()))
                .collect::<Result<_>>()?
        }
    };
    let waveform = extractor.enhance_with_chunk_masks(&spec, &masks, cfg.p, noisy.len())?;
    Ok(Enhanced { waveform, actions })
}

pub const ENHANCED_DIR: &str = "enhanced";

/// `enhanced/<system>/snr<snr>/<id>.wav`, relative to the work directory.
pub fn enhanced_path(system: &str, row: &ManifestRow) -> PathBuf {
    PathBuf::from(ENHANCED_DIR)
        .join(system)
        .join(format!("snr{}", row.snr_db))
        .join(format!("{}.wav", row.id))
}

/// Enhances every test mixture with `selector_for(row)` and writes the
/// results under the work directory. Returns the written paths in order.
pub fn enhance_test_set<F>(
    cfg: &ExperimentConfig,
    manifest: &DatasetManifest,
    system: &str,
    selector_for: F,
) -> Result<Vec<PathBuf>>
where
    F: Fn(&crate::pipeline::dataset::LoadedRow) -> Result<Enhanced> + Sync,
{
    let rows = load_rows(&cfg.work_dir, manifest, Split::Test)?;
    rows.par_iter()
        .map(|r| {
            let out = selector_for(r)?;
            let rel = enhanced_path(system, &r.row);
            out.waveform.write_wav(cfg.work_dir.join(&rel))?;
            Ok(rel)
        })
        .collect()
}

pub const SYSTEM_RLSE: &str = "rlse";
pub const SYSTEM_1NN: &str = "1nnse";
pub const SYSTEM_ORACLE: &str = "oracle";

/// Enhances the test set with the trained action estimator.
pub fn enhance_with_policy(cfg: &ExperimentConfig, manifest: &DatasetManifest) -> Result<Vec<PathBuf>> {
    let extractor = cfg.extractor()?;
    let codebook = load_codebook(cfg)?;
    let model = PolicyModel::load(cfg.work_dir.join(ACTION_MODEL_FILE))?;
    let selector = MaskSelector::Policy(&model);
    enhance_test_set(cfg, manifest, SYSTEM_RLSE, |r| {
        enhance_waveform(cfg, &extractor, Some(&codebook), &selector, &r.mixed)
    })
}

/// Enhances the test set with the nearest-neighbour baseline.
pub fn enhance_with_nearest_neighbor(
    cfg: &ExperimentConfig,
    manifest: &DatasetManifest,
) -> Result<Vec<PathBuf>> {
    let extractor = cfg.extractor()?;
    let codebook = load_codebook(cfg)?;
    let index = NnIndex::build(cfg, manifest, &codebook)?;
    let selector = MaskSelector::NearestNeighbor(&index);
    enhance_test_set(cfg, manifest, SYSTEM_1NN, |r| {
        enhance_waveform(cfg, &extractor, Some(&codebook), &selector, &r.mixed)
    })
}

/// Enhances the test set with true ideal binary masks.
pub fn enhance_with_oracle(cfg: &ExperimentConfig, manifest: &DatasetManifest) -> Result<Vec<PathBuf>> {
    let extractor = cfg.extractor()?;
    enhance_test_set(cfg, manifest, SYSTEM_ORACLE, |r| {
        let selector = MaskSelector::Oracle {
            clean: &r.clean,
            noise: &r.noise,
        };
        enhance_waveform(cfg, &extractor, None, &selector, &r.mixed)
    })
}

/// Reads, enhances and writes a single file.
pub fn enhance_file(
    cfg: &ExperimentConfig,
    extractor: &FeatureExtractor,
    codebook: &Codebook,
    selector: &MaskSelector<'_>,
    input: &Path,
    output: &Path,
) -> Result<Enhanced> {
    let noisy = Waveform::read_wav(input)?;
    let out = enhance_waveform(cfg, extractor, Some(codebook), selector, &noisy)?;
    out.waveform.write_wav(output)?;
    Ok(out)
}
