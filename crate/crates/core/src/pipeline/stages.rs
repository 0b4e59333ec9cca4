//! Training stages: codebook, mask-estimator pretraining, reinforcement.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::features::{make_chunks, make_context, ChunkSequence, ComplexSpectrogram, FeatureExtractor};
use crate::mask::{compute_ibm, kmeans_binary, Codebook, IbmVector, KMeansResult};
use crate::nn::PolicyModel;
use crate::pipeline::config::ExperimentConfig;
use crate::pipeline::dataset::{load_rows, Calibration, DatasetManifest, LoadedRow, Split, CALIBRATION_FILE};
use crate::policy::{extend_model, pretrain_mask_estimator, PretrainOutcome};
use crate::recognizer::{Recognizer, RecognizerEndpoint, Reference, RECOGNIZER_CMD_ENV};
use crate::rl::{EpochStats, RlTrainer, RlUtterance};

pub const CODEBOOK_FILE: &str = "codebook.bin";
pub const CODEBOOK_LOG: &str = "codebook_objective.csv";
pub const MASK_MODEL_FILE: &str = "mask_estimator.model";
pub const PRETRAIN_LOG: &str = "pretrain_log.csv";
pub const ACTION_MODEL_FILE: &str = "action_estimator.model";
pub const RL_LOG: &str = "rl_log.csv";
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

/// Chunked features of one noisy/clean/noise triple.
#[derive(Debug, Clone)]
pub struct UtteranceFeatures {
    pub noisy_spec: ComplexSpectrogram,
    pub noisy: ChunkSequence,
    pub clean: ChunkSequence,
    pub noise: ChunkSequence,
    pub contexts: Vec<Vec<f64>>,
}

/// Noisy-only features used at enhancement time.
pub fn noisy_features(
    cfg: &ExperimentConfig,
    extractor: &FeatureExtractor,
    noisy: &Waveform,
) -> Result<(ComplexSpectrogram, ChunkSequence, Vec<Vec<f64>>)> {
    let spec = extractor.spectrogram(noisy)?;
    let mps = crate::features::mel_power(&spec, &extractor.filterbank)?;
    let chunks = make_chunks(&mps, cfg.p)?;
    let contexts = make_context(&chunks, cfg.context_len())?;
    Ok((spec, chunks, contexts))
}

pub fn utterance_features(
    cfg: &ExperimentConfig,
    extractor: &FeatureExtractor,
    row: &LoadedRow,
) -> Result<UtteranceFeatures> {
    let (noisy_spec, noisy, contexts) = noisy_features(cfg, extractor, &row.mixed)?;
    let clean = make_chunks(&extractor.mel(&row.clean)?, cfg.p)?;
    let noise = make_chunks(&extractor.mel(&row.noise)?, cfg.p)?;
    Ok(UtteranceFeatures {
        noisy_spec,
        noisy,
        clean,
        noise,
        contexts,
    })
}

/// Sums the `p` frames of a chunk into one mel vector.
fn aggregate_frames(chunk: &[f64], n_mels: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_mels];
    for frame in chunk.chunks_exact(n_mels) {
        out.iter_mut().zip(frame).for_each(|(o, v)| *o += v);
    }
    out
}

/// Ideal binary mask of every chunk, at the configured mask dimension.
pub fn chunk_ibms(
    cfg: &ExperimentConfig,
    clean: &ChunkSequence,
    noise: &ChunkSequence,
) -> Result<Vec<IbmVector>> {
    clean
        .chunks()
        .iter()
        .zip(noise.chunks())
        .map(|(s, n)| {
            if cfg.shared_mask {
                compute_ibm(
                    &aggregate_frames(s, cfg.n_mels),
                    &aggregate_frames(n, cfg.n_mels),
                )
            } else {
                compute_ibm(s, n)
            }
        })
        .collect()
}

fn training_features(
    cfg: &ExperimentConfig,
    extractor: &FeatureExtractor,
    manifest: &DatasetManifest,
) -> Result<Vec<(LoadedRow, UtteranceFeatures)>> {
    let rows = load_rows(&cfg.work_dir, manifest, Split::Train)?;
    if rows.is_empty() {
        return Err(Error::InsufficientData("manifest has no training rows".into()));
    }
    rows.into_par_iter()
        .map(|r| {
            let f = utterance_features(cfg, extractor, &r)?;
            Ok((r, f))
        })
        .collect()
}

fn write_csv_log(path: &Path, header: &str, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{header}")?;
    for l in lines {
        writeln!(f, "{l}")?;
    }
    f.flush()?;
    Ok(())
}

pub fn save_resolved_config(cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.work_dir)?;
    std::fs::write(cfg.work_dir.join(RESOLVED_CONFIG), cfg.to_toml())?;
    Ok(())
}

/// Clusters every training-chunk IBM and persists the codebook.
pub fn build_codebook(cfg: &ExperimentConfig, manifest: &DatasetManifest) -> Result<KMeansResult> {
    let extractor = cfg.extractor()?;
    let data = training_features(cfg, &extractor, manifest)?;
    let mut ibms = Vec::new();
    for (_, f) in &data {
        ibms.extend(chunk_ibms(cfg, &f.clean, &f.noise)?);
    }
    log::info!("clustering {} masks into {} clusters", ibms.len(), cfg.clusters);
    let result = kmeans_binary(&ibms, &cfg.kmeans())?;
    result.codebook.save(cfg.work_dir.join(CODEBOOK_FILE))?;
    write_csv_log(
        &cfg.work_dir.join(CODEBOOK_LOG),
        "iteration,objective",
        result
            .objective_history
            .iter()
            .enumerate()
            .map(|(i, o)| format!("{i},{o}")),
    )?;
    Ok(result)
}

pub fn load_codebook(cfg: &ExperimentConfig) -> Result<Codebook> {
    Codebook::load(cfg.work_dir.join(CODEBOOK_FILE))
}

/// Trains the mask estimator on (noisy context, chunk IBM) pairs.
pub fn run_pretrain(cfg: &ExperimentConfig, manifest: &DatasetManifest) -> Result<PretrainOutcome> {
    let extractor = cfg.extractor()?;
    let data = training_features(cfg, &extractor, manifest)?;
    let mut contexts = Vec::new();
    let mut targets = Vec::new();
    for (_, f) in data {
        targets.extend(chunk_ibms(cfg, &f.clean, &f.noise)?);
        contexts.extend(f.contexts);
    }
    let outcome = pretrain_mask_estimator(&contexts, &targets, &cfg.pretrain_hidden, &cfg.pretrain)?;
    outcome.model.save(cfg.work_dir.join(MASK_MODEL_FILE))?;
    write_csv_log(
        &cfg.work_dir.join(PRETRAIN_LOG),
        "epoch,loss",
        std::iter::once(format!("0,{}", outcome.initial_loss)).chain(
            outcome
                .history
                .iter()
                .enumerate()
                .map(|(i, l)| format!("{},{l}", i + 1)),
        ),
    )?;
    Ok(outcome)
}

/// Recognizer selection: an explicit command, then the environment
/// override, then the calibrated mock.
pub fn resolve_endpoint(cfg: &ExperimentConfig, command: Option<&str>) -> Result<RecognizerEndpoint> {
    let command = command
        .map(str::to_string)
        .or_else(|| std::env::var(RECOGNIZER_CMD_ENV).ok().filter(|c| !c.trim().is_empty()));
    match command {
        Some(command) => Ok(RecognizerEndpoint::External {
            command,
            timeout_secs: cfg.recognizer_timeout_secs,
        }),
        None => {
            let cal = Calibration::load(cfg.work_dir.join(CALIBRATION_FILE))?;
            Ok(RecognizerEndpoint::Mock {
                calibration: cal.lsd_cal,
                dynamic_range_db: cal.dynamic_range_db,
            })
        }
    }
}

pub fn reference_for(endpoint: &RecognizerEndpoint, row: &LoadedRow) -> Result<Reference> {
    match endpoint {
        RecognizerEndpoint::Mock { .. } => Ok(Reference::Clean(Arc::new(row.clean.clone()))),
        RecognizerEndpoint::External { .. } => {
            if row.row.transcript.trim().is_empty() {
                Err(Error::InsufficientData(format!(
                    "utterance {} has no reference transcript",
                    row.row.id
                )))
            } else {
                Ok(Reference::Text(row.row.transcript.clone()))
            }
        }
    }
}

pub fn rl_dataset(
    cfg: &ExperimentConfig,
    manifest: &DatasetManifest,
    codebook: &Codebook,
    endpoint: &RecognizerEndpoint,
) -> Result<Vec<RlUtterance>> {
    let extractor = cfg.extractor()?;
    training_features(cfg, &extractor, manifest)?
        .into_iter()
        .map(|(row, f)| {
            let oracle_actions = chunk_ibms(cfg, &f.clean, &f.noise)?
                .iter()
                .map(|m| codebook.nearest(m))
                .collect::<Result<Vec<_>>>()?;
            Ok(RlUtterance {
                id: row.row.key(),
                noisy_len: row.mixed.len(),
                noisy_spec: f.noisy_spec,
                noisy_chunks: f.noisy,
                clean_chunks: f.clean,
                contexts: f.contexts,
                oracle_actions,
                reference: reference_for(endpoint, &row)?,
            })
        })
        .collect()
}

pub struct RlRun {
    pub model: PolicyModel,
    pub stats: Vec<EpochStats>,
}

/// Extends the pretrained mask estimator with the action head and runs the
/// reinforcement epochs, appending one log line per epoch.
pub fn run_rl_train(
    cfg: &ExperimentConfig,
    manifest: &DatasetManifest,
    endpoint: &RecognizerEndpoint,
) -> Result<RlRun> {
    let extractor = cfg.extractor()?;
    let codebook = load_codebook(cfg)?;
    if codebook.dim() != cfg.mask_dim() {
        return Err(Error::Dimension {
            context: "codebook vs configured mask",
            expected: cfg.mask_dim(),
            actual: codebook.dim(),
        });
    }
    let pretrained = PolicyModel::load(cfg.work_dir.join(MASK_MODEL_FILE))?;
    let mut model = extend_model(&pretrained, cfg.clusters, &cfg.action_hidden, cfg.seed)?;
    let dataset = rl_dataset(cfg, manifest, &codebook, endpoint)?;
    let recognizer: Box<dyn Recognizer> = endpoint.connect(&extractor)?;
    let mut trainer = RlTrainer::new(cfg.rl, &extractor, &codebook, recognizer.as_ref())?;

    let mut log = std::io::BufWriter::new(std::fs::File::create(cfg.work_dir.join(RL_LOG))?);
    writeln!(log, "epoch,mean_reward,mean_z_enhanced,z_noisy_baseline,loss")?;
    log.flush()?;
    let mut stats = Vec::with_capacity(cfg.rl.epochs);
    for epoch in 0..cfg.rl.epochs {
        let s = trainer.epoch(epoch, &dataset, &mut model)?;
        writeln!(
            log,
            "{},{},{},{},{}",
            s.epoch, s.mean_reward, s.mean_z_enhanced, s.mean_z_noisy, s.loss
        )?;
        log.flush()?;
        log::info!(
            "epoch {}: R={:.4} z_enh={:.4} z_noisy={:.4} loss={:.5}",
            s.epoch,
            s.mean_reward,
            s.mean_z_enhanced,
            s.mean_z_noisy,
            s.loss
        );
        stats.push(s);
    }
    model.save(cfg.work_dir.join(ACTION_MODEL_FILE))?;
    Ok(RlRun { model, stats })
}
