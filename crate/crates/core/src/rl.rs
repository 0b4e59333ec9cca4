//! Target-action determination: rewards from recognizer error rates,
//! chunk-level reward weighting and the supervised action-target update.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::features::{floored_ln, ChunkSequence, ComplexSpectrogram, FeatureExtractor};
use crate::mask::{apply_mask, Codebook};
use crate::nn::{argmax_action, train, PolicyModel, TrainConfig};
use crate::recognizer::{Audio, Recognizer, Reference};

/// `tanh(alpha * (z_noisy - z_enhanced))`.
pub fn utterance_reward(z_noisy: f64, z_enhanced: f64, alpha: f64) -> Result<f64> {
    if !(z_noisy.is_finite() && z_enhanced.is_finite() && alpha.is_finite()) {
        return Err(Error::NonFinite("reward inputs"));
    }
    if z_noisy < 0.0 || z_enhanced < 0.0 || alpha <= 0.0 {
        return Err(Error::invalid(
            "error rates must be nonnegative and alpha positive",
        ));
    }
    Ok((alpha * (z_noisy - z_enhanced)).tanh())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkErrorProfile {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

/// Squared log-domain error per chunk, normalized by the largest one.
pub fn chunk_errors(clean: &[Vec<f64>], enhanced: &[Vec<f64>]) -> Result<ChunkErrorProfile> {
    check_dim("chunk_errors chunks", clean.len(), enhanced.len())?;
    let raw = clean
        .iter()
        .zip(enhanced)
        .map(|(s, e)| {
            check_dim("chunk_errors dim", s.len(), e.len())?;
            Ok(s.iter()
                .zip(e)
                .map(|(&a, &b)| (floored_ln(a) - floored_ln(b)).powi(2))
                .sum())
        })
        .collect::<Result<Vec<f64>>>()?;
    let max = raw.iter().cloned().fold(0.0, f64::max);
    let normalized = raw
        .iter()
        .map(|&e| if max > 0.0 { e / max } else { 0.0 })
        .collect();
    Ok(ChunkErrorProfile { raw, normalized })
}

/// `(1 - e) R` for a positive reward, `e R` otherwise.
pub fn chunk_reward(normalized_error: f64, reward: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&normalized_error) {
        return Err(Error::invalid(format!(
            "normalized error {normalized_error} outside [0, 1]"
        )));
    }
    Ok(if reward > 0.0 {
        (1.0 - normalized_error) * reward
    } else {
        normalized_error * reward
    })
}

/// Builds the training target from the predicted action scores. With a
/// positive reward the predicted entry becomes `r_c + max(scores)`; with a
/// negative reward the oracle entry becomes `scores[oracle] - r_c`;
/// otherwise the scores are returned unchanged.
pub fn update_action(
    scores: &[f64],
    predicted: usize,
    oracle: usize,
    chunk_reward: f64,
    reward: f64,
) -> Result<Vec<f64>> {
    for index in [predicted, oracle] {
        if index >= scores.len() {
            return Err(Error::IndexOutOfRange {
                index,
                len: scores.len(),
            });
        }
    }
    let mut target = scores.to_vec();
    if reward > 0.0 {
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        target[predicted] = chunk_reward + max;
    } else if reward < 0.0 {
        target[oracle] = scores[oracle] - chunk_reward;
    }
    Ok(target)
}

/// One utterance prepared for the reinforcement loop.
#[derive(Debug, Clone)]
pub struct RlUtterance {
    pub id: String,
    pub noisy_len: usize,
    pub noisy_spec: ComplexSpectrogram,
    pub noisy_chunks: ChunkSequence,
    pub clean_chunks: ChunkSequence,
    pub contexts: Vec<Vec<f64>>,
    /// Nearest codebook cluster of each chunk's ideal binary mask.
    pub oracle_actions: Vec<usize>,
    pub reference: Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlConfig {
    pub alpha: f64,
    pub epochs: usize,
    /// Gradient-descent settings for the pass that follows each epoch; its
    /// `epochs` field is the number of passes over the collected targets.
    pub train: TrainConfig,
    pub seed: u64,
    /// Epoch aborts when more than this fraction of utterances fail.
    pub max_failure_fraction: f64,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            epochs: 20,
            train: TrainConfig {
                learning_rate: 0.5,
                epochs: 5,
                batch_size: 16,
                seed: 0,
            },
            seed: 0,
            max_failure_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_reward: f64,
    pub mean_z_enhanced: f64,
    pub mean_z_noisy: f64,
    pub loss: f64,
    pub utterances: usize,
    pub failures: usize,
}

/// Per-chunk record of one utterance's pass.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceOutcome {
    pub z_noisy: f64,
    pub z_enhanced: f64,
    pub reward: f64,
    pub scores: Vec<Vec<f64>>,
    pub predicted: Vec<usize>,
    pub chunk_rewards: Vec<f64>,
    pub targets: Vec<Vec<f64>>,
    pub features: Vec<Vec<f64>>,
}

/// Runs the reinforcement loop; caches the noisy error rate per utterance.
pub struct RlTrainer<'a> {
    pub config: RlConfig,
    pub extractor: &'a FeatureExtractor,
    pub codebook: &'a Codebook,
    pub recognizer: &'a dyn Recognizer,
    noisy_cache: HashMap<String, f64>,
}

impl<'a> RlTrainer<'a> {
    pub fn new(
        config: RlConfig,
        extractor: &'a FeatureExtractor,
        codebook: &'a Codebook,
        recognizer: &'a dyn Recognizer,
    ) -> Result<Self> {
        if config.alpha.is_nan() || config.alpha <= 0.0 {
            return Err(Error::invalid("alpha must be positive"));
        }
        config.train.validate()?;
        Ok(Self {
            config,
            extractor,
            codebook,
            recognizer,
            noisy_cache: HashMap::new(),
        })
    }

    fn z_noisy(&self, utt: &RlUtterance) -> Result<f64> {
        if let Some(&z) = self.noisy_cache.get(&utt.id) {
            return Ok(z);
        }
        let ones = vec![vec![1.0; self.extractor.n_mels()]; utt.noisy_chunks.len()];
        let resynth = self.extractor.enhance_with_chunk_masks(
            &utt.noisy_spec,
            &ones,
            utt.noisy_chunks.p(),
            utt.noisy_len,
        )?;
        self.recognizer
            .error_rate(&utt.id, Audio::Memory(&resynth), &utt.reference)
    }

    /// Prediction, enhancement, recognition and target construction for one
    /// utterance under the current model.
    pub fn process(&self, model: &PolicyModel, utt: &RlUtterance) -> Result<UtteranceOutcome> {
        let chunks = utt.noisy_chunks.len();
        check_dim("utterance contexts", chunks, utt.contexts.len())?;
        check_dim("utterance oracle actions", chunks, utt.oracle_actions.len())?;
        let z_noisy = self.z_noisy(utt)?;

        let mut scores = Vec::with_capacity(chunks);
        let mut predicted = Vec::with_capacity(chunks);
        let mut features = Vec::with_capacity(chunks);
        for ctx in &utt.contexts {
            let x = model.features(ctx);
            let s = model.network.forward(&x)?;
            predicted.push(argmax_action(&s)?);
            scores.push(s);
            features.push(x);
        }

        let p = utt.noisy_chunks.p();
        let mut enhanced_chunks = Vec::with_capacity(chunks);
        let mut chunk_masks = Vec::with_capacity(chunks);
        for (c, &a) in predicted.iter().enumerate() {
            let mask = self.codebook.select(a)?;
            let full = if mask.len() == utt.noisy_chunks.dim() {
                mask.clone()
            } else {
                mask.repeated(p)
            };
            enhanced_chunks.push(apply_mask(utt.noisy_chunks.chunk(c), &full)?);
            chunk_masks.push(mask.to_f64());
        }
        let enhanced = self.extractor.enhance_with_chunk_masks(
            &utt.noisy_spec,
            &chunk_masks,
            p,
            utt.noisy_len,
        )?;
        let z_enhanced =
            self.recognizer
                .error_rate(&utt.id, Audio::Memory(&enhanced), &utt.reference)?;

        let reward = utterance_reward(z_noisy, z_enhanced, self.config.alpha)?;
        let profile = chunk_errors(utt.clean_chunks.chunks(), &enhanced_chunks)?;
        let mut chunk_rewards = Vec::with_capacity(chunks);
        let mut targets = Vec::with_capacity(chunks);
        for c in 0..chunks {
            let r_c = chunk_reward(profile.normalized[c], reward)?;
            targets.push(update_action(
                &scores[c],
                predicted[c],
                utt.oracle_actions[c],
                r_c,
                reward,
            )?);
            chunk_rewards.push(r_c);
        }
        Ok(UtteranceOutcome {
            z_noisy,
            z_enhanced,
            reward,
            scores,
            predicted,
            chunk_rewards,
            targets,
            features,
        })
    }

    /// One pass over the dataset followed by gradient descent on the
    /// collected (context, target) pairs.
    pub fn epoch(
        &mut self,
        epoch: usize,
        dataset: &[RlUtterance],
        model: &mut PolicyModel,
    ) -> Result<EpochStats> {
        if dataset.is_empty() {
            return Err(Error::InsufficientData("empty reinforcement dataset".into()));
        }
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);

        let this = &*self;
        let frozen = &*model;
        let outcomes: Vec<Result<UtteranceOutcome>> = order
            .par_iter()
            .map(|&i| this.process(frozen, &dataset[i]))
            .collect();

        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        let (mut sum_r, mut sum_z, mut sum_zn) = (0.0, 0.0, 0.0);
        let mut ok = 0usize;
        let mut failures = 0usize;
        for (&i, outcome) in order.iter().zip(outcomes) {
            match outcome {
                Ok(o) => {
                    self.noisy_cache.insert(dataset[i].id.clone(), o.z_noisy);
                    sum_r += o.reward;
                    sum_z += o.z_enhanced;
                    sum_zn += o.z_noisy;
                    ok += 1;
                    inputs.extend(o.features);
                    targets.extend(o.targets);
                }
                Err(e) if e.is_recognizer() => {
                    log::warn!("epoch {epoch}: skipping {}: {e}", dataset[i].id);
                    failures += 1;
                }
                Err(e) => return Err(e),
            }
        }
        if failures as f64 > self.config.max_failure_fraction * dataset.len() as f64 || ok == 0 {
            return Err(Error::Recognizer {
                id: format!("epoch {epoch}"),
                reason: format!("{failures} of {} utterances failed", dataset.len()),
            });
        }

        let mut cfg = self.config.train;
        cfg.seed = cfg.seed.wrapping_add(epoch as u64);
        let history = train(&mut model.network, &inputs, &targets, &cfg)?;
        Ok(EpochStats {
            epoch,
            mean_reward: sum_r / ok as f64,
            mean_z_enhanced: sum_z / ok as f64,
            mean_z_noisy: sum_zn / ok as f64,
            loss: history.iter().sum::<f64>() / history.len() as f64,
            utterances: ok,
            failures,
        })
    }
}
