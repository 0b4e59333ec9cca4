//! Mask-estimator pretraining and the action-estimation head.

use crate::error::{check_dim, Error, Result};
use crate::features::log_features;
use crate::mask::IbmVector;
use crate::nn::{
    argmax_action, extend_to_action_head, mse_loss, train, Activation, Network, PolicyModel,
    Standardizer, TrainConfig,
};

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub model: PolicyModel,
    /// Loss of the freshly initialized network on the training set.
    pub initial_loss: f64,
    pub history: Vec<f64>,
}

impl PretrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.history.last().copied().unwrap_or(self.initial_loss)
    }
}

/// Trains a sigmoid-output network to predict the IBM bits of each chunk
/// from its raw mel-power context.
pub fn pretrain_mask_estimator(
    contexts: &[Vec<f64>],
    targets: &[IbmVector],
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<PretrainOutcome> {
    check_dim("pretraining targets", contexts.len(), targets.len())?;
    if contexts.is_empty() {
        return Err(Error::InsufficientData("no pretraining samples".into()));
    }
    let logs: Vec<Vec<f64>> = contexts.iter().map(|c| log_features(c)).collect();
    let standardizer = Standardizer::fit(&logs)?;
    let inputs: Vec<Vec<f64>> = logs.iter().map(|x| standardizer.apply(x)).collect();
    let outputs: Vec<Vec<f64>> = targets.iter().map(IbmVector::to_f64).collect();
    let mask_dim = outputs[0].len();
    let mut network = Network::random(
        inputs[0].len(),
        hidden,
        mask_dim,
        Activation::Sigmoid,
        cfg.seed,
    )?;
    let initial = inputs
        .iter()
        .map(|x| network.forward(x))
        .collect::<Result<Vec<_>>>()?;
    let initial_loss = mse_loss(&initial, &outputs)?;
    let history = train(&mut network, &inputs, &outputs, cfg)?;
    Ok(PretrainOutcome {
        model: PolicyModel::new(standardizer, network)?,
        initial_loss,
        history,
    })
}

/// Replaces the mask head with new hidden layers and a softmax over `actions`.
pub fn extend_model(
    pretrained: &PolicyModel,
    actions: usize,
    hidden: &[usize],
    seed: u64,
) -> Result<PolicyModel> {
    let network = extend_to_action_head(&pretrained.network, actions, hidden, seed)?;
    PolicyModel::new(pretrained.standardizer.clone(), network)
}

/// Action scores and chosen index for every context.
pub fn predict_actions(model: &PolicyModel, contexts: &[Vec<f64>]) -> Result<Vec<(Vec<f64>, usize)>> {
    contexts
        .iter()
        .map(|c| {
            let scores = model.forward(c)?;
            let a = argmax_action(&scores)?;
            Ok((scores, a))
        })
        .collect()
}
