//! Speech enhancement by per-chunk selection of clustered ideal binary
//! masks, trained against the error rate of a black-box recognizer.
//!
//! The crate is organised bottom-up:
//!
//! - [`features`]: STFT, mel power spectrogram, chunking and resynthesis.
//! - [`mask`]: ideal binary masks and the Hamming k-means codebook.
//! - [`nn`] and [`policy`]: the feedforward mask/action estimator.
//! - [`rl`]: rewards and action-target construction.
//! - [`recognizer`]: CER scoring, the mock recognizer, the external
//!   decoder protocol.
//! - [`pipeline`]: data preparation, training stages, enhancement and
//!   evaluation.

pub mod audio;
pub mod error;
pub mod features;
pub mod mask;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod policy;
pub mod recognizer;
pub mod rl;

pub use audio::Waveform;
pub use error::{Error, Result};
pub use features::{FeatureExtractor, StftConfig};
pub use mask::{Codebook, IbmVector};
pub use nn::{Network, PolicyModel, TrainConfig};
pub use pipeline::ExperimentConfig;
pub use recognizer::{Recognizer, RecognizerEndpoint};
pub use rl::{EpochStats, RlConfig};
