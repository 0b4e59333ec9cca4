//! End-to-end experiment orchestration.

pub mod config;
pub mod dataset;
pub mod enhance;
pub mod evaluate;
pub mod mix;
pub mod run;
pub mod stages;
pub mod synth;

pub use config::{ExperimentConfig, MockConfig};
pub use dataset::{prepare, DatasetManifest, ManifestRow, Split};
pub use enhance::{enhance_waveform, MaskSelector, NnIndex};
pub use evaluate::{evaluate, Report};
pub use mix::mix_at_snr;
pub use run::{run_all, RunOptions};
