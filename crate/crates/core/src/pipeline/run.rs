//! The whole experiment as one call, in stage order.

use std::path::Path;

use crate::error::Result;
use crate::pipeline::config::ExperimentConfig;
use crate::pipeline::dataset::{prepare, DatasetManifest};
use crate::pipeline::enhance::{
    enhance_with_nearest_neighbor, enhance_with_oracle, enhance_with_policy, SYSTEM_1NN, SYSTEM_ORACLE,
    SYSTEM_RLSE,
};
use crate::pipeline::evaluate::{evaluate, write_plot_data, Report};
use crate::pipeline::stages::{
    build_codebook, load_codebook, resolve_endpoint, run_pretrain, run_rl_train, save_resolved_config,
};

pub const REPORT_TEXT: &str = "report.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions<'a> {
    pub recognizer_cmd: Option<&'a str>,
    pub with_oracle: bool,
}

/// Systems scored by default, in report column order.
pub fn default_systems(with_oracle: bool) -> Vec<&'static str> {
    let mut systems = vec![SYSTEM_1NN, SYSTEM_RLSE];
    if with_oracle {
        systems.push(SYSTEM_ORACLE);
    }
    systems
}

/// prepare, codebook, pretraining, reinforcement, enhancement of every
/// system, evaluation. Everything lands in the work directory.
pub fn run_all(
    cfg: &ExperimentConfig,
    clean_dir: &Path,
    noise_file: &Path,
    options: RunOptions<'_>,
) -> Result<Report> {
    let manifest = prepare(cfg, clean_dir, noise_file)?;
    save_resolved_config(cfg)?;
    run_after_prepare(cfg, &manifest, options)
}

pub fn run_after_prepare(
    cfg: &ExperimentConfig,
    manifest: &DatasetManifest,
    options: RunOptions<'_>,
) -> Result<Report> {
    let endpoint = resolve_endpoint(cfg, options.recognizer_cmd)?;
    build_codebook(cfg, manifest)?;
    run_pretrain(cfg, manifest)?;
    run_rl_train(cfg, manifest, &endpoint)?;
    enhance_with_policy(cfg, manifest)?;
    enhance_with_nearest_neighbor(cfg, manifest)?;
    if options.with_oracle {
        enhance_with_oracle(cfg, manifest)?;
    }
    let systems = default_systems(options.with_oracle);
    let report = evaluate(cfg, manifest, &endpoint, &systems)?;
    report.save(&cfg.work_dir)?;
    std::fs::write(cfg.work_dir.join(REPORT_TEXT), report.render())?;
    write_plot_data(cfg, manifest, Some(&load_codebook(cfg)?), &systems)?;
    Ok(report)
}
