//! `rlse`: data preparation, training, enhancement and evaluation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use rlse_core::pipeline::dataset::{prepare, DatasetManifest, Split, MANIFEST_FILE};
use rlse_core::pipeline::enhance::{
    enhance_file, enhance_with_nearest_neighbor, enhance_with_oracle, enhance_with_policy, enhanced_path,
    MaskSelector, NnIndex, SYSTEM_1NN, SYSTEM_ORACLE, SYSTEM_RLSE,
};
use rlse_core::pipeline::evaluate::{evaluate, write_plot_data, Report, REPORT_FILE};
use rlse_core::pipeline::run::{default_systems, REPORT_TEXT};
use rlse_core::pipeline::stages::{
    build_codebook, load_codebook, resolve_endpoint, run_pretrain, run_rl_train, save_resolved_config,
    ACTION_MODEL_FILE, CODEBOOK_FILE, MASK_MODEL_FILE,
};
use rlse_core::pipeline::synth::{write_corpus, CorpusSpec, NOISE_FILE};
use rlse_core::{ExperimentConfig, PolicyModel};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_RECOGNIZER: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "rlse", version, about = "Recognizer-driven binary-mask speech enhancement")]
struct Cli {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the work directory from the configuration.
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
    /// Seed applied to every stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// External recognizer command; otherwise $RLSE_RECOGNIZER_CMD, then the mock.
    #[arg(long, global = true)]
    recognizer_cmd: Option<String>,
    /// Recompute outputs that already exist.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Writes a synthetic corpus: train/ and test/ clean WAVs plus noise.wav.
    Synth(SynthArgs),
    /// Mixes clean speech with disjoint halves of the noise file.
    Prepare(PrepareArgs),
    /// Clusters the training-chunk binary masks into the codebook.
    BuildCodebook,
    /// Trains the mask estimator on noisy contexts and ideal masks.
    Pretrain,
    /// Reinforcement training of the action estimator against the recognizer.
    TrainRl,
    /// Enhances the test set (or one file) with the action estimator.
    Enhance(EnhanceArgs),
    /// Enhances the test set (or one file) with the nearest-neighbour baseline.
    #[command(name = "baseline-1nn")]
    Baseline1nn(FileArgs),
    /// Scores the noisy mixtures and every enhanced system.
    Evaluate(EvaluateArgs),
    /// Prints the last evaluation.
    Report,
    /// Every stage in order, skipping finished ones.
    Run(RunArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 24)]
    train: usize,
    #[arg(long, default_value_t = 8)]
    test: usize,
    #[arg(long, default_value_t = 1.5)]
    secs: f64,
    #[arg(long, default_value_t = 60.0)]
    noise_secs: f64,
}

#[derive(Args, Debug)]
struct PrepareArgs {
    /// Directory with train/*.wav and test/*.wav (optional .txt transcripts).
    #[arg(long)]
    clean_dir: PathBuf,
    #[arg(long)]
    noise: PathBuf,
}

#[derive(Args, Debug)]
struct FileArgs {
    /// Single input WAV; the whole test set when omitted.
    #[arg(long, requires = "output")]
    input: Option<PathBuf>,
    #[arg(long, requires = "input")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EnhanceArgs {
    #[command(flatten)]
    file: FileArgs,
    /// Uses true ideal binary masks instead of the model (test set only).
    #[arg(long, conflicts_with = "input")]
    oracle: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Systems to score besides the noisy input.
    #[arg(long, value_delimiter = ',', default_values_t = default_systems(false).iter().map(|s| s.to_string()).collect::<Vec<_>>())]
    systems: Vec<String>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    prepare: PrepareArgs,
    /// Also produce and score the oracle-mask upper bound.
    #[arg(long)]
    oracle: bool,
}

/// Bad invocation or configuration.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<rlse_core::Error>() {
            if e.is_recognizer() {
                return EXIT_RECOGNIZER;
            }
        }
    }
    EXIT_DATA
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = &cli.work_dir {
        cfg.work_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    cfg.validate().map_err(|e| UsageError(format!("config: {e}")))?;
    Ok(cfg)
}

struct Ctx {
    cfg: ExperimentConfig,
    force: bool,
    recognizer_cmd: Option<String>,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.cfg.work_dir.join(name)
    }

    /// True when the stage should run; logs the skip otherwise.
    fn should_run(&self, stage: &str, outputs: &[PathBuf]) -> bool {
        if self.force || outputs.is_empty() || !outputs.iter().all(|p| p.exists()) {
            return true;
        }
        log::info!("{stage}: outputs exist, skipping (use --force to recompute)");
        false
    }

    fn manifest(&self) -> Result<DatasetManifest> {
        let path = self.path(MANIFEST_FILE);
        DatasetManifest::load(&path)
            .with_context(|| format!("reading {} (run `rlse prepare` first)", path.display()))
    }

    fn test_outputs(&self, manifest: &DatasetManifest, system: &str) -> Vec<PathBuf> {
        manifest
            .rows(Split::Test)
            .map(|r| self.cfg.work_dir.join(enhanced_path(system, r)))
            .collect()
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(UsageError("--jobs must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let cfg = load_config(&cli)?;
    let ctx = Ctx {
        cfg,
        force: cli.force,
        recognizer_cmd: cli.recognizer_cmd.clone(),
    };
    match cli.command {
        Command::Synth(a) => synth(&ctx, &a),
        Command::Prepare(a) => stage_prepare(&ctx, &a),
        Command::BuildCodebook => stage_codebook(&ctx),
        Command::Pretrain => stage_pretrain(&ctx),
        Command::TrainRl => stage_rl(&ctx),
        Command::Enhance(a) => stage_enhance(&ctx, &a),
        Command::Baseline1nn(a) => stage_baseline(&ctx, &a),
        Command::Evaluate(a) => stage_evaluate(&ctx, &a.systems),
        Command::Report => print_report(&ctx),
        Command::Run(a) => {
            stage_prepare(&ctx, &a.prepare)?;
            stage_codebook(&ctx)?;
            stage_pretrain(&ctx)?;
            stage_rl(&ctx)?;
            stage_enhance(&ctx, &EnhanceArgs { file: FileArgs { input: None, output: None }, oracle: false })?;
            stage_baseline(&ctx, &FileArgs { input: None, output: None })?;
            if a.oracle {
                stage_enhance(&ctx, &EnhanceArgs { file: FileArgs { input: None, output: None }, oracle: true })?;
            }
            let systems: Vec<String> = default_systems(a.oracle).iter().map(|s| s.to_string()).collect();
            stage_evaluate(&ctx, &systems)?;
            print_report(&ctx)
        }
    }
}

fn synth(ctx: &Ctx, a: &SynthArgs) -> Result<()> {
    if a.train == 0 || a.test == 0 || a.secs <= 0.0 || a.noise_secs <= 0.0 {
        return Err(UsageError("counts and durations must be positive".into()).into());
    }
    let noise = a.out.join(NOISE_FILE);
    if !ctx.should_run("synth", std::slice::from_ref(&noise)) {
        return Ok(());
    }
    let spec = CorpusSpec {
        train: a.train,
        test: a.test,
        utterance_secs: a.secs,
        noise_secs: a.noise_secs,
        seed: ctx.cfg.seed,
        sample_rate: ctx.cfg.sample_rate,
    };
    let path = write_corpus(&a.out, &spec)?;
    log::info!("synthetic corpus in {}; noise {}", a.out.display(), path.display());
    Ok(())
}

fn stage_prepare(ctx: &Ctx, a: &PrepareArgs) -> Result<()> {
    if !ctx.should_run("prepare", &[ctx.path(MANIFEST_FILE)]) {
        return Ok(());
    }
    save_resolved_config(&ctx.cfg)?;
    let m = prepare(&ctx.cfg, &a.clean_dir, &a.noise)?;
    log::info!(
        "prepare: {} train and {} test mixtures",
        m.rows(Split::Train).count(),
        m.rows(Split::Test).count()
    );
    Ok(())
}

fn stage_codebook(ctx: &Ctx) -> Result<()> {
    if !ctx.should_run("build-codebook", &[ctx.path(CODEBOOK_FILE)]) {
        return Ok(());
    }
    let manifest = ctx.manifest()?;
    save_resolved_config(&ctx.cfg)?;
    let r = build_codebook(&ctx.cfg, &manifest)?;
    log::info!(
        "build-codebook: {} clusters, objective {} after {} iterations{}",
        r.codebook.len(),
        r.objective(),
        r.codebook.iterations(),
        if r.converged { "" } else { " (not converged)" }
    );
    Ok(())
}

fn stage_pretrain(ctx: &Ctx) -> Result<()> {
    if !ctx.should_run("pretrain", &[ctx.path(MASK_MODEL_FILE)]) {
        return Ok(());
    }
    let manifest = ctx.manifest()?;
    save_resolved_config(&ctx.cfg)?;
    let out = run_pretrain(&ctx.cfg, &manifest)?;
    log::info!("pretrain: loss {:.5} -> {:.5}", out.initial_loss, out.final_loss());
    Ok(())
}

fn stage_rl(ctx: &Ctx) -> Result<()> {
    if !ctx.should_run("train-rl", &[ctx.path(ACTION_MODEL_FILE)]) {
        return Ok(());
    }
    let manifest = ctx.manifest()?;
    save_resolved_config(&ctx.cfg)?;
    let endpoint = resolve_endpoint(&ctx.cfg, ctx.recognizer_cmd.as_deref())?;
    let run = run_rl_train(&ctx.cfg, &manifest, &endpoint)?;
    if let Some(last) = run.stats.last() {
        log::info!(
            "train-rl: final mean z_enhanced {:.4} vs noisy {:.4}",
            last.mean_z_enhanced,
            last.mean_z_noisy
        );
    }
    Ok(())
}

fn single_file(ctx: &Ctx, selector: &MaskSelector<'_>, input: &Path, output: &Path) -> Result<()> {
    let extractor = ctx.cfg.extractor()?;
    let codebook = load_codebook(&ctx.cfg)?;
    if !ctx.should_run("enhance", &[output.to_path_buf()]) {
        return Ok(());
    }
    enhance_file(&ctx.cfg, &extractor, &codebook, selector, input, output)?;
    log::info!("wrote {}", output.display());
    Ok(())
}

fn stage_enhance(ctx: &Ctx, a: &EnhanceArgs) -> Result<()> {
    if let (Some(input), Some(output)) = (&a.file.input, &a.file.output) {
        let model = PolicyModel::load(ctx.path(ACTION_MODEL_FILE))?;
        return single_file(ctx, &MaskSelector::Policy(&model), input, output);
    }
    let manifest = ctx.manifest()?;
    let system = if a.oracle { SYSTEM_ORACLE } else { SYSTEM_RLSE };
    if !ctx.should_run(&format!("enhance {system}"), &ctx.test_outputs(&manifest, system)) {
        return Ok(());
    }
    save_resolved_config(&ctx.cfg)?;
    let written = if a.oracle {
        enhance_with_oracle(&ctx.cfg, &manifest)?
    } else {
        enhance_with_policy(&ctx.cfg, &manifest)?
    };
    log::info!("enhance: {} files for {system}", written.len());
    Ok(())
}

fn stage_baseline(ctx: &Ctx, a: &FileArgs) -> Result<()> {
    let manifest = ctx.manifest()?;
    if let (Some(input), Some(output)) = (&a.input, &a.output) {
        let codebook = load_codebook(&ctx.cfg)?;
        let index = NnIndex::build(&ctx.cfg, &manifest, &codebook)?;
        return single_file(ctx, &MaskSelector::NearestNeighbor(&index), input, output);
    }
    if !ctx.should_run("baseline-1nn", &ctx.test_outputs(&manifest, SYSTEM_1NN)) {
        return Ok(());
    }
    save_resolved_config(&ctx.cfg)?;
    let written = enhance_with_nearest_neighbor(&ctx.cfg, &manifest)?;
    log::info!("baseline-1nn: {} files", written.len());
    Ok(())
}

fn stage_evaluate(ctx: &Ctx, systems: &[String]) -> Result<()> {
    if !ctx.should_run("evaluate", &[ctx.path(REPORT_FILE), ctx.path(REPORT_TEXT)]) {
        return Ok(());
    }
    let manifest = ctx.manifest()?;
    save_resolved_config(&ctx.cfg)?;
    let endpoint = resolve_endpoint(&ctx.cfg, ctx.recognizer_cmd.as_deref())?;
    let systems: Vec<&str> = systems.iter().map(String::as_str).collect();
    let report = evaluate(&ctx.cfg, &manifest, &endpoint, &systems)?;
    for m in &report.missing {
        log::warn!("missing output: {m}");
    }
    report.save(&ctx.cfg.work_dir)?;
    std::fs::write(ctx.path(REPORT_TEXT), report.render())?;
    let codebook = load_codebook(&ctx.cfg).ok();
    write_plot_data(&ctx.cfg, &manifest, codebook.as_ref(), &systems)?;
    log::info!("evaluate: {} rows written to {}", report.rows.len(), ctx.path(REPORT_FILE).display());
    Ok(())
}

fn print_report(ctx: &Ctx) -> Result<()> {
    let path = ctx.path(REPORT_FILE);
    let report = Report::load(&ctx.cfg.work_dir)
        .with_context(|| format!("reading {} (run `rlse evaluate` first)", path.display()))?;
    print!("{}", report.render());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
