use std::path::Path;
use std::process::{Command, Output};

fn rlse(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rlse"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("RLSE_RECOGNIZER_CMD")
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn ok(out: Output) -> Output {
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

const CONFIG: &str = "work_dir = \"work\"\nclusters = 8\n\n[pretrain]\nepochs = 5\n\n[rl]\nepochs = 2\n";

fn setup(dir: &Path) {
    std::fs::write(dir.join("exp.toml"), CONFIG).unwrap();
    ok(rlse(
        dir,
        &["synth", "--out", "corpus", "--train", "4", "--test", "2", "--secs", "1", "--noise-secs", "12"],
    ));
}

fn mtime(p: &Path) -> std::time::SystemTime {
    std::fs::metadata(p).unwrap().modified().unwrap()
}

#[test]
fn help_version_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&rlse(dir.path(), &["--help"])), 0);
    assert_eq!(code(&rlse(dir.path(), &["--version"])), 0);
    assert_eq!(code(&rlse(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&rlse(dir.path(), &["prepare"])), 1);
    assert_eq!(code(&rlse(dir.path(), &["--jobs", "0", "report"])), 1);

    std::fs::write(dir.path().join("bad.toml"), "clusters = 1\n").unwrap();
    assert_eq!(code(&rlse(dir.path(), &["--config", "bad.toml", "report"])), 1);
    std::fs::write(dir.path().join("junk.toml"), "clusters = [\n").unwrap();
    assert_eq!(code(&rlse(dir.path(), &["--config", "junk.toml", "report"])), 1);
    assert_eq!(code(&rlse(dir.path(), &["--config", "absent.toml", "report"])), 1);
}

#[test]
fn missing_inputs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&rlse(dir.path(), &["--work-dir", "w", "build-codebook"])), 2);
    assert_eq!(code(&rlse(dir.path(), &["--work-dir", "w", "report"])), 2);
    let out = rlse(
        dir.path(),
        &["--work-dir", "w", "prepare", "--clean-dir", "nowhere", "--noise", "none.wav"],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn stage_chain_is_idempotent_and_forceable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let cfg = ["--config", "exp.toml"];
    let with = |rest: &[&str]| -> Vec<String> { cfg.iter().chain(rest).map(|s| s.to_string()).collect() };
    let run = |rest: &[&str]| {
        let args = with(rest);
        ok(rlse(d, &args.iter().map(String::as_str).collect::<Vec<_>>()))
    };

    run(&["prepare", "--clean-dir", "corpus", "--noise", "corpus/noise.wav"]);
    run(&["build-codebook"]);
    run(&["pretrain"]);
    run(&["train-rl"]);
    run(&["enhance"]);
    run(&["baseline-1nn"]);
    run(&["enhance", "--oracle"]);
    run(&["evaluate", "--systems", "1nnse,rlse,oracle"]);
    let report = String::from_utf8(run(&["report"]).stdout).unwrap();
    for system in ["noisy", "1nnse", "rlse", "oracle"] {
        assert!(report.contains(system), "{report}");
    }

    let work = d.join("work");
    for f in [
        "manifest.csv",
        "codebook.bin",
        "mask_estimator.model",
        "action_estimator.model",
        "rl_log.csv",
        "report.csv",
        "report.txt",
        "per_utterance.csv",
        "config.resolved.toml",
        "plots/codebook.dat",
    ] {
        assert!(work.join(f).is_file(), "{f}");
    }

    // A second invocation leaves outputs alone; --force rewrites them.
    let model = work.join("action_estimator.model");
    let before = mtime(&model);
    std::thread::sleep(std::time::Duration::from_millis(20));
    run(&["train-rl"]);
    assert_eq!(mtime(&model), before);
    let bytes = std::fs::read(&model).unwrap();
    run(&["--force", "train-rl"]);
    assert!(mtime(&model) > before);
    assert_eq!(std::fs::read(&model).unwrap(), bytes, "forced rerun is deterministic");

    // Single-file enhancement.
    let input = std::fs::read_dir(work.join("audio"))
        .unwrap()
        .flat_map(|e| walk(&e.unwrap().path()))
        .find(|p| p.extension().is_some_and(|e| e == "wav"))
        .unwrap();
    let input = input.to_str().unwrap();
    run(&["enhance", "--input", input, "--output", "one.wav"]);
    run(&["baseline-1nn", "--input", input, "--output", "two.wav"]);
    assert!(d.join("one.wav").is_file() && d.join("two.wav").is_file());
}

fn walk(p: &Path) -> Vec<std::path::PathBuf> {
    if p.is_dir() {
        std::fs::read_dir(p).unwrap().flat_map(|e| walk(&e.unwrap().path())).collect()
    } else {
        vec![p.to_path_buf()]
    }
}

#[test]
fn recognizer_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    for split in ["train", "test"] {
        for e in std::fs::read_dir(d.join("corpus").join(split)).unwrap() {
            let p = e.unwrap().path();
            std::fs::write(p.with_extension("txt"), "abc").unwrap();
        }
    }
    ok(rlse(
        d,
        &["--config", "exp.toml", "prepare", "--clean-dir", "corpus", "--noise", "corpus/noise.wav"],
    ));
    ok(rlse(d, &["--config", "exp.toml", "build-codebook"]));
    ok(rlse(d, &["--config", "exp.toml", "pretrain"]));

    let dead = rlse(d, &["--config", "exp.toml", "--recognizer-cmd", "exit 1", "train-rl"]);
    assert_eq!(code(&dead), 3, "{}", String::from_utf8_lossy(&dead.stderr));
    let dead = rlse(d, &["--config", "exp.toml", "--recognizer-cmd", "exit 1", "evaluate"]);
    assert_eq!(code(&dead), 3, "{}", String::from_utf8_lossy(&dead.stderr));

    // A recognizer that always answers "abd" scores 1/3 everywhere.
    std::fs::write(
        d.join("asr.sh"),
        "while IFS= read -r line; do\n  id=$(printf '%s' \"$line\" | sed -n 's/.*\"id\":\"\\([^\"]*\\)\".*/\\1/p')\n  printf '{\"id\":\"%s\",\"transcript\":\"abd\"}\\n' \"$id\"\ndone\n",
    )
    .unwrap();
    ok(rlse(d, &["--config", "exp.toml", "--recognizer-cmd", "sh asr.sh", "evaluate"]));
    let csv = std::fs::read_to_string(d.join("work/per_utterance.csv")).unwrap();
    assert!(csv.lines().count() > 1);
    assert!(csv.lines().skip(1).all(|l| l.contains("0.333")), "{csv}");
}
