use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rlse_core::features::{istft, log_features};
use rlse_core::pipeline::dataset::{
    load_rows, prepare, Calibration, DatasetManifest, Split, CALIBRATION_FILE, MANIFEST_FILE,
};
use rlse_core::pipeline::enhance::{enhance_waveform, MaskSelector, NnIndex};
use rlse_core::pipeline::evaluate::{evaluate, Report, NOISY};
use rlse_core::pipeline::stages::{build_codebook, noisy_features, resolve_endpoint};
use rlse_core::pipeline::synth::{write_corpus, CorpusSpec};
use rlse_core::pipeline::ExperimentConfig;
use rlse_core::RecognizerEndpoint;

fn small_corpus(dir: &Path) -> std::path::PathBuf {
    write_corpus(
        dir,
        &CorpusSpec {
            train: 4,
            test: 2,
            utterance_secs: 1.0,
            noise_secs: 12.0,
            seed: 11,
            sample_rate: 16_000,
        },
    )
    .unwrap()
}

fn config(work: &Path) -> ExperimentConfig {
    ExperimentConfig {
        work_dir: work.to_path_buf(),
        seed: 3,
        clusters: 8,
        ..ExperimentConfig::default()
    }
}

#[test]
fn prepare_counts_determinism_and_disjoint_noise() {
    let corpus = tempfile::tempdir().unwrap();
    let noise = small_corpus(corpus.path());
    let (w1, w2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let m1 = prepare(&config(w1.path()), corpus.path(), &noise).unwrap();
    let m2 = prepare(&config(w2.path()), corpus.path(), &noise).unwrap();

    assert_eq!(m1.rows(Split::Train).count(), 4);
    assert_eq!(m1.rows(Split::Test).count(), 2 * 2);
    assert!(m1.rows(Split::Train).all(|r| r.snr_db == 5.0));
    assert_eq!(m1.test_snrs(), vec![0.0, 5.0]);
    assert_eq!(m1, m2);
    assert_eq!(
        std::fs::read(w1.path().join(MANIFEST_FILE)).unwrap(),
        std::fs::read(w2.path().join(MANIFEST_FILE)).unwrap()
    );
    for row in &m1.rows {
        for rel in [&row.clean, &row.noise, &row.mixed] {
            assert_eq!(
                std::fs::read(w1.path().join(rel)).unwrap(),
                std::fs::read(w2.path().join(rel)).unwrap(),
                "{rel}"
            );
        }
    }

    let noise_len = rlse_core::Waveform::read_wav(&noise).unwrap().len();
    let half = noise_len / 2;
    for row in &m1.rows {
        let range = row.noise_range();
        match row.split {
            Split::Train => assert!(range.end <= half, "{range:?}"),
            Split::Test => assert!(range.start >= half && range.end <= 2 * half, "{range:?}"),
        }
    }

    assert_eq!(DatasetManifest::load(w1.path().join(MANIFEST_FILE)).unwrap(), m1);
    let cal = Calibration::load(w1.path().join(CALIBRATION_FILE)).unwrap();
    assert!(cal.lsd_cal > 0.0);

    // Different seed, different mixtures.
    let w3 = tempfile::tempdir().unwrap();
    let m3 = prepare(&config(w3.path()).with_seed(4), corpus.path(), &noise).unwrap();
    assert_ne!(m1, m3);
}

#[test]
fn nearest_neighbor_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let points: Vec<Vec<f64>> = (0..300)
        .map(|_| (0..12).map(|_| rng.gen_range(-5.0..5.0)).collect())
        .collect();
    let labels: Vec<usize> = (0..300).map(|i| i % 7).collect();
    let index = NnIndex::new(points.clone(), labels.clone()).unwrap();
    for _ in 0..200 {
        let q: Vec<f64> = (0..12).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let mut best = 0;
        let dist = |p: &Vec<f64>| p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        for (i, p) in points.iter().enumerate() {
            if dist(p) < dist(&points[best]) {
                best = i;
            }
        }
        assert_eq!(index.nearest(&q).unwrap(), best);
        assert_eq!(index.label_for(&q).unwrap(), labels[best]);
    }
    for i in [0, 17, 299] {
        assert_eq!(index.label_for(&points[i]).unwrap(), labels[i]);
    }
}

#[test]
fn stages_on_prepared_data() {
    let corpus = tempfile::tempdir().unwrap();
    let noise = small_corpus(corpus.path());
    let work = tempfile::tempdir().unwrap();
    let cfg = config(work.path());
    let manifest = prepare(&cfg, corpus.path(), &noise).unwrap();
    let kmeans = build_codebook(&cfg, &manifest).unwrap();
    let codebook = &kmeans.codebook;
    assert_eq!(codebook.len(), 8);
    assert_eq!(codebook.dim(), cfg.mask_dim());
    assert!(kmeans.objective_history.windows(2).all(|w| w[1] <= w[0]));

    // A training context maps to its own stored label.
    let index = NnIndex::build(&cfg, &manifest, codebook).unwrap();
    let extractor = cfg.extractor().unwrap();
    let train = load_rows(&cfg.work_dir, &manifest, Split::Train).unwrap();
    let (_, _, contexts) = noisy_features(&cfg, &extractor, &train[0].mixed).unwrap();
    let q = log_features(&contexts[3]);
    assert_eq!(index.point(index.nearest(&q).unwrap()), q.as_slice());

    // An all-ones codebook entry reproduces plain resynthesis.
    let ones = rlse_core::Codebook::new(
        vec![
            rlse_core::IbmVector::ones(cfg.mask_dim()),
            rlse_core::IbmVector::zeros(cfg.mask_dim()),
        ],
        0,
        0,
    )
    .unwrap();
    let test = load_rows(&cfg.work_dir, &manifest, Split::Test).unwrap();
    let noisy = &test[0].mixed;
    let out = enhance_waveform(&cfg, &extractor, Some(&ones), &MaskSelector::Fixed(0), noisy).unwrap();
    let resynth = istft(&extractor.spectrogram(noisy).unwrap(), &cfg.stft, 16_000)
        .unwrap()
        .resized(noisy.len());
    let diff = out
        .waveform
        .samples()
        .iter()
        .zip(resynth.samples())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-9, "{diff}");
    let silent = enhance_waveform(&cfg, &extractor, Some(&ones), &MaskSelector::Fixed(1), noisy).unwrap();
    assert!(silent.waveform.samples().iter().all(|&x| x == 0.0));

    // Enhancement is a pure function of its inputs.
    let nn = MaskSelector::NearestNeighbor(&index);
    let a = enhance_waveform(&cfg, &extractor, Some(codebook), &nn, noisy).unwrap();
    let b = enhance_waveform(&cfg, &extractor, Some(codebook), &nn, noisy).unwrap();
    assert_eq!(a.actions, b.actions);
    assert_eq!(a.waveform, b.waveform);

    // Mock endpoint from calibration; an explicit command wins.
    let endpoint = resolve_endpoint(&cfg, None).unwrap();
    assert!(matches!(endpoint, RecognizerEndpoint::Mock { .. }));
    assert!(matches!(
        resolve_endpoint(&cfg, Some("cat")).unwrap(),
        RecognizerEndpoint::External { .. }
    ));

    // Only the noisy system exists yet; the missing one is reported.
    let report = evaluate(&cfg, &manifest, &endpoint, &["rlse"]).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert!(report.rows.iter().all(|r| r.system == NOISY && r.relative_reduction_pct == 0.0));
    assert_eq!(report.missing.len(), test.len());
    report.save(work.path()).unwrap();
    let loaded = Report::load(work.path()).unwrap();
    assert_eq!(loaded.rows, report.rows);
    assert_eq!(loaded.per_utterance, report.per_utterance);
    assert!(report.render().contains("noisy"));
}
