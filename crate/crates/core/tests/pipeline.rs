//! Corpus on disk through training and detection.

use std::fs;

use powerprint::features::{l2_distance, FEATURE_NAMES};
use powerprint::pipeline::{detect, load_corpus, prepare_runs, train, ModelBundle, PipelineConfig};
use powerprint::synth::{generate_corpus, generate_corpus_runs, CorpusConfig, RunSpec, TaskSpec};
use powerprint::trace::{read_manifest, IDLE};

fn small_corpus_config() -> CorpusConfig {
    CorpusConfig {
        families: 2,
        runs_per_family: 2,
        clean_runs: 5,
        run: RunSpec {
            tasks: vec![TaskSpec::browser(), TaskSpec::registry()],
            ..RunSpec::default()
        },
        ..CorpusConfig::default()
    }
}

#[test]
fn disk_corpus_matches_memory_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_corpus_config();
    let index = generate_corpus(&cfg, dir.path()).unwrap();
    assert_eq!(index.runs.len(), 9);
    let pcfg = PipelineConfig {
        training_clean: 3,
        ..PipelineConfig::default()
    };
    let from_disk = load_corpus(dir.path(), &pcfg).unwrap();
    let in_memory = prepare_runs(&generate_corpus_runs(&cfg).unwrap(), &pcfg).unwrap();
    assert_eq!(from_disk, in_memory);

    let bundle = train(&from_disk, &pcfg).unwrap();
    let reloaded = ModelBundle::from_json(&bundle.to_json().unwrap()).unwrap();
    let a = detect(&bundle, &from_disk).unwrap();
    let b = detect(&reloaded, &from_disk).unwrap();
    assert_eq!(a, b);
    for d in &a {
        for feats in d.features.tasks.values() {
            assert!(feats.keys().all(|k| FEATURE_NAMES.contains(&k.as_str())));
        }
    }
}

#[test]
fn corrupt_run_is_named_in_the_error() {
    let dir = tempfile::tempdir().unwrap();
    generate_corpus(&small_corpus_config(), dir.path()).unwrap();
    let path = dir.path().join("clean-01.json");
    let mut manifest = read_manifest(&path).unwrap();
    manifest.task_order.push("Extra".into());
    fs::write(&path, serde_json::to_string(&manifest).unwrap()).unwrap();
    let err = load_corpus(dir.path(), &PipelineConfig::default()).unwrap_err().to_string();
    assert!(err.contains("clean-01"), "{err}");
}

#[test]
fn clean_l2_distances_concentrate() {
    let cfg = CorpusConfig {
        families: 1,
        runs_per_family: 1,
        clean_runs: 12,
        run: RunSpec {
            tasks: vec![TaskSpec::idle()],
            ..RunSpec::default()
        },
        ..CorpusConfig::default()
    };
    let pcfg = PipelineConfig::default();
    let runs = prepare_runs(&generate_corpus_runs(&cfg).unwrap(), &pcfg).unwrap();
    let bundle = train(&runs, &pcfg).unwrap();
    let baseline = &bundle.tasks[IDLE].baseline;
    let l2: Vec<f64> = runs
        .iter()
        .filter(|r| !r.label.is_infected())
        .map(|r| l2_distance(&r.segments[0].profile, baseline).unwrap())
        .collect();
    let mean = l2.iter().sum::<f64>() / l2.len() as f64;
    let sd = (l2.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / l2.len() as f64).sqrt();
    assert!(sd / mean < 0.5, "coefficient of variation {}", sd / mean);
}
