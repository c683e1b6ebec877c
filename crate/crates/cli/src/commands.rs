use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use powerprint::detect::Metrics;
use powerprint::pipeline::{
    detect, evaluate_ensemble_on, evaluate_svms, load_corpus, load_run, train, ModelBundle, PreparedRun,
};
use powerprint::synth::{generate_corpus, CorpusIndex, INDEX_FILE};

use crate::config::{Config, Overrides};
use crate::report::{write_atomic, write_json, z_table_csv, DetectionReport, EvaluationReport, SCHEMA_VERSION};

/// A flag value, else the config file's, else an error naming both.
pub fn resolve(flag: Option<&Path>, configured: Option<&PathBuf>, what: &str) -> Result<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| configured.cloned())
        .ok_or_else(|| anyhow!("no {what} given: pass it as a flag or set it under [paths]"))
}

pub fn cmd_generate(cfg: &Config, out: &Path) -> Result<CorpusIndex> {
    let index = generate_corpus(&cfg.corpus, out).with_context(|| format!("generating corpus in {}", out.display()))?;
    log::info!("wrote {} runs to {}", index.runs.len(), out.display());
    Ok(index)
}

/// Fails unless every run carries every task of the configured protocol.
fn check_protocol(runs: &[PreparedRun], cfg: &Config) -> Result<()> {
    for task in cfg.corpus.run.tasks.iter().map(|t| &t.name) {
        let missing: Vec<&str> = runs
            .iter()
            .filter(|r| !r.manifest.task_order.contains(task))
            .map(PreparedRun::run_id)
            .collect();
        if !missing.is_empty() {
            bail!("task `{task}` is missing from runs: {}", missing.join(", "));
        }
    }
    Ok(())
}

pub fn cmd_train(cfg: &Config, corpus: &Path, out: &Path) -> Result<ModelBundle> {
    let runs = load_corpus(corpus, &cfg.pipeline).with_context(|| format!("loading {}", corpus.display()))?;
    check_protocol(&runs, cfg)?;
    let bundle = train(&runs, &cfg.pipeline)?;
    write_atomic(out, bundle.to_json()?.as_bytes())?;
    Ok(bundle)
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ModelBundle::from_json(&text).with_context(|| format!("loading model bundle {}", path.display()))
}

pub enum Target {
    /// A single run's manifest.
    Run(PathBuf),
    /// A corpus directory with an index.
    Corpus(PathBuf),
}

impl Target {
    pub fn infer(path: PathBuf) -> Self {
        if path.is_dir() || path.join(INDEX_FILE).exists() {
            Target::Corpus(path)
        } else {
            Target::Run(path)
        }
    }
}

pub fn cmd_detect(
    model: &Path,
    target: &Target,
    overrides: &Overrides,
    report: Option<&Path>,
    csv: Option<&Path>,
) -> Result<DetectionReport> {
    let mut bundle = load_bundle(model)?;
    let mut options = bundle.ensemble.options.clone();
    if let Some(subset) = &overrides.subset {
        options.subset = subset.clone();
    }
    options.two_sided |= overrides.two_sided;
    bundle = bundle.with_options(&options)?;

    let runs = match target {
        Target::Run(p) => vec![load_run(p, &bundle.config).with_context(|| format!("loading {}", p.display()))?],
        Target::Corpus(p) => load_corpus(p, &bundle.config).with_context(|| format!("loading {}", p.display()))?,
    };
    let known: BTreeSet<&String> = bundle.tasks.keys().collect();
    for run in &runs {
        if let Some(task) = run.segments.iter().find(|s| !known.contains(&s.task)) {
            bail!("run `{}` has task `{}`, which the model was not trained on", run.run_id(), task.task);
        }
    }
    let runs_found = detect(&bundle, &runs)?;
    let metrics = Metrics::from_predictions(
        runs_found
            .iter()
            .map(|d| (d.label.is_infected(), d.classification.verdict.is_infected())),
    );
    let out = DetectionReport {
        schema_version: SCHEMA_VERSION,
        subset: bundle.ensemble.options.subset.clone(),
        two_sided: bundle.ensemble.options.two_sided,
        vote_mean: bundle.ensemble.vote_mean,
        vote_std: bundle.ensemble.vote_std,
        vote_threshold: bundle.ensemble.vote_threshold(),
        runs: runs_found,
        metrics,
    };
    if let Some(p) = report {
        write_json(p, &out)?;
    }
    if let Some(p) = csv {
        write_atomic(p, &z_table_csv(&out)?)?;
    }
    Ok(out)
}

pub fn load_detection_report(path: &Path) -> Result<DetectionReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let report: DetectionReport = serde_json::from_str(&text)?;
    if report.schema_version != SCHEMA_VERSION {
        bail!("report schema {} is not the supported {SCHEMA_VERSION}", report.schema_version);
    }
    Ok(report)
}

pub fn cmd_evaluate(cfg: &Config, corpus: &Path, report: Option<&Path>, svm: bool) -> Result<EvaluationReport> {
    let runs = load_corpus(corpus, &cfg.pipeline).with_context(|| format!("loading {}", corpus.display()))?;
    let ensemble = evaluate_ensemble_on(&runs, &cfg.pipeline)?;
    let svms = if svm { evaluate_svms(&runs, &cfg.pipeline)? } else { Vec::new() };
    let out = EvaluationReport::new(ensemble, svms);
    if let Some(p) = report {
        write_json(p, &out)?;
    }
    Ok(out)
}
