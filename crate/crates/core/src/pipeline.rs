//! End-to-end wiring: corpus loading and segmentation, model training,
//! detection and evaluation.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::detect::{
    classify, cross_validate, design_matrix, evaluate_ensemble, fit_ensemble, holdout_folds, smo_train,
    standard_kernels, svm_predict, vote, Classification, CrossValidation, EnsembleEvaluation, EnsembleModel,
    EnsembleOptions, Kernel, KernelEvaluation, LabeledVector, PeReference, VoteRecord, DEFAULT_C, DEFAULT_TOL,
};
use crate::error::{Error, Result};
use crate::features::{extract_features, learn_task_model, EntropyEstimator, FeatureConfig, FeatureVector, TaskModel};
use crate::synth::{CorpusIndex, INDEX_FILE};
use crate::trace::{
    detect_markers, load_power_trace, read_manifest, resample_uniform, segment_tasks, Label, MarkerConfig,
    PowerTrace, RunManifest, TaskSegment, DEFAULT_DT, DEFAULT_GUARD_SECONDS, DEFAULT_RAIL,
};

/// Bumped whenever [`ModelBundle`] changes shape.
pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    pub kernels: Vec<Kernel>,
    pub c: f64,
    pub tol: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            kernels: standard_kernels(),
            c: DEFAULT_C,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub rail: String,
    pub dt: f64,
    pub guard_seconds: f64,
    pub markers: MarkerConfig,
    pub features: FeatureConfig,
    pub ensemble: EnsembleOptions,
    /// Clean runs, in corpus order, used to fit the detectors.
    pub training_clean: usize,
    pub svm: SvmConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            rail: DEFAULT_RAIL.into(),
            dt: DEFAULT_DT,
            guard_seconds: DEFAULT_GUARD_SECONDS,
            markers: MarkerConfig::default(),
            features: FeatureConfig::default(),
            ensemble: EnsembleOptions::default(),
            training_clean: 10,
            svm: SvmConfig::default(),
            seed: 42,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.guard_seconds >= 0.0) {
            return Err(Error::InvalidInput("guard_seconds must be nonnegative".into()));
        }
        if self.training_clean < 2 {
            return Err(Error::InvalidInput("training_clean must be at least 2".into()));
        }
        if !(self.svm.c > 0.0 && self.svm.tol > 0.0) {
            return Err(Error::InvalidInput("svm c and tol must be positive".into()));
        }
        self.markers.validate()?;
        self.features.validate()
    }
}

/// A run cut into its tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedRun {
    pub manifest: RunManifest,
    pub label: Label,
    pub segments: Vec<TaskSegment>,
}

impl PreparedRun {
    pub fn run_id(&self) -> &str {
        &self.manifest.run_id
    }
}

/// Resamples, finds markers and segments one run.
pub fn prepare_run(trace: &PowerTrace, manifest: &RunManifest, cfg: &PipelineConfig) -> Result<PreparedRun> {
    let profile = resample_uniform(trace, cfg.dt)?;
    let markers = detect_markers(&profile, &cfg.markers);
    let segments = segment_tasks(&profile, &markers, manifest, cfg.guard_seconds)?;
    Ok(PreparedRun {
        label: manifest.label()?,
        manifest: manifest.clone(),
        segments,
    })
}

/// Prepares every run, reporting all failures together.
pub fn prepare_runs(runs: &[(PowerTrace, RunManifest)], cfg: &PipelineConfig) -> Result<Vec<PreparedRun>> {
    let results: Vec<Result<PreparedRun>> = runs.par_iter().map(|(t, m)| prepare_run(t, m, cfg)).collect();
    collect_runs(runs.iter().map(|(_, m)| m.run_id.as_str()), results)
}

fn collect_runs<'a>(ids: impl Iterator<Item = &'a str>, results: Vec<Result<PreparedRun>>) -> Result<Vec<PreparedRun>> {
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (id, r) in ids.zip(results) {
        match r {
            Ok(run) => ok.push(run),
            Err(e) => failures.push(format!("{id}: {e}")),
        }
    }
    if failures.is_empty() {
        Ok(ok)
    } else {
        Err(Error::InvalidInput(format!("runs failed to load:\n  {}", failures.join("\n  "))))
    }
}

/// Loads one run from its manifest file; the trace path is resolved
/// against the manifest's directory.
pub fn load_run(manifest_path: &Path, cfg: &PipelineConfig) -> Result<PreparedRun> {
    let manifest = read_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let trace = load_power_trace(&dir.join(&manifest.trace_file), &cfg.rail)?;
    prepare_run(&trace, &manifest, cfg)
}

/// Loads every run listed in a corpus directory's index, in index order.
pub fn load_corpus(dir: &Path, cfg: &PipelineConfig) -> Result<Vec<PreparedRun>> {
    let path = dir.join(INDEX_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: CorpusIndex = serde_json::from_str(&text)?;
    let results: Vec<Result<PreparedRun>> =
        index.runs.par_iter().map(|e| load_run(&dir.join(&e.manifest), cfg)).collect();
    collect_runs(index.runs.iter().map(|e| e.run_id.as_str()), results)
}

/// Task models learned from the given clean runs, one per task.
pub fn learn_task_models(training: &[&PreparedRun], cfg: &PipelineConfig) -> Result<BTreeMap<String, TaskModel>> {
    let first = training
        .first()
        .ok_or(Error::InsufficientCleanRuns { needed: 1, found: 0 })?;
    let tasks: Vec<String> = first.manifest.task_order.clone();
    let models: Vec<Result<(String, TaskModel)>> = tasks
        .par_iter()
        .map(|task| {
            let profiles = training
                .iter()
                .map(|run| {
                    run.segments
                        .iter()
                        .find(|s| &s.task == task)
                        .map(|s| s.profile.clone())
                        .ok_or_else(|| {
                            Error::InvalidInput(format!("training run `{}` lacks task `{task}`", run.run_id()))
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            let model = learn_task_model(&profiles, task, &cfg.features, derive_seed(cfg.seed, "task-models"))?;
            Ok((task.clone(), model))
        })
        .collect();
    models.into_iter().collect()
}

/// Analytic permutation-entropy references, used only with the estimator
/// whose expectation is the model entropy.
pub fn pe_references(models: &BTreeMap<String, TaskModel>, cfg: &FeatureConfig) -> BTreeMap<String, PeReference> {
    if cfg.pe_estimator != EntropyEstimator::MeanInformation {
        return BTreeMap::new();
    }
    models
        .iter()
        .map(|(task, m)| {
            (
                task.clone(),
                PeReference {
                    entropy: m.permutation.entropy(),
                    info_std: m.permutation.info_std(),
                },
            )
        })
        .collect()
}

/// Feature vectors for many runs, in parallel and in input order.
pub fn extract_all(runs: &[&PreparedRun], models: &BTreeMap<String, TaskModel>, cfg: &FeatureConfig) -> Result<Vec<FeatureVector>> {
    runs.par_iter().map(|r| extract_features(&r.segments, models, cfg)).collect()
}

fn clean_training(runs: &[PreparedRun], count: usize) -> Result<Vec<&PreparedRun>> {
    let clean: Vec<&PreparedRun> = runs.iter().filter(|r| !r.label.is_infected()).take(count).collect();
    if clean.len() < count {
        return Err(Error::InsufficientCleanRuns {
            needed: count,
            found: clean.len(),
        });
    }
    Ok(clean)
}

/// Everything needed to score new runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub config: PipelineConfig,
    pub training_runs: Vec<String>,
    pub tasks: BTreeMap<String, TaskModel>,
    /// Features of the training runs, kept so the ensemble can be refit
    /// with other options without relearning the task models.
    pub training_vectors: Vec<FeatureVector>,
    pub ensemble: EnsembleModel,
}

impl ModelBundle {
    /// The same bundle with its ensemble refit under `options`.
    pub fn with_options(&self, options: &EnsembleOptions) -> Result<ModelBundle> {
        if options == &self.ensemble.options {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        out.ensemble = fit_ensemble(
            &self.training_vectors,
            &pe_references(&self.tasks, &self.config.features),
            options,
        )?;
        out.config.ensemble = options.clone();
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            format_version: u32,
        }
        let v: Version = serde_json::from_str(text)?;
        if v.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                expected: BUNDLE_FORMAT_VERSION,
                found: v.format_version,
            });
        }
        Ok(serde_json::from_str(text)?)
    }
}

/// Learns task models and fits the ensemble on the first
/// `training_clean` clean runs.
pub fn train(runs: &[PreparedRun], cfg: &PipelineConfig) -> Result<ModelBundle> {
    cfg.validate()?;
    let training = clean_training(runs, cfg.training_clean)?;
    let tasks = learn_task_models(&training, cfg)?;
    let vectors = extract_all(&training, &tasks, &cfg.features)?;
    let ensemble = fit_ensemble(&vectors, &pe_references(&tasks, &cfg.features), &cfg.ensemble)?;
    Ok(ModelBundle {
        format_version: BUNDLE_FORMAT_VERSION,
        config: cfg.clone(),
        training_runs: training.iter().map(|r| r.run_id().to_string()).collect(),
        tasks,
        training_vectors: vectors,
        ensemble,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub run_id: String,
    pub label: Label,
    pub features: FeatureVector,
    pub record: VoteRecord,
    pub classification: Classification,
}

/// Scores runs with a trained bundle.
pub fn detect(bundle: &ModelBundle, runs: &[PreparedRun]) -> Result<Vec<Detection>> {
    runs.par_iter()
        .map(|run| {
            let features = extract_features(&run.segments, &bundle.tasks, &bundle.config.features)?;
            let record = vote(&features, &bundle.ensemble);
            let classification = classify(&record, &bundle.ensemble);
            Ok(Detection {
                run_id: run.run_id().to_string(),
                label: run.label.clone(),
                features,
                record,
                classification,
            })
        })
        .collect()
}

/// Ensemble evaluation with the corpus' first clean runs as training.
pub fn evaluate_ensemble_on(runs: &[PreparedRun], cfg: &PipelineConfig) -> Result<EnsembleEvaluation> {
    cfg.validate()?;
    let training = clean_training(runs, cfg.training_clean)?;
    let models = learn_task_models(&training, cfg)?;
    let all: Vec<&PreparedRun> = runs.iter().collect();
    let vectors = extract_all(&all, &models, &cfg.features)?;
    let dataset: Vec<LabeledVector> = vectors
        .into_iter()
        .zip(runs)
        .map(|(vector, r)| LabeledVector {
            vector,
            label: r.label.clone(),
        })
        .collect();
    evaluate_ensemble(&dataset, cfg.training_clean, &pe_references(&models, &cfg.features), &cfg.ensemble)
}

/// Hold-one-family-out SVM evaluation. Each fold re-learns the task
/// models from its own clean training runs before extracting features, so
/// no test run influences the features it is scored on.
pub fn evaluate_svms(runs: &[PreparedRun], cfg: &PipelineConfig) -> Result<Vec<KernelEvaluation>> {
    cfg.validate()?;
    let labels: Vec<Label> = runs.iter().map(|r| r.label.clone()).collect();
    let folds = holdout_folds(&labels)?;
    let kernels = &cfg.svm.kernels;

    // fold -> kernel -> predictions, plus the columns each fold used.
    let per_fold: Vec<(Vec<Vec<bool>>, Vec<crate::detect::FeatureKey>)> = folds
        .iter()
        .map(|fold| {
            let clean: Vec<&PreparedRun> =
                fold.train.iter().map(|&i| &runs[i]).filter(|r| !r.label.is_infected()).collect();
            let models = learn_task_models(&clean, cfg)?;
            let involved: Vec<&PreparedRun> = fold.train.iter().chain(&fold.test).map(|&i| &runs[i]).collect();
            let vectors = extract_all(&involved, &models, &cfg.features)?;
            let refs: Vec<&FeatureVector> = vectors.iter().collect();
            let (columns, x) = design_matrix(&refs);
            if columns.is_empty() {
                return Err(Error::InvalidInput(format!("fold `{}` has no complete feature", fold.family)));
            }
            let n_train = fold.train.len();
            let y: Vec<i8> = fold.train.iter().map(|&i| if labels[i].is_infected() { 1 } else { -1 }).collect();
            let predictions = kernels
                .par_iter()
                .map(|&kernel| {
                    let model = smo_train(&x[..n_train], &y, kernel, cfg.svm.c, cfg.svm.tol)?;
                    x[n_train..].iter().map(|row| Ok(svm_predict(&model, row)? > 0)).collect()
                })
                .collect::<Result<Vec<Vec<bool>>>>()?;
            Ok((predictions, columns))
        })
        .collect::<Result<_>>()?;

    kernels
        .iter()
        .enumerate()
        .map(|(k, &kernel)| {
            let mut next = 0;
            let cv: CrossValidation = cross_validate(&labels, &folds, |_| {
                next += 1;
                Ok(per_fold[next - 1].0[k].clone())
            })?;
            Ok(KernelEvaluation {
                kernel,
                columns: per_fold[0].1.clone(),
                cv,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEvaluation {
    pub ensemble: EnsembleEvaluation,
    pub svms: Vec<KernelEvaluation>,
}

pub fn evaluate(runs: &[PreparedRun], cfg: &PipelineConfig) -> Result<CorpusEvaluation> {
    Ok(CorpusEvaluation {
        ensemble: evaluate_ensemble_on(runs, cfg)?,
        svms: evaluate_svms(runs, cfg)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_corpus_runs, CorpusConfig, RunSpec, TaskSpec};

    fn small_corpus() -> Vec<PreparedRun> {
        let cfg = CorpusConfig {
            families: 2,
            runs_per_family: 2,
            clean_runs: 6,
            run: RunSpec {
                tasks: vec![TaskSpec::registry(), TaskSpec::browser()],
                ..RunSpec::default()
            },
            ..CorpusConfig::default()
        };
        prepare_runs(&generate_corpus_runs(&cfg).unwrap(), &PipelineConfig::default()).unwrap()
    }

    fn small_cfg() -> PipelineConfig {
        PipelineConfig {
            training_clean: 4,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn segments_follow_manifest() {
        for run in small_corpus() {
            let tasks: Vec<&str> = run.segments.iter().map(|s| s.task.as_str()).collect();
            assert_eq!(tasks, ["Registry", "Browser"]);
        }
    }

    #[test]
    fn bundle_round_trips_and_is_deterministic() {
        let runs = small_corpus();
        let a = train(&runs, &small_cfg()).unwrap();
        let b = train(&runs, &small_cfg()).unwrap();
        let json = a.to_json().unwrap();
        assert_eq!(json, b.to_json().unwrap());
        assert_eq!(ModelBundle::from_json(&json).unwrap(), a);
        assert_eq!(a.tasks.len(), 2);
        assert_eq!(a.training_runs, ["clean-00", "clean-01", "clean-02", "clean-03"]);

        let opts = EnsembleOptions {
            subset: crate::detect::FeatureSubset::Recommended,
            two_sided: true,
        };
        let refit = a.with_options(&opts).unwrap();
        assert_eq!(refit.ensemble.options, opts);
        assert!(refit.ensemble.stats.keys().all(|k| k.feature != "perm_entropy"));
        assert_eq!(a.with_options(&a.ensemble.options).unwrap(), a);

        let bumped = json.replacen("\"format_version\":1", "\"format_version\":99", 1);
        assert!(matches!(ModelBundle::from_json(&bumped), Err(Error::FormatVersion { found: 99, .. })));
    }

    #[test]
    fn too_few_clean_runs() {
        let runs = small_corpus();
        let cfg = PipelineConfig {
            training_clean: 7,
            ..PipelineConfig::default()
        };
        assert!(matches!(train(&runs, &cfg), Err(Error::InsufficientCleanRuns { needed: 7, found: 6 })));
    }

    #[test]
    fn detection_covers_every_run() {
        let runs = small_corpus();
        let bundle = train(&runs, &small_cfg()).unwrap();
        let found = detect(&bundle, &runs).unwrap();
        assert_eq!(found.len(), runs.len());
        for d in &found {
            assert!(d.record.total <= d.record.max_votes);
        }
    }
}
