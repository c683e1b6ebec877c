//! Per-task features: four moments, L² distance to the task baseline,
//! permutation entropy, and data-smashing distances over binary and shape
//! encodings.

mod baseline;
mod moments;
mod permutation;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::smash::{dsd_distance, SmashConfig, SmashOutcome};
use crate::symbolize::{binarize, concat_repeat, learn_shapes, pooled_threshold, shape_encode, ShapeBook, SymbolStream};
use crate::trace::{TaskSegment, UniformProfile, IDLE};

pub use baseline::{l2_distance, learn_baseline, BaselineProfile, GAP_K_MAX, GAP_REFERENCES};
pub use moments::{mean_variance, moments, Moments};
pub use permutation::{
    learn_permutation_model, ordinal_patterns, perm_entropy, permutation_rank, window_permutation,
    EntropyEstimator, PermutationModel, DEFAULT_ORDER,
};

pub const MEAN: &str = "mean";
pub const VARIANCE: &str = "variance";
pub const SKEWNESS: &str = "skewness";
pub const KURTOSIS: &str = "kurtosis";
pub const L2: &str = "l2";
pub const PERM_ENTROPY: &str = "perm_entropy";
pub const DSD_DATA: &str = "dsd_data";
pub const DSD_SHAPE: &str = "dsd_shape";

/// Every feature name, in report order.
pub const FEATURE_NAMES: [&str; 8] = [MEAN, VARIANCE, SKEWNESS, KURTOSIS, L2, PERM_ENTROPY, DSD_DATA, DSD_SHAPE];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    /// Ordinal pattern length.
    pub perm_order: usize,
    pub pe_estimator: EntropyEstimator,
    pub smash: SmashConfig,
    /// Number of learned shapes.
    pub shapes: usize,
    /// Self-concatenations applied to every symbol stream before smashing.
    pub repeats: usize,
    /// Tasks that get no shape encoding.
    pub shapeless_tasks: Vec<String>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            perm_order: DEFAULT_ORDER,
            pe_estimator: EntropyEstimator::MeanInformation,
            smash: SmashConfig::default(),
            shapes: 4,
            repeats: 100,
            shapeless_tasks: vec![IDLE.to_string()],
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        self.smash.validate()?;
        if !self.perm_order.is_multiple_of(2) || self.perm_order < 2 {
            return Err(Error::InvalidInput(format!(
                "perm_order must be even and at least 2, got {}",
                self.perm_order
            )));
        }
        if self.shapes < 2 {
            return Err(Error::InvalidInput("shapes must be at least 2".into()));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidInput("repeats must be at least 1".into()));
        }
        Ok(())
    }

    pub fn uses_shapes(&self, task: &str) -> bool {
        !self.shapeless_tasks.iter().any(|t| t == task)
    }
}

/// Everything learned from the clean training profiles of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskModel {
    pub task: String,
    pub baseline: BaselineProfile,
    pub permutation: PermutationModel,
    pub shapes: Option<ShapeBook>,
    /// All training profiles of the task laid end to end.
    pub reference_profile: UniformProfile,
    /// Shape encoding of each training profile, concatenated.
    pub reference_shapes: Option<SymbolStream>,
}

/// Learns the baseline, permutation model and (unless the task is
/// shapeless) shape book from clean training profiles of one task.
pub fn learn_task_model(training: &[UniformProfile], task: &str, cfg: &FeatureConfig, seed: u64) -> Result<TaskModel> {
    let first = training
        .first()
        .ok_or_else(|| Error::InvalidInput(format!("no training profiles for task `{task}`")))?;
    let baseline = learn_baseline(training, task, derive_seed(seed, &format!("baseline/{task}")))?;
    let permutation = learn_permutation_model(training, cfg.perm_order)?;

    let reference_values: Vec<f64> = training.iter().flat_map(|p| p.values().iter().copied()).collect();
    let reference_profile = UniformProfile::new(first.dt(), reference_values)?;

    let (shapes, reference_shapes) = if cfg.uses_shapes(task) {
        let book = learn_shapes(training, cfg.shapes, derive_seed(seed, &format!("shapes/{task}")))?;
        let mut stream = shape_encode(first, &book)?;
        for p in &training[1..] {
            stream = stream.concat(&shape_encode(p, &book)?)?;
        }
        (Some(book), Some(stream))
    } else {
        (None, None)
    };
    Ok(TaskModel {
        task: task.to_string(),
        baseline,
        permutation,
        shapes,
        reference_profile,
        reference_shapes,
    })
}

/// A feature value, or why there is none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureValue {
    Value(f64),
    /// Symbol streams too short for data smashing.
    Insufficient,
    Error(String),
}

impl FeatureValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            FeatureValue::Value(v) => Some(*v),
            _ => None,
        }
    }

    fn from_result(r: Result<f64>) -> Self {
        match r {
            Ok(v) => FeatureValue::Value(v),
            Err(e) => FeatureValue::Error(e.to_string()),
        }
    }
}

/// Feature values of one run, keyed by task then feature name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub run_id: String,
    pub tasks: BTreeMap<String, BTreeMap<String, FeatureValue>>,
}

impl FeatureVector {
    pub fn get(&self, task: &str, feature: &str) -> Option<&FeatureValue> {
        self.tasks.get(task)?.get(feature)
    }

    pub fn value(&self, task: &str, feature: &str) -> Option<f64> {
        self.get(task, feature).and_then(FeatureValue::value)
    }

    /// Multiplies one feature by `factor` wherever it has a value.
    pub fn scale(&mut self, task: &str, feature: &str, factor: f64) {
        if let Some(FeatureValue::Value(v)) = self.tasks.get_mut(task).and_then(|t| t.get_mut(feature)) {
            *v *= factor;
        }
    }
}

fn smash_feature(a: &SymbolStream, b: &SymbolStream, cfg: &FeatureConfig) -> FeatureValue {
    let run = || -> Result<SmashOutcome> {
        let a = concat_repeat(a, cfg.repeats)?;
        let b = concat_repeat(b, cfg.repeats)?;
        dsd_distance(&a, &b, &cfg.smash)
    };
    match run() {
        Ok(SmashOutcome::Distance(d)) => FeatureValue::Value(d),
        Ok(SmashOutcome::Insufficient) => FeatureValue::Insufficient,
        Err(e) => FeatureValue::Error(e.to_string()),
    }
}

/// Features of one task segment against its task model.
pub fn task_features(profile: &UniformProfile, model: &TaskModel, cfg: &FeatureConfig) -> BTreeMap<String, FeatureValue> {
    let mut out = BTreeMap::new();
    match moments(profile.values()) {
        Ok(m) => {
            out.insert(MEAN.into(), FeatureValue::Value(m.mean));
            out.insert(VARIANCE.into(), FeatureValue::Value(m.variance));
            out.insert(SKEWNESS.into(), FeatureValue::Value(m.skewness));
            out.insert(KURTOSIS.into(), FeatureValue::Value(m.kurtosis));
        }
        Err(e) => {
            // Mean and variance stay defined for constant input.
            match mean_variance(profile.values()) {
                Ok((mean, var)) => {
                    out.insert(MEAN.into(), FeatureValue::Value(mean));
                    out.insert(VARIANCE.into(), FeatureValue::Value(var));
                }
                Err(e) => {
                    out.insert(MEAN.into(), FeatureValue::Error(e.to_string()));
                    out.insert(VARIANCE.into(), FeatureValue::Error(e.to_string()));
                }
            }
            out.insert(SKEWNESS.into(), FeatureValue::Error(e.to_string()));
            out.insert(KURTOSIS.into(), FeatureValue::Error(e.to_string()));
        }
    }
    out.insert(L2.into(), FeatureValue::from_result(l2_distance(profile, &model.baseline)));
    out.insert(
        PERM_ENTROPY.into(),
        FeatureValue::from_result(perm_entropy(profile, &model.permutation, cfg.pe_estimator)),
    );

    let threshold = pooled_threshold(profile, &model.reference_profile);
    let data = smash_feature(
        &binarize(profile, threshold),
        &binarize(&model.reference_profile, threshold),
        cfg,
    );
    out.insert(DSD_DATA.into(), data);

    if let (Some(book), Some(reference)) = (&model.shapes, &model.reference_shapes) {
        let shape = match shape_encode(profile, book) {
            Ok(s) => smash_feature(&s, reference, cfg),
            Err(e) => FeatureValue::Error(e.to_string()),
        };
        out.insert(DSD_SHAPE.into(), shape);
    }
    out
}

/// Features for every task segment of one run.
pub fn extract_features(
    run: &[TaskSegment],
    models: &BTreeMap<String, TaskModel>,
    cfg: &FeatureConfig,
) -> Result<FeatureVector> {
    let run_id = run
        .first()
        .map(|s| s.run_id.clone())
        .ok_or_else(|| Error::InvalidInput("run has no task segments".into()))?;
    let mut seen = BTreeSet::new();
    let mut tasks = BTreeMap::new();
    for seg in run {
        if seg.run_id != run_id {
            return Err(Error::InvalidInput(format!(
                "segments from runs `{run_id}` and `{}` mixed",
                seg.run_id
            )));
        }
        if !seen.insert(seg.task.as_str()) {
            return Err(Error::InvalidInput(format!("task `{}` appears twice in run `{run_id}`", seg.task)));
        }
        let model = models.get(&seg.task).ok_or_else(|| Error::MissingModel(seg.task.clone()))?;
        tasks.insert(seg.task.clone(), task_features(&seg.profile, model, cfg));
    }
    Ok(FeatureVector { run_id, tasks })
}
