//! One-class z-score voting ensemble.
//!
//! Every (task, feature) pair is a single-feature detector that votes when
//! a run's value is at least one training standard deviation from the
//! training mean. The vote total is then scored the same way against the
//! training runs' own totals.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{BlindBaseline, Metrics};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, KURTOSIS, L2, MEAN, PERM_ENTROPY, SKEWNESS, VARIANCE};
use crate::trace::Label;

/// A (task, feature) pair, written `task/feature`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct FeatureKey {
    pub task: String,
    pub feature: String,
}

impl FeatureKey {
    pub fn new(task: impl Into<String>, feature: impl Into<String>) -> Self {
        Self {
            task: task.into(),
            feature: feature.into(),
        }
    }
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.task, self.feature)
    }
}

impl From<FeatureKey> for String {
    fn from(k: FeatureKey) -> String {
        k.to_string()
    }
}

impl TryFrom<String> for FeatureKey {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for FeatureKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (task, feature) = s
            .rsplit_once('/')
            .ok_or_else(|| Error::InvalidInput(format!("feature key `{s}` is not task/feature")))?;
        Ok(Self::new(task, feature))
    }
}

/// Which features take part in voting.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubset {
    #[default]
    All,
    /// The four moments and the L² distance.
    Recommended,
    Features(Vec<String>),
}

impl FeatureSubset {
    pub fn contains(&self, feature: &str) -> bool {
        match self {
            FeatureSubset::All => true,
            FeatureSubset::Recommended => [MEAN, VARIANCE, SKEWNESS, KURTOSIS, L2].contains(&feature),
            FeatureSubset::Features(list) => list.iter().any(|f| f == feature),
        }
    }

    pub fn name(&self) -> String {
        match self {
            FeatureSubset::All => "all".into(),
            FeatureSubset::Recommended => "recommended".into(),
            FeatureSubset::Features(list) => list.join(","),
        }
    }
}

impl FromStr for FeatureSubset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(FeatureSubset::All),
            "recommended" => Ok(FeatureSubset::Recommended),
            "" => Err(Error::InvalidInput("empty feature subset".into())),
            list => Ok(FeatureSubset::Features(list.split(',').map(|f| f.trim().to_string()).collect())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatSource {
    Empirical,
    /// Entropy and information spread of the learned permutation model.
    AnalyticPe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStat {
    pub mean: f64,
    pub std: f64,
    pub source: StatSource,
    /// Zero-spread features never vote.
    pub usable: bool,
}

impl FeatureStat {
    pub fn z(&self, value: f64) -> f64 {
        (value - self.mean).abs() / self.std
    }
}

/// Analytic location and scale for a task's permutation entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeReference {
    pub entropy: f64,
    pub info_std: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleOptions {
    pub subset: FeatureSubset,
    /// Flag unusually quiet runs too, not only unusually loud ones.
    pub two_sided: bool,
}

/// Mean and population standard deviation of a vote count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteStats {
    pub mean: f64,
    pub std: f64,
}

impl VoteStats {
    fn of(counts: &[usize]) -> Self {
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<usize>() as f64 / n;
        let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }

    pub fn threshold(&self) -> f64 {
        self.mean + self.std
    }

    fn judge(&self, total: usize, two_sided: bool) -> (bool, f64) {
        let total = total as f64;
        if self.std == 0.0 {
            let z = if total == self.mean { 0.0 } else { f64::INFINITY };
            let flagged = if two_sided { total != self.mean } else { total > self.mean };
            return (flagged, z);
        }
        let z = (total - self.mean).abs() / self.std;
        let flagged = z >= 1.0 && (two_sided || total > self.mean);
        (flagged, z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub stats: BTreeMap<FeatureKey, FeatureStat>,
    pub vote_mean: f64,
    pub vote_std: f64,
    /// Vote-sum statistics of each task on its own.
    pub task_votes: BTreeMap<String, VoteStats>,
    pub training_votes: Vec<usize>,
    pub options: EnsembleOptions,
}

impl EnsembleModel {
    pub fn vote_threshold(&self) -> f64 {
        self.vote_mean + self.vote_std
    }

    fn total_stats(&self) -> VoteStats {
        VoteStats {
            mean: self.vote_mean,
            std: self.vote_std,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVote {
    pub value: f64,
    pub z: f64,
    pub vote: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub run_id: String,
    pub features: BTreeMap<FeatureKey, FeatureVote>,
    pub task_votes: BTreeMap<String, usize>,
    pub total: usize,
    /// Usable features present in this run, i.e. the most votes possible.
    pub max_votes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Clean,
    Infected,
}

impl Verdict {
    pub fn is_infected(self) -> bool {
        self == Verdict::Infected
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub z_votes: f64,
}

/// Fits per-feature statistics on clean training runs, then scores those
/// runs to fit the vote-total statistics. Permutation entropy uses the
/// analytic values in `pe` when given for its task.
pub fn fit_ensemble(
    training: &[FeatureVector],
    pe: &BTreeMap<String, PeReference>,
    options: &EnsembleOptions,
) -> Result<EnsembleModel> {
    if training.len() < 2 {
        return Err(Error::InsufficientCleanRuns {
            needed: 2,
            found: training.len(),
        });
    }
    let mut values: BTreeMap<FeatureKey, Vec<f64>> = BTreeMap::new();
    for v in training {
        for (task, feats) in &v.tasks {
            for (feature, value) in feats {
                if !options.subset.contains(feature) {
                    continue;
                }
                let entry = values.entry(FeatureKey::new(task, feature)).or_default();
                if let Some(x) = value.value() {
                    entry.push(x);
                }
            }
        }
    }

    let mut stats = BTreeMap::new();
    for (key, vals) in values {
        let analytic = (key.feature == PERM_ENTROPY).then(|| pe.get(&key.task)).flatten();
        let stat = if let Some(r) = analytic {
            FeatureStat {
                mean: r.entropy,
                std: r.info_std,
                source: StatSource::AnalyticPe,
                usable: r.info_std > 0.0,
            }
        } else if vals.len() < 2 {
            log::warn!("feature {key} has {} training values; it will not vote", vals.len());
            FeatureStat {
                mean: vals.first().copied().unwrap_or(0.0),
                std: 0.0,
                source: StatSource::Empirical,
                usable: false,
            }
        } else {
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let std = (vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            if std == 0.0 {
                log::warn!("feature {key} is constant over training runs; it will not vote");
            }
            FeatureStat {
                mean,
                std,
                source: StatSource::Empirical,
                usable: std > 0.0,
            }
        };
        stats.insert(key, stat);
    }

    let mut model = EnsembleModel {
        stats,
        vote_mean: 0.0,
        vote_std: 0.0,
        task_votes: BTreeMap::new(),
        training_votes: Vec::new(),
        options: options.clone(),
    };
    let records: Vec<VoteRecord> = training.iter().map(|v| vote(v, &model)).collect();
    let totals: Vec<usize> = records.iter().map(|r| r.total).collect();
    let overall = VoteStats::of(&totals);
    model.vote_mean = overall.mean;
    model.vote_std = overall.std;
    model.training_votes = totals;

    let tasks: std::collections::BTreeSet<&String> = records.iter().flat_map(|r| r.task_votes.keys()).collect();
    for task in tasks {
        let counts: Vec<usize> = records
            .iter()
            .map(|r| r.task_votes.get(task).copied().unwrap_or(0))
            .collect();
        model.task_votes.insert(task.clone(), VoteStats::of(&counts));
    }
    Ok(model)
}

/// z-scores and votes for every usable feature present in the run.
pub fn vote(v: &FeatureVector, model: &EnsembleModel) -> VoteRecord {
    let mut features = BTreeMap::new();
    let mut task_votes: BTreeMap<String, usize> = BTreeMap::new();
    for (key, stat) in &model.stats {
        if !stat.usable {
            continue;
        }
        let Some(value) = v.value(&key.task, &key.feature) else {
            continue;
        };
        let z = stat.z(value);
        let voted = z >= 1.0;
        features.insert(key.clone(), FeatureVote { value, z, vote: voted });
        *task_votes.entry(key.task.clone()).or_default() += usize::from(voted);
    }
    let total = task_votes.values().sum();
    VoteRecord {
        run_id: v.run_id.clone(),
        max_votes: features.len(),
        features,
        task_votes,
        total,
    }
}

/// Scores the vote total against the training totals. With the default
/// one-sided rule only totals above the training mean can be infected.
pub fn classify(record: &VoteRecord, model: &EnsembleModel) -> Classification {
    let stats = model.total_stats();
    if stats.std == 0.0 {
        log::warn!("training vote totals have zero spread; flagging any total above {}", stats.mean);
    }
    let (flagged, z_votes) = stats.judge(record.total, model.options.two_sided);
    Classification {
        verdict: if flagged { Verdict::Infected } else { Verdict::Clean },
        z_votes,
    }
}

/// Verdict of one task's vote sum taken on its own.
pub fn classify_task(record: &VoteRecord, model: &EnsembleModel, task: &str) -> Option<Verdict> {
    let stats = model.task_votes.get(task)?;
    let count = record.task_votes.get(task).copied().unwrap_or(0);
    let (flagged, _) = stats.judge(count, model.options.two_sided);
    Some(if flagged { Verdict::Infected } else { Verdict::Clean })
}

/// A feature vector with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledVector {
    pub vector: FeatureVector,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: String,
    pub label: Label,
    pub record: VoteRecord,
    pub classification: Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEvaluation {
    pub model: EnsembleModel,
    pub training_runs: Vec<String>,
    pub runs: Vec<RunResult>,
    pub metrics: Metrics,
    /// Each single-feature detector on its own.
    pub per_feature: BTreeMap<FeatureKey, Metrics>,
    /// Each task's vote sum on its own.
    pub per_task: BTreeMap<String, Metrics>,
    pub blind: BlindBaseline,
}

/// Fits on the first `training_clean` clean runs (dataset order) and tests
/// on everything else.
pub fn evaluate_ensemble(
    dataset: &[LabeledVector],
    training_clean: usize,
    pe: &BTreeMap<String, PeReference>,
    options: &EnsembleOptions,
) -> Result<EnsembleEvaluation> {
    let clean: Vec<usize> = (0..dataset.len()).filter(|&i| !dataset[i].label.is_infected()).collect();
    if clean.len() < training_clean || training_clean < 2 {
        return Err(Error::InsufficientCleanRuns {
            needed: training_clean.max(2),
            found: clean.len(),
        });
    }
    let train_idx = &clean[..training_clean];
    let training: Vec<FeatureVector> = train_idx.iter().map(|&i| dataset[i].vector.clone()).collect();
    let model = fit_ensemble(&training, pe, options)?;

    let test: Vec<&LabeledVector> = (0..dataset.len())
        .filter(|i| !train_idx.contains(i))
        .map(|i| &dataset[i])
        .collect();
    let mut runs = Vec::with_capacity(test.len());
    let mut metrics = Metrics::default();
    let mut per_feature: BTreeMap<FeatureKey, Metrics> =
        model.stats.iter().filter(|(_, s)| s.usable).map(|(k, _)| (k.clone(), Metrics::default())).collect();
    let mut per_task: BTreeMap<String, Metrics> =
        model.task_votes.keys().map(|t| (t.clone(), Metrics::default())).collect();

    for lv in &test {
        let record = vote(&lv.vector, &model);
        let classification = classify(&record, &model);
        let actual = lv.label.is_infected();
        metrics.record(actual, classification.verdict.is_infected());
        for (key, m) in per_feature.iter_mut() {
            m.record(actual, record.features.get(key).is_some_and(|f| f.vote));
        }
        for (task, m) in per_task.iter_mut() {
            let verdict = classify_task(&record, &model, task).unwrap_or(Verdict::Clean);
            m.record(actual, verdict.is_infected());
        }
        runs.push(RunResult {
            run_id: lv.vector.run_id.clone(),
            label: lv.label.clone(),
            record,
            classification,
        });
    }
    let infected = test.iter().filter(|lv| lv.label.is_infected()).count();
    Ok(EnsembleEvaluation {
        training_runs: training.iter().map(|v| v.run_id.clone()).collect(),
        blind: BlindBaseline::new(infected, test.len() - infected),
        model,
        runs,
        metrics,
        per_feature,
        per_task,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureValue;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fv(run: &str, feats: &[(&str, &str, f64)]) -> FeatureVector {
        let mut tasks: BTreeMap<String, BTreeMap<String, FeatureValue>> = BTreeMap::new();
        for &(t, f, x) in feats {
            tasks.entry(t.into()).or_default().insert(f.into(), FeatureValue::Value(x));
        }
        FeatureVector {
            run_id: run.into(),
            tasks,
        }
    }

    fn no_pe() -> BTreeMap<String, PeReference> {
        BTreeMap::new()
    }

    #[test]
    fn population_statistics() {
        let training: Vec<_> = [1.0, 2.0, 3.0]
            .iter()
            .enumerate()
            .map(|(i, &x)| fv(&format!("r{i}"), &[("Idle", MEAN, x)]))
            .collect();
        let model = fit_ensemble(&training, &no_pe(), &EnsembleOptions::default()).unwrap();
        let s = model.stats[&FeatureKey::new("Idle", MEAN)];
        assert_relative_eq!(s.mean, 2.0);
        assert_relative_eq!(s.std, (2.0f64 / 3.0).sqrt());
        assert_eq!(s.source, StatSource::Empirical);

        let r = vote(&fv("t", &[("Idle", MEAN, 3.0)]), &model);
        let fvote = r.features[&FeatureKey::new("Idle", MEAN)];
        assert_relative_eq!(fvote.z, 1.224744871391589, epsilon = 1e-12);
        assert!(fvote.vote);
        let r = vote(&fv("t", &[("Idle", MEAN, 2.0)]), &model);
        assert_eq!(r.total, 0);
    }

    #[test]
    fn boundary_is_inclusive() {
        let training = vec![fv("a", &[("Idle", MEAN, 1.5)]), fv("b", &[("Idle", MEAN, 2.5)])];
        let model = fit_ensemble(&training, &no_pe(), &EnsembleOptions::default()).unwrap();
        // mean 2, std 0.5: 2.5 sits exactly one std away.
        let r = vote(&fv("t", &[("Idle", MEAN, 2.5)]), &model);
        assert_eq!(r.features[&FeatureKey::new("Idle", MEAN)].z, 1.0);
        assert_eq!(r.total, 1);
    }

    fn vote_model(mean: f64, std: f64, two_sided: bool) -> EnsembleModel {
        EnsembleModel {
            stats: BTreeMap::new(),
            vote_mean: mean,
            vote_std: std,
            task_votes: BTreeMap::new(),
            training_votes: vec![],
            options: EnsembleOptions {
                two_sided,
                ..Default::default()
            },
        }
    }

    fn record(total: usize) -> VoteRecord {
        VoteRecord {
            run_id: "r".into(),
            features: BTreeMap::new(),
            task_votes: BTreeMap::new(),
            total,
            max_votes: total,
        }
    }

    #[test]
    fn vote_total_statistics() {
        let s = VoteStats::of(&[0, 1, 1, 0, 2, 1, 0, 1, 1, 2]);
        assert_relative_eq!(s.mean, 0.9, epsilon = 1e-12);
        assert_relative_eq!(s.std, 0.7, epsilon = 1e-12);
        assert_relative_eq!(s.threshold(), 1.6, epsilon = 1e-12);
    }

    #[test]
    fn classification_rule() {
        let m = vote_model(0.9, 0.7, false);
        let c = classify(&record(2), &m);
        assert_eq!(c.verdict, Verdict::Infected);
        assert_relative_eq!(c.z_votes, 1.1 / 0.7, epsilon = 1e-12);
        let c = classify(&record(1), &m);
        assert_eq!(c.verdict, Verdict::Clean);
        assert_relative_eq!(c.z_votes, 0.1 / 0.7, epsilon = 1e-12);
        let c = classify(&record(0), &m);
        assert_relative_eq!(c.z_votes, 0.9 / 0.7, epsilon = 1e-12);
        assert_eq!(c.verdict, Verdict::Clean);
        assert_eq!(classify(&record(0), &vote_model(0.9, 0.7, true)).verdict, Verdict::Infected);
    }

    #[test]
    fn zero_spread_vote_totals() {
        let m = vote_model(1.0, 0.0, false);
        assert_eq!(classify(&record(1), &m).verdict, Verdict::Clean);
        assert_eq!(classify(&record(2), &m).verdict, Verdict::Infected);
        assert_eq!(classify(&record(0), &m).verdict, Verdict::Clean);
    }

    #[test]
    fn constant_features_never_vote() {
        let training = vec![
            fv("a", &[("Idle", MEAN, 1.0), ("Idle", L2, 1.0)]),
            fv("b", &[("Idle", MEAN, 2.0), ("Idle", L2, 1.0)]),
        ];
        let model = fit_ensemble(&training, &no_pe(), &EnsembleOptions::default()).unwrap();
        assert!(!model.stats[&FeatureKey::new("Idle", L2)].usable);
        let r = vote(&fv("t", &[("Idle", MEAN, 1.5), ("Idle", L2, 100.0)]), &model);
        assert_eq!(r.total, 0);
        assert_eq!(r.max_votes, 1);
    }

    #[test]
    fn permutation_entropy_uses_analytic_stats() {
        let training = vec![
            fv("a", &[("Idle", PERM_ENTROPY, 5.0)]),
            fv("b", &[("Idle", PERM_ENTROPY, 5.1)]),
        ];
        let mut pe = BTreeMap::new();
        pe.insert(
            "Idle".to_string(),
            PeReference {
                entropy: 5.2,
                info_std: 0.9,
            },
        );
        let model = fit_ensemble(&training, &pe, &EnsembleOptions::default()).unwrap();
        let s = model.stats[&FeatureKey::new("Idle", PERM_ENTROPY)];
        assert_eq!((s.mean, s.std, s.source), (5.2, 0.9, StatSource::AnalyticPe));
    }

    #[test]
    fn subset_limits_votes() {
        let training = vec![
            fv("a", &[("Idle", MEAN, 1.0), ("Idle", PERM_ENTROPY, 1.0), ("Browser", MEAN, 3.0)]),
            fv("b", &[("Idle", MEAN, 2.0), ("Idle", PERM_ENTROPY, 2.0), ("Browser", MEAN, 4.0)]),
        ];
        let opts = EnsembleOptions {
            subset: FeatureSubset::Features(vec![MEAN.into()]),
            two_sided: false,
        };
        let model = fit_ensemble(&training, &no_pe(), &opts).unwrap();
        let r = vote(&fv("t", &[("Idle", MEAN, 9.0), ("Idle", PERM_ENTROPY, 9.0), ("Browser", MEAN, 9.0)]), &model);
        assert_eq!(r.max_votes, 2);
        assert_eq!(r.total, 2);
        assert!(FeatureSubset::Recommended.contains(L2));
        assert!(!FeatureSubset::Recommended.contains(PERM_ENTROPY));
    }

    #[test]
    fn absent_features_do_not_vote() {
        let training = vec![
            fv("a", &[("Idle", MEAN, 1.0), ("Idle", "dsd_data", 0.1)]),
            fv("b", &[("Idle", MEAN, 2.0), ("Idle", "dsd_data", 0.2)]),
        ];
        let model = fit_ensemble(&training, &no_pe(), &EnsembleOptions::default()).unwrap();
        let mut t = fv("t", &[("Idle", MEAN, 1.5)]);
        t.tasks.get_mut("Idle").unwrap().insert("dsd_data".into(), FeatureValue::Insufficient);
        let r = vote(&t, &model);
        assert_eq!(r.max_votes, 1);
    }

    #[test]
    fn feature_key_strings() {
        let k: FeatureKey = "Browser/l2".parse().unwrap();
        assert_eq!(k, FeatureKey::new("Browser", "l2"));
        assert_eq!(serde_json::to_string(&k).unwrap(), "\"Browser/l2\"");
        assert!("nokey".parse::<FeatureKey>().is_err());
        assert_eq!("recommended".parse::<FeatureSubset>().unwrap(), FeatureSubset::Recommended);
        assert_eq!(
            "mean,l2".parse::<FeatureSubset>().unwrap(),
            FeatureSubset::Features(vec!["mean".into(), "l2".into()])
        );
    }

    fn corpus(values: &[[f64; 3]]) -> Vec<FeatureVector> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| fv(&format!("r{i}"), &[("Idle", MEAN, v[0]), ("Idle", L2, v[1]), ("Browser", MEAN, v[2])]))
            .collect()
    }

    proptest! {
        #[test]
        fn scaling_a_feature_changes_no_vote(
            train in prop::collection::vec(prop::array::uniform3(0.0f64..10.0), 3..12),
            test in prop::collection::vec(prop::array::uniform3(-5.0f64..15.0), 1..8),
            c in 0.01f64..100.0,
        ) {
            let opts = EnsembleOptions::default();
            let base = fit_ensemble(&corpus(&train), &BTreeMap::new(), &opts).unwrap();
            let mut scaled_train = corpus(&train);
            scaled_train.iter_mut().for_each(|v| v.scale("Idle", L2, c));
            let scaled = fit_ensemble(&scaled_train, &BTreeMap::new(), &opts).unwrap();
            prop_assert_eq!(&base.training_votes, &scaled.training_votes);
            for mut v in corpus(&test) {
                let a = vote(&v, &base);
                v.scale("Idle", L2, c);
                let b = vote(&v, &scaled);
                let za = a.features.get(&FeatureKey::new("Idle", L2)).map(|f| f.z);
                let zb = b.features.get(&FeatureKey::new("Idle", L2)).map(|f| f.z);
                if let (Some(za), Some(zb)) = (za, zb) {
                    // Keep clear of the boundary, where the rescaling's
                    // round-off could flip a vote.
                    prop_assume!((za - 1.0).abs() > 1e-9);
                    prop_assert!((za - zb).abs() <= 1e-9 * za.max(1.0));
                }
                prop_assert_eq!(a.total, b.total);
                prop_assert_eq!(classify(&a, &base).verdict, classify(&b, &scaled).verdict);
            }
        }
    }

    #[test]
    fn quiet_feature_does_not_change_totals() {
        let train = corpus(&[[1.0, 1.0, 3.0], [2.0, 1.5, 3.5], [3.0, 2.0, 2.5], [2.0, 1.2, 3.1]]);
        let narrow = EnsembleOptions {
            subset: FeatureSubset::Features(vec![MEAN.into()]),
            two_sided: false,
        };
        let wide = EnsembleOptions {
            subset: FeatureSubset::Features(vec![MEAN.into(), L2.into()]),
            two_sided: false,
        };
        let m_narrow = fit_ensemble(&train, &BTreeMap::new(), &narrow).unwrap();
        let m_wide = fit_ensemble(&train, &BTreeMap::new(), &wide).unwrap();
        // l2 at its training mean: z = 0 for the test run.
        let l2_mean = m_wide.stats[&FeatureKey::new("Idle", L2)].mean;
        let t = fv("t", &[("Idle", MEAN, 7.0), ("Idle", L2, l2_mean), ("Browser", MEAN, 3.0)]);
        assert_eq!(vote(&t, &m_narrow).total, vote(&t, &m_wide).total);
    }
}
