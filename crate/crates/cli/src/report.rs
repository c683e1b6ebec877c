use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use powerprint::detect::{
    BlindBaseline, EnsembleEvaluation, FeatureKey, FeatureSubset, KernelEvaluation, Metrics, Verdict,
};
use powerprint::pipeline::Detection;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub schema_version: u32,
    pub subset: FeatureSubset,
    pub two_sided: bool,
    pub vote_mean: f64,
    pub vote_std: f64,
    pub vote_threshold: f64,
    pub runs: Vec<Detection>,
    /// Against the manifests' labels.
    pub metrics: Metrics,
}

impl DetectionReport {
    pub fn any_infected(&self) -> bool {
        self.runs.iter().any(|d| d.classification.verdict.is_infected())
    }

    pub fn verdicts(&self) -> BTreeMap<&str, Verdict> {
        self.runs.iter().map(|d| (d.run_id.as_str(), d.classification.verdict)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub detector: String,
    pub tpr: f64,
    pub fdr: f64,
    pub counts: Option<Metrics>,
}

impl MetricsRow {
    fn from_metrics(detector: impl Into<String>, m: Metrics) -> Self {
        Self {
            detector: detector.into(),
            tpr: m.tpr(),
            fdr: m.fdr(),
            counts: Some(m),
        }
    }

    fn blind(b: BlindBaseline) -> Self {
        Self {
            detector: "blind baseline".into(),
            tpr: b.tpr,
            fdr: b.fdr,
            counts: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub subset: FeatureSubset,
    pub two_sided: bool,
    /// Ensemble, blind baseline, then one row per kernel.
    pub detectors: Vec<MetricsRow>,
    pub per_task: Vec<MetricsRow>,
    pub per_feature: Vec<MetricsRow>,
    pub ensemble: EnsembleEvaluation,
    pub svms: Vec<KernelEvaluation>,
}

impl EvaluationReport {
    pub fn new(ensemble: EnsembleEvaluation, svms: Vec<KernelEvaluation>) -> Self {
        let mut detectors = vec![
            MetricsRow::from_metrics("ensemble", ensemble.metrics),
            MetricsRow::blind(ensemble.blind),
        ];
        detectors.extend(svms.iter().map(|e| MetricsRow::from_metrics(format!("svm {}", e.kernel.name()), e.metrics())));
        Self {
            schema_version: SCHEMA_VERSION,
            subset: ensemble.model.options.subset.clone(),
            two_sided: ensemble.model.options.two_sided,
            detectors,
            per_task: ensemble.per_task.iter().map(|(t, m)| MetricsRow::from_metrics(t.clone(), *m)).collect(),
            per_feature: ensemble
                .per_feature
                .iter()
                .map(|(k, m)| MetricsRow::from_metrics(k.to_string(), *m))
                .collect(),
            ensemble,
            svms,
        }
    }
}

/// Writes through a sibling temporary file and a rename, so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, contents).with_context(|| format!("writing {}", Path::new(&tmp).display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Runs × (task/feature) z-scores, then the vote total and verdict. Cells
/// are empty where a feature did not vote.
pub fn z_table_csv(report: &DetectionReport) -> Result<Vec<u8>> {
    let columns: BTreeSet<&FeatureKey> = report.runs.iter().flat_map(|d| d.record.features.keys()).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["run_id".to_string()];
    header.extend(columns.iter().map(|k| k.to_string()));
    header.extend(["total".into(), "z_votes".into(), "verdict".into()]);
    w.write_record(&header)?;
    for d in &report.runs {
        let mut row = vec![d.run_id.clone()];
        row.extend(
            columns
                .iter()
                .map(|k| d.record.features.get(*k).map_or(String::new(), |f| format!("{:.4}", f.z))),
        );
        row.push(d.record.total.to_string());
        row.push(format!("{:.4}", d.classification.z_votes));
        row.push(verdict_name(d.classification.verdict).into());
        w.write_record(&row)?;
    }
    Ok(w.into_inner()?)
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Clean => "clean",
        Verdict::Infected => "infected",
    }
}

pub fn detection_table(report: &DetectionReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "subset {} | vote threshold {:.2} (mean {:.2} + std {:.2}){}",
        report.subset.name(),
        report.vote_threshold,
        report.vote_mean,
        report.vote_std,
        if report.two_sided { " | two-sided" } else { "" }
    );
    let _ = writeln!(out, "{:<28} {:>7} {:>8} {:>9}  label", "run", "votes", "z_votes", "verdict");
    for d in &report.runs {
        let label = d.label.family().unwrap_or("clean");
        let _ = writeln!(
            out,
            "{:<28} {:>3}/{:<3} {:>8.3} {:>9}  {label}",
            d.run_id,
            d.record.total,
            d.record.max_votes,
            d.classification.z_votes,
            verdict_name(d.classification.verdict),
        );
    }
    out
}

fn rows_table(out: &mut String, title: &str, rows: &[MetricsRow]) {
    let width = rows.iter().map(|r| r.detector.len()).max().unwrap_or(0).max(title.len());
    let _ = writeln!(out, "{title:<width$}  {:>6}  {:>6}", "TPR", "FDR");
    for r in rows {
        let _ = writeln!(out, "{:<width$}  {:>6.3}  {:>6.3}", r.detector, r.tpr, r.fdr);
    }
}

pub fn evaluation_table(report: &EvaluationReport) -> String {
    let mut out = String::new();
    rows_table(&mut out, "detector", &report.detectors);
    out.push('\n');
    rows_table(&mut out, "task vote sum", &report.per_task);
    out.push('\n');
    rows_table(&mut out, "single feature", &report.per_feature);
    out
}
