//! Trace CSV and run-manifest files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{compute_power, Label, Marker, PowerTrace, RawRecording};
use crate::error::{Error, Result};

/// Contents of a trace CSV: either per-channel readings or precomputed power.
#[derive(Debug, Clone)]
pub enum TraceFile {
    Channels(RawRecording),
    Power(PowerTrace),
}

/// Reads `time_s,<channel>...` or `time_s,power_w`.
pub fn read_trace_csv(path: &Path, rail: &str) -> Result<TraceFile> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("time_s") {
        return Err(Error::InvalidInput(format!(
            "{}: first column must be `time_s`",
            path.display()
        )));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut times = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != names.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                row + 2,
                record.len(),
                names.len() + 1
            )));
        }
        let parse = |s: &str| {
            s.trim().parse::<f64>().map_err(|_| {
                Error::InvalidInput(format!("{}: row {}: bad number `{s}`", path.display(), row + 2))
            })
        };
        times.push(parse(&record[0])?);
        for (col, field) in columns.iter_mut().zip(record.iter().skip(1)) {
            col.push(parse(field)?);
        }
    }

    if names.len() == 1 && names[0] == "power_w" {
        let power = columns.pop().unwrap_or_default();
        return Ok(TraceFile::Power(PowerTrace::new(rail, times, power)?));
    }
    let channels: BTreeMap<String, Vec<f64>> = names.into_iter().zip(columns).collect();
    Ok(TraceFile::Channels(RawRecording::new(times, channels)?))
}

/// Reads a trace CSV and returns the power on `rail`, multiplying channels
/// when the file holds raw voltage/current readings.
pub fn load_power_trace(path: &Path, rail: &str) -> Result<PowerTrace> {
    match read_trace_csv(path, rail)? {
        TraceFile::Power(p) => Ok(p),
        TraceFile::Channels(rec) => compute_power(&rec, rail),
    }
}

/// Writes a two-column `time_s,power_w` file.
pub fn write_power_csv(path: &Path, trace: &PowerTrace) -> Result<()> {
    let mut out = String::with_capacity(trace.len() * 24);
    out.push_str("time_s,power_w\n");
    for (t, p) in trace.times().iter().zip(trace.power()) {
        out.push_str(&format!("{t:.6},{p:.6}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Clean,
    Infected,
}

/// Generator-side truth recorded alongside a synthetic run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub markers: Vec<Marker>,
}

/// Per-run description: identity, label and where its trace lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub label: LabelKind,
    pub family: Option<String>,
    pub task_order: Vec<String>,
    /// Path of the trace CSV, relative to the manifest's directory.
    pub trace_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
}

impl RunManifest {
    pub fn new(
        run_id: impl Into<String>,
        label: Label,
        task_order: Vec<String>,
        trace_file: impl Into<String>,
    ) -> Self {
        let (label, family) = match label {
            Label::Clean => (LabelKind::Clean, None),
            Label::Infected(f) => (LabelKind::Infected, Some(f)),
        };
        Self {
            run_id: run_id.into(),
            label,
            family,
            task_order,
            trace_file: trace_file.into(),
            ground_truth: None,
        }
    }

    pub fn label(&self) -> Result<Label> {
        match (self.label, &self.family) {
            (LabelKind::Clean, _) => Ok(Label::Clean),
            (LabelKind::Infected, Some(f)) => Ok(Label::Infected(f.clone())),
            (LabelKind::Infected, None) => Err(Error::InvalidInput(format!(
                "run `{}` is infected but names no family",
                self.run_id
            ))),
        }
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_csv_is_multiplied() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        fs::write(
            &path,
            "time_s,v_cpu,i_cpu,v_5v,i_5v\n0.0,12,2,5,1\n0.017,12,3,5,1\n",
        )
        .unwrap();
        let p = load_power_trace(&path, "cpu").unwrap();
        assert_eq!(p.power(), &[24.0, 36.0]);
        assert!(matches!(load_power_trace(&path, "3v3"), Err(Error::UnknownRail(_))));
    }

    #[test]
    fn power_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let trace = PowerTrace::new("cpu", vec![0.0, 0.017, 0.034], vec![20.5, 21.0, 19.25]).unwrap();
        write_power_csv(&path, &trace).unwrap();
        let back = load_power_trace(&path, "cpu").unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn malformed_csv_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "t,power_w\n0,1\n").unwrap();
        assert!(load_power_trace(&path, "cpu").is_err());
        fs::write(&path, "time_s,power_w\n0,abc\n").unwrap();
        assert!(load_power_trace(&path, "cpu").is_err());
    }

    #[test]
    fn manifest_json_shape() {
        let m = RunManifest::new(
            "inf-0",
            Label::Infected("beacon".into()),
            vec!["Idle".into()],
            "inf-0.csv",
        );
        let json = serde_json::to_value(&m).unwrap();
        assert_eq!(json["label"], "infected");
        assert_eq!(json["family"], "beacon");
        assert_eq!(json["task_order"][0], "Idle");
        let back: RunManifest = serde_json::from_value(json).unwrap();
        assert_eq!(back.label().unwrap(), Label::Infected("beacon".into()));

        let orphan: RunManifest = serde_json::from_str(
            r#"{"run_id":"x","label":"infected","family":null,"task_order":[],"trace_file":"x.csv"}"#,
        )
        .unwrap();
        assert!(orphan.label().is_err());
    }
}
