//! Raw power recordings, uniform resampling, marker detection and task
//! segmentation.
//!
//! A recording is a sequence of timestamped readings from voltage and
//! current channels. Multiplying a rail's pair gives a [`PowerTrace`], which
//! is shifted to start at zero and linearly interpolated onto a fixed grid to
//! give a [`UniformProfile`]. Runs are delimited by full-load plateaus
//! ("markers"); the gaps between consecutive markers are the tasks.

mod io;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_power_trace, read_manifest, read_trace_csv, write_manifest, write_power_csv,
    GroundTruth, LabelKind, RunManifest, TraceFile,
};

/// The rail analysed by default.
pub const DEFAULT_RAIL: &str = "+12V CPU";
/// Default resampling interval in seconds.
pub const DEFAULT_DT: f64 = 0.01;
/// Seconds trimmed from both ends of every task segment.
pub const DEFAULT_GUARD_SECONDS: f64 = 0.25;

pub const IDLE: &str = "Idle";
pub const BROWSER: &str = "Browser";
pub const REGISTRY: &str = "Registry";

/// Ground-truth state of a run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state", content = "family")]
pub enum Label {
    Clean,
    Infected(String),
}

impl Label {
    pub fn is_infected(&self) -> bool {
        matches!(self, Label::Infected(_))
    }

    pub fn family(&self) -> Option<&str> {
        match self {
            Label::Clean => None,
            Label::Infected(f) => Some(f),
        }
    }
}

/// Timestamped multi-channel readings. Voltage channels are named
/// `v_<rail>` and current channels `i_<rail>`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    times: Vec<f64>,
    channels: BTreeMap<String, Vec<f64>>,
}

impl RawRecording {
    pub fn new(times: Vec<f64>, channels: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        check_times(&times)?;
        for (name, readings) in &channels {
            if readings.len() != times.len() {
                return Err(Error::ChannelLength {
                    channel: name.clone(),
                    expected: times.len(),
                    found: readings.len(),
                });
            }
            if readings.iter().any(|r| !r.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "channel `{name}` has non-finite readings"
                )));
            }
            if let Some(rail) = name.strip_prefix("v_") {
                if !channels.contains_key(&format!("i_{rail}")) {
                    return Err(Error::InvalidInput(format!(
                        "voltage channel `{name}` has no matching current channel"
                    )));
                }
            }
        }
        Ok(Self { times, channels })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels.get(name).map(Vec::as_slice)
    }

    /// Rails that have both a voltage and a current channel.
    pub fn rails(&self) -> Vec<&str> {
        self.channels
            .keys()
            .filter_map(|k| k.strip_prefix("v_"))
            .collect()
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("non-finite timestamp".into()));
    }
    if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(format!(
            "timestamps not strictly increasing at {} -> {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Instantaneous power drawn on one rail.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace {
    rail: String,
    times: Vec<f64>,
    power: Vec<f64>,
}

impl PowerTrace {
    pub fn new(rail: impl Into<String>, times: Vec<f64>, power: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::TooShort {
                needed: 1,
                found: 0,
            });
        }
        if times.len() != power.len() {
            return Err(Error::ChannelLength {
                channel: "power".into(),
                expected: times.len(),
                found: power.len(),
            });
        }
        check_times(&times)?;
        if let Some(p) = power.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidInput(format!("invalid power reading {p}")));
        }
        Ok(Self {
            rail: rail.into(),
            times,
            power,
        })
    }

    pub fn rail(&self) -> &str {
        &self.rail
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Multiplies the rail's voltage and current readings sample by sample.
pub fn compute_power(rec: &RawRecording, rail: &str) -> Result<PowerTrace> {
    let volts = rec
        .channel(&format!("v_{rail}"))
        .ok_or_else(|| Error::UnknownRail(rail.to_string()))?;
    let amps = rec
        .channel(&format!("i_{rail}"))
        .ok_or_else(|| Error::UnknownRail(rail.to_string()))?;
    if volts.len() != amps.len() {
        return Err(Error::ChannelLength {
            channel: format!("i_{rail}"),
            expected: volts.len(),
            found: amps.len(),
        });
    }
    let power = volts.iter().zip(amps).map(|(v, i)| v * i).collect();
    PowerTrace::new(rail, rec.times.clone(), power)
}

/// Power readings on a uniform time grid starting at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformProfile {
    dt: f64,
    values: Vec<f64>,
}

impl UniformProfile {
    pub fn new(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        if values.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite profile value".into()));
        }
        Ok(Self { dt, values })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Time spanned from the first to the last sample.
    pub fn duration(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.dt
    }

    /// Keeps the first `len` samples.
    pub fn truncated(&self, len: usize) -> Result<Self> {
        Self::new(self.dt, self.values[..len.min(self.values.len())].to_vec())
    }

    /// Samples `start..=end`, re-zeroed in time.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if end >= self.values.len() || end < start {
            return Err(Error::InvalidInput(format!(
                "slice {start}..={end} out of range for {} samples",
                self.values.len()
            )));
        }
        Self::new(self.dt, self.values[start..=end].to_vec())
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Shifts the trace to start at zero and samples its piecewise-linear
/// interpolant at every multiple of `dt` up to the last raw sample.
pub fn resample_uniform(trace: &PowerTrace, dt: f64) -> Result<UniformProfile> {
    if trace.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            found: trace.len(),
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let t0 = trace.times[0];
    let span = trace.times[trace.len() - 1] - t0;
    // Tolerate round-off when the span is an exact multiple of dt.
    let count = (span / dt + 1e-9).floor() as usize + 1;

    let mut values = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let t = (k as f64 * dt).min(span);
        while seg + 2 < trace.len() && trace.times[seg + 1] - t0 < t {
            seg += 1;
        }
        let (ta, tb) = (trace.times[seg] - t0, trace.times[seg + 1] - t0);
        let (pa, pb) = (trace.power[seg], trace.power[seg + 1]);
        let frac = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        values.push(pa + frac * (pb - pa));
    }
    UniformProfile::new(dt, values)
}

/// How the plateau level is referenced when searching for markers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerReference {
    GlobalMax,
    Quantile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarkerConfig {
    pub level_fraction: f64,
    pub min_duration: f64,
    pub reference: MarkerReference,
}

impl Default for MarkerConfig {
    fn default() -> Self {
        Self {
            level_fraction: 0.85,
            min_duration: 2.0,
            reference: MarkerReference::Quantile(0.99),
        }
    }
}

impl MarkerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.level_fraction > 0.0 && self.level_fraction <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "marker level_fraction must lie in (0, 1], got {}",
                self.level_fraction
            )));
        }
        if !(self.min_duration > 0.0) {
            return Err(Error::InvalidInput(format!(
                "marker min_duration must be positive, got {}",
                self.min_duration
            )));
        }
        if let MarkerReference::Quantile(q) = self.reference {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::InvalidInput(format!("quantile {q} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// A detected full-load plateau, in seconds from the start of the profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub start: f64,
    pub end: f64,
}

impl Marker {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Linear-interpolation quantile of unsorted data.
pub(crate) fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Finds maximal stretches at or above `level_fraction` of the reference
/// level lasting at least `min_duration`. Endpoints are placed where the
/// profile crosses the level, interpolated between grid points.
pub fn detect_markers(profile: &UniformProfile, cfg: &MarkerConfig) -> Vec<Marker> {
    let v = profile.values();
    let dt = profile.dt();
    let reference = match cfg.reference {
        MarkerReference::GlobalMax => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        MarkerReference::Quantile(q) => quantile(v, q),
    };
    let level = cfg.level_fraction * reference;

    let mut markers = Vec::new();
    let mut i = 0;
    while i < v.len() {
        if v[i] < level {
            i += 1;
            continue;
        }
        let first = i;
        while i + 1 < v.len() && v[i + 1] >= level {
            i += 1;
        }
        let last = i;
        i += 1;

        let start = if first == 0 {
            0.0
        } else {
            let (a, b) = (v[first - 1], v[first]);
            (first - 1) as f64 * dt + dt * (level - a) / (b - a)
        };
        let end = if last + 1 == v.len() {
            last as f64 * dt
        } else {
            let (a, b) = (v[last], v[last + 1]);
            last as f64 * dt + dt * (a - level) / (a - b)
        };
        if end - start >= cfg.min_duration {
            markers.push(Marker { start, end });
        }
    }
    markers
}

/// One task's slice of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSegment {
    pub task: String,
    pub profile: UniformProfile,
    pub run_id: String,
    pub label: Label,
}

/// Cuts a run into its tasks. A run of N tasks must carry N + 1 markers;
/// task k lies between the end of marker k and the start of marker k + 1,
/// with `guard` seconds trimmed from each side. Anything before the first
/// marker or after the last is discarded.
pub fn segment_tasks(
    profile: &UniformProfile,
    markers: &[Marker],
    manifest: &RunManifest,
    guard: f64,
) -> Result<Vec<TaskSegment>> {
    let tasks = &manifest.task_order;
    if markers.len() != tasks.len() + 1 {
        return Err(Error::MarkerCount {
            tasks: tasks.len(),
            expected: tasks.len() + 1,
            found: markers.len(),
        });
    }
    if markers.windows(2).any(|w| w[1].start < w[0].end) {
        return Err(Error::InvalidInput("markers unsorted or overlapping".into()));
    }
    let label = manifest.label()?;
    let dt = profile.dt();
    let last_index = profile.len() - 1;

    tasks
        .iter()
        .zip(markers.windows(2))
        .map(|(task, pair)| {
            let from = pair[0].end + guard;
            let to = pair[1].start - guard;
            let first = (from / dt - 1e-9).ceil().max(0.0) as usize;
            let last = ((to / dt + 1e-9).floor().max(0.0) as usize).min(last_index);
            if last <= first {
                return Err(Error::InvalidInput(format!(
                    "task `{task}` in run `{}` is empty between {from:.3} s and {to:.3} s",
                    manifest.run_id
                )));
            }
            Ok(TaskSegment {
                task: task.clone(),
                profile: profile.slice(first, last)?,
                run_id: manifest.run_id.clone(),
                label: label.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn raw(times: Vec<f64>, v: Vec<f64>, i: Vec<f64>) -> RawRecording {
        let mut ch = BTreeMap::new();
        ch.insert(format!("v_{DEFAULT_RAIL}"), v);
        ch.insert(format!("i_{DEFAULT_RAIL}"), i);
        RawRecording::new(times, ch).unwrap()
    }

    #[test]
    fn power_is_elementwise_product() {
        let rec = raw(vec![0.0, 1.0, 2.0], vec![12.0; 3], vec![1.0, 2.0, 3.0]);
        let p = compute_power(&rec, DEFAULT_RAIL).unwrap();
        assert_eq!(p.power(), &[12.0, 24.0, 36.0]);
        assert_eq!(p.times(), &[0.0, 1.0, 2.0]);

        let rec = raw(vec![0.0], vec![12.0], vec![2.0]);
        assert_eq!(compute_power(&rec, DEFAULT_RAIL).unwrap().power(), &[24.0]);
        let rec = raw(vec![0.0], vec![12.0], vec![0.0]);
        assert_eq!(compute_power(&rec, DEFAULT_RAIL).unwrap().power(), &[0.0]);
    }

    #[test]
    fn unknown_rail_and_bad_channels() {
        let rec = raw(vec![0.0, 1.0], vec![12.0; 2], vec![1.0; 2]);
        assert!(matches!(
            compute_power(&rec, "+5V"),
            Err(Error::UnknownRail(_))
        ));

        let mut ch = BTreeMap::new();
        ch.insert("v_a".to_string(), vec![1.0, 2.0]);
        ch.insert("i_a".to_string(), vec![1.0]);
        assert!(matches!(
            RawRecording::new(vec![0.0, 1.0], ch),
            Err(Error::ChannelLength { .. })
        ));

        let mut ch = BTreeMap::new();
        ch.insert("v_a".to_string(), vec![1.0, 2.0]);
        assert!(RawRecording::new(vec![0.0, 1.0], ch).is_err());

        assert!(RawRecording::new(vec![1.0, 1.0], BTreeMap::new()).is_err());
    }

    #[test]
    fn resample_interpolates_between_bracketing_samples() {
        let t = PowerTrace::new("r", vec![0.0, 0.017], vec![1.0, 2.0]).unwrap();
        let p = resample_uniform(&t, 0.01).unwrap();
        assert_eq!(p.len(), 2);
        assert_relative_eq!(p.values()[0], 1.0);
        assert_relative_eq!(p.values()[1], 1.0 + 0.01 / 0.017, epsilon = 1e-12);
        assert_relative_eq!(p.values()[1], 1.5882, epsilon = 1e-4);
    }

    #[test]
    fn resample_reproduces_knots_and_shifts_time() {
        let t = PowerTrace::new("r", vec![0.0, 0.01, 0.02, 0.03], vec![4.0, 1.0, 7.0, 2.0]).unwrap();
        let p = resample_uniform(&t, 0.01).unwrap();
        assert_eq!(p.len(), 4);
        for (a, b) in p.values().iter().zip([4.0, 1.0, 7.0, 2.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }

        let t = PowerTrace::new("r", vec![5.0, 5.02], vec![3.0, 3.0]).unwrap();
        let p = resample_uniform(&t, 0.01).unwrap();
        assert_eq!(p.values(), &[3.0, 3.0, 3.0]);
    }

    #[test]
    fn resample_needs_two_samples() {
        let t = PowerTrace::new("r", vec![0.0], vec![1.0]).unwrap();
        assert!(matches!(
            resample_uniform(&t, 0.01),
            Err(Error::TooShort { .. })
        ));
    }

    fn plateau_profile(plateaus: &[(f64, f64)], total: f64) -> UniformProfile {
        let n = (total / DEFAULT_DT).round() as usize + 1;
        let values = (0..n)
            .map(|k| {
                let t = k as f64 * DEFAULT_DT;
                if plateaus.iter().any(|&(a, b)| t >= a && t <= b) {
                    60.0
                } else {
                    20.0
                }
            })
            .collect();
        UniformProfile::new(DEFAULT_DT, values).unwrap()
    }

    #[test]
    fn single_plateau_is_found() {
        let p = plateau_profile(&[(10.0, 15.0)], 30.0);
        let m = detect_markers(&p, &MarkerConfig::default());
        assert_eq!(m.len(), 1);
        assert!((m[0].start - 10.0).abs() <= 0.05, "{:?}", m[0]);
        assert!((m[0].end - 15.0).abs() <= 0.05, "{:?}", m[0]);
    }

    #[test]
    fn two_plateaus_are_disjoint() {
        let p = plateau_profile(&[(5.0, 9.0), (20.0, 24.0)], 30.0);
        let m = detect_markers(&p, &MarkerConfig::default());
        assert_eq!(m.len(), 2);
        assert!(m[0].end < m[1].start);
        assert!((m[1].start - 20.0).abs() <= 0.05);
    }

    #[test]
    fn short_bumps_are_ignored() {
        let p = plateau_profile(&[(5.0, 6.0), (20.0, 24.0)], 30.0);
        let m = detect_markers(&p, &MarkerConfig::default());
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn constant_profile_is_one_interval() {
        let p = UniformProfile::new(DEFAULT_DT, vec![20.0; 1001]).unwrap();
        let m = detect_markers(&p, &MarkerConfig::default());
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].start, 0.0);
        assert_relative_eq!(m[0].end, 10.0, epsilon = 1e-9);
    }

    fn manifest(tasks: &[&str]) -> RunManifest {
        RunManifest::new(
            "run-0",
            Label::Clean,
            tasks.iter().map(|s| s.to_string()).collect(),
            "run-0.csv",
        )
    }

    #[test]
    fn segments_follow_task_order() {
        let p = plateau_profile(&[(2.0, 4.0), (10.0, 12.0), (20.0, 22.0), (30.0, 32.0)], 34.0);
        let m = detect_markers(&p, &MarkerConfig::default());
        assert_eq!(m.len(), 4);
        let segs = segment_tasks(&p, &m, &manifest(&[IDLE, BROWSER, REGISTRY]), 0.25).unwrap();
        let names: Vec<_> = segs.iter().map(|s| s.task.as_str()).collect();
        assert_eq!(names, [IDLE, BROWSER, REGISTRY]);
        // 6 s gap minus two 0.25 s guards.
        assert!((segs[0].profile.duration() - 5.5).abs() <= 2.0 * DEFAULT_DT);
        assert!((segs[1].profile.duration() - 7.5).abs() <= 2.0 * DEFAULT_DT);
        assert!(segs.iter().all(|s| s.profile.values().iter().all(|&v| v == 20.0)));
    }

    #[test]
    fn single_gap_single_segment() {
        let p = plateau_profile(&[(2.0, 4.0), (10.0, 12.0)], 14.0);
        let m = detect_markers(&p, &MarkerConfig::default());
        let segs = segment_tasks(&p, &m, &manifest(&[IDLE]), 0.25).unwrap();
        assert_eq!(segs.len(), 1);
    }

    #[test]
    fn marker_count_mismatch_is_reported() {
        let p = plateau_profile(&[(2.0, 4.0), (10.0, 12.0), (20.0, 22.0)], 24.0);
        let m = detect_markers(&p, &MarkerConfig::default());
        let err = segment_tasks(&p, &m, &manifest(&[IDLE, BROWSER, REGISTRY]), 0.25).unwrap_err();
        assert!(matches!(
            err,
            Error::MarkerCount {
                expected: 4,
                found: 3,
                ..
            }
        ));
    }

    #[test]
    fn marker_config_validation() {
        assert!(MarkerConfig::default().validate().is_ok());
        let bad = MarkerConfig {
            level_fraction: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = MarkerConfig {
            min_duration: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
