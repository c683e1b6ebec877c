//! Seeded synthetic power-trace corpora.
//!
//! A run is a sequence of tasks separated by full-load marker plateaus,
//! sampled at a jittered cadence. Background noise is Gaussian plus
//! Poisson-timed rectangular spikes. Infections superpose a constant
//! drain, extra spikes and an optional periodic load on every task.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{
    write_manifest, write_power_csv, GroundTruth, Label, Marker, PowerTrace, RunManifest, BROWSER, DEFAULT_RAIL,
    IDLE, REGISTRY,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Pattern {
    Flat,
    /// `count` bursts of `height` watts, one every `spacing` seconds from
    /// the task start, each lasting `width` seconds.
    WindowBursts { count: usize, spacing: f64, width: f64, height: f64 },
    /// Linear rise by `rise` watts over the task.
    Ramp { rise: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub duration: f64,
    pub base_level: f64,
    pub pattern: Pattern,
}

impl TaskSpec {
    pub fn idle() -> Self {
        Self {
            name: IDLE.into(),
            duration: 180.0,
            base_level: 20.0,
            pattern: Pattern::Flat,
        }
    }

    pub fn browser() -> Self {
        Self {
            name: BROWSER.into(),
            duration: 100.0,
            base_level: 28.0,
            pattern: Pattern::WindowBursts {
                count: 15,
                spacing: 5.0,
                width: 2.0,
                height: 18.0,
            },
        }
    }

    pub fn registry() -> Self {
        Self {
            name: REGISTRY.into(),
            duration: 20.0,
            base_level: 32.0,
            pattern: Pattern::Ramp { rise: 8.0 },
        }
    }

    /// Noise-free level at `t` seconds into the task.
    pub fn level(&self, t: f64) -> f64 {
        match self.pattern {
            Pattern::Flat => self.base_level,
            Pattern::WindowBursts {
                count,
                spacing,
                width,
                height,
            } => {
                let k = (t / spacing).floor();
                let in_burst = k >= 0.0 && (k as usize) < count && t - k * spacing < width;
                self.base_level + if in_burst { height } else { 0.0 }
            }
            Pattern::Ramp { rise } => self.base_level + rise * (t / self.duration).clamp(0.0, 1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.base_level > 0.0) {
            return Err(Error::InvalidInput(format!(
                "task `{}` needs positive duration and base level",
                self.name
            )));
        }
        Ok(())
    }
}

/// The Idle, Browser, Registry protocol.
pub fn default_tasks() -> Vec<TaskSpec> {
    vec![TaskSpec::idle(), TaskSpec::browser(), TaskSpec::registry()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub gaussian_sd: f64,
    /// Spikes per second.
    pub spike_rate: f64,
    pub spike_duration_mean: f64,
    pub spike_height: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            gaussian_sd: 0.5,
            spike_rate: 0.05,
            spike_duration_mean: 0.5,
            spike_height: 6.0,
        }
    }
}

impl NoiseSpec {
    pub fn silent() -> Self {
        Self {
            gaussian_sd: 0.0,
            spike_rate: 0.0,
            spike_duration_mean: 0.0,
            spike_height: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.gaussian_sd, self.spike_rate, self.spike_duration_mean, self.spike_height];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput("noise parameters must be finite and nonnegative".into()));
        }
        if self.spike_rate > 0.0 && self.spike_duration_mean <= 0.0 {
            return Err(Error::InvalidInput("spikes need a positive mean duration".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicLoad {
    pub amplitude: f64,
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfectionSpec {
    pub family: String,
    pub mean_shift: f64,
    /// Spikes per second on top of the background rate.
    pub extra_spike_rate: f64,
    /// Square wave of `amplitude` watts, on for the first half of every
    /// period.
    pub periodic_load: Option<PeriodicLoad>,
    /// Multiplies every effect; zero gives a clean-equivalent run.
    pub effect_scale: f64,
}

impl InfectionSpec {
    pub fn scaled(mut self, effect_scale: f64) -> Self {
        self.effect_scale = effect_scale;
        self
    }

    fn validate(&self) -> Result<()> {
        let amplitude = self.periodic_load.map_or(0.0, |p| p.amplitude);
        if self.mean_shift == 0.0 && self.extra_spike_rate == 0.0 && amplitude == 0.0 {
            return Err(Error::InvalidInput(format!("infection `{}` has no effect", self.family)));
        }
        if self.extra_spike_rate < 0.0 || !(self.effect_scale >= 0.0 && self.effect_scale.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "infection `{}` needs nonnegative spike rate and effect scale",
                self.family
            )));
        }
        if self.periodic_load.is_some_and(|p| !(p.period > 0.0)) {
            return Err(Error::InvalidInput(format!("infection `{}` has a non-positive period", self.family)));
        }
        Ok(())
    }

    /// Extra watts at `t` seconds into the run (markers excluded).
    fn load(&self, t: f64) -> f64 {
        let periodic = match self.periodic_load {
            Some(p) if (t / p.period).fract() < 0.5 => p.amplitude,
            _ => 0.0,
        };
        self.effect_scale * (self.mean_shift + periodic)
    }
}

/// The five shipped infection families.
pub fn infection_presets() -> Vec<InfectionSpec> {
    let spec = |family: &str, mean_shift, extra_spike_rate, periodic_load| InfectionSpec {
        family: family.into(),
        mean_shift,
        extra_spike_rate,
        periodic_load,
        effect_scale: 1.0,
    };
    vec![
        spec("steady-drain", 1.5, 0.0, None),
        spec(
            "beacon",
            0.0,
            0.0,
            Some(PeriodicLoad {
                amplitude: 3.0,
                period: 10.0,
            }),
        ),
        spec("burst", 0.0, 0.25, None),
        spec(
            "scanner",
            0.8,
            0.0,
            Some(PeriodicLoad {
                amplitude: 2.0,
                period: 4.0,
            }),
        ),
        spec(
            "combo",
            0.7,
            0.1,
            Some(PeriodicLoad {
                amplitude: 1.5,
                period: 20.0,
            }),
        ),
    ]
}

/// Everything about a run except its tasks' noise draws and infection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub rail: String,
    pub tasks: Vec<TaskSpec>,
    pub noise: NoiseSpec,
    pub marker_level: f64,
    pub marker_duration: f64,
    /// Mean seconds between raw samples.
    pub cadence: f64,
    pub cadence_jitter_sd: f64,
    /// Idle seconds before the first marker and after the last.
    pub lead_in: f64,
    pub tail: f64,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            rail: DEFAULT_RAIL.into(),
            tasks: default_tasks(),
            noise: NoiseSpec::default(),
            marker_level: 95.0,
            marker_duration: 5.0,
            cadence: 0.017,
            cadence_jitter_sd: 0.001,
            lead_in: 2.0,
            tail: 2.0,
        }
    }
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::InvalidInput("a run needs at least one task".into()));
        }
        for t in &self.tasks {
            t.validate()?;
        }
        self.noise.validate()?;
        let positive = [self.marker_level, self.marker_duration, self.cadence];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput("marker level, marker duration and cadence must be positive".into()));
        }
        if !(self.cadence_jitter_sd >= 0.0 && self.lead_in >= 0.0 && self.tail >= 0.0) {
            return Err(Error::InvalidInput("jitter, lead-in and tail must be nonnegative".into()));
        }
        Ok(())
    }

    /// Marker plateaus and task intervals, in seconds from the run start.
    pub fn layout(&self) -> (Vec<Marker>, Vec<(f64, f64)>) {
        let mut markers = Vec::with_capacity(self.tasks.len() + 1);
        let mut tasks = Vec::with_capacity(self.tasks.len());
        let mut t = self.lead_in;
        for (i, task) in self.tasks.iter().enumerate() {
            markers.push(Marker {
                start: t,
                end: t + self.marker_duration,
            });
            t += self.marker_duration;
            tasks.push((t, t + task.duration));
            t += task.duration;
            if i + 1 == self.tasks.len() {
                markers.push(Marker {
                    start: t,
                    end: t + self.marker_duration,
                });
                t += self.marker_duration;
            }
        }
        (markers, tasks)
    }

    pub fn total_duration(&self) -> f64 {
        let (markers, _) = self.layout();
        markers.last().map_or(0.0, |m| m.end) + self.tail
    }
}

/// Poisson-timed pulses with exponential durations, as `(start, end)`.
fn pulses(rng: &mut ChaCha8Rng, rate: f64, mean_duration: f64, horizon: f64) -> Vec<(f64, f64)> {
    if rate <= 0.0 || mean_duration <= 0.0 {
        return Vec::new();
    }
    let gap = Exp::new(rate).expect("positive rate");
    let len = Exp::new(1.0 / mean_duration).expect("positive duration");
    let mut out = Vec::new();
    let mut t = gap.sample(rng);
    while t < horizon {
        out.push((t, t + len.sample(rng)));
        t += gap.sample(rng);
    }
    out
}

fn covered(pulses: &[(f64, f64)], t: f64) -> usize {
    pulses.iter().filter(|&&(a, b)| a <= t && t < b).count()
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// One run: the sampled trace and a manifest carrying the true marker
/// positions. Values are rounded to the CSV's precision so a written and
/// reloaded run is identical to the in-memory one.
pub fn generate_run(
    spec: &RunSpec,
    infection: Option<&InfectionSpec>,
    run_id: &str,
    seed: u64,
) -> Result<(PowerTrace, RunManifest)> {
    spec.validate()?;
    if let Some(inf) = infection {
        inf.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = spec.total_duration();
    let (markers, intervals) = spec.layout();

    let noise = &spec.noise;
    let spikes = pulses(&mut rng, noise.spike_rate, noise.spike_duration_mean, horizon);
    let extra = match infection {
        Some(inf) => pulses(
            &mut rng,
            inf.extra_spike_rate * inf.effect_scale,
            noise.spike_duration_mean.max(0.5),
            horizon,
        ),
        None => Vec::new(),
    };
    let white = Normal::new(0.0, noise.gaussian_sd).expect("validated sd");
    let jitter = Normal::new(0.0, spec.cadence_jitter_sd).expect("validated sd");

    let mut times = Vec::new();
    let mut power = Vec::new();
    let mut t: f64 = 0.0;
    while t <= horizon {
        let on_marker = markers.iter().any(|m| m.start <= t && t < m.end);
        let p = if on_marker {
            spec.marker_level + white.sample(&mut rng)
        } else {
            let task = intervals.iter().position(|&(a, b)| a <= t && t < b);
            let level = match task {
                Some(k) => spec.tasks[k].level(t - intervals[k].0),
                None => spec.tasks[0].base_level,
            };
            let spike = noise.spike_height * (covered(&spikes, t) + covered(&extra, t)) as f64;
            let drain = infection.map_or(0.0, |inf| inf.load(t));
            level + spike + drain + white.sample(&mut rng)
        };
        times.push(round6(t));
        power.push(round6(p.max(0.0)));
        let step = spec.cadence + jitter.sample(&mut rng);
        t += step.max(spec.cadence / 4.0);
    }

    let trace = PowerTrace::new(spec.rail.clone(), times, power)?;
    let label = match infection {
        Some(inf) => Label::Infected(inf.family.clone()),
        None => Label::Clean,
    };
    let mut manifest = RunManifest::new(
        run_id,
        label,
        spec.tasks.iter().map(|t| t.name.clone()).collect(),
        format!("{run_id}.csv"),
    );
    manifest.ground_truth = Some(GroundTruth { markers });
    Ok((trace, manifest))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub families: usize,
    pub runs_per_family: usize,
    pub clean_runs: usize,
    pub effect_scale: f64,
    pub seed: u64,
    pub run: RunSpec,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            families: 5,
            runs_per_family: 3,
            clean_runs: 15,
            effect_scale: 1.0,
            seed: 42,
            run: RunSpec::default(),
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let presets = infection_presets().len();
        if self.families == 0 || self.families > presets {
            return Err(Error::InvalidInput(format!(
                "families must be between 1 and {presets}, got {}",
                self.families
            )));
        }
        if self.runs_per_family == 0 || self.clean_runs == 0 {
            return Err(Error::InvalidInput("run counts must be at least 1".into()));
        }
        if !(self.effect_scale >= 0.0 && self.effect_scale.is_finite()) {
            return Err(Error::InvalidInput("effect_scale must be nonnegative".into()));
        }
        self.run.validate()
    }

    /// Run ids and infections in corpus order: clean runs first, then each
    /// family's runs.
    pub fn plan(&self) -> Vec<(String, Option<InfectionSpec>)> {
        let mut plan: Vec<(String, Option<InfectionSpec>)> =
            (0..self.clean_runs).map(|i| (format!("clean-{i:02}"), None)).collect();
        for preset in infection_presets().into_iter().take(self.families) {
            let inf = preset.scaled(self.effect_scale);
            for r in 0..self.runs_per_family {
                plan.push((format!("infected-{}-{r}", inf.family), Some(inf.clone())));
            }
        }
        plan
    }
}

/// Generates every run of the corpus in memory, in parallel. Run `i` is
/// seeded with `seed + i`.
pub fn generate_corpus_runs(cfg: &CorpusConfig) -> Result<Vec<(PowerTrace, RunManifest)>> {
    cfg.validate()?;
    cfg.plan()
        .into_par_iter()
        .enumerate()
        .map(|(i, (id, inf))| generate_run(&cfg.run, inf.as_ref(), &id, cfg.seed.wrapping_add(i as u64)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub run_id: String,
    /// Manifest path relative to the corpus directory.
    pub manifest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub seed: u64,
    pub runs: Vec<IndexEntry>,
}

pub const INDEX_FILE: &str = "index.json";

/// Writes `<run_id>.csv` and `<run_id>.json` per run plus `index.json`.
pub fn generate_corpus(cfg: &CorpusConfig, dir: &Path) -> Result<CorpusIndex> {
    let runs = generate_corpus_runs(cfg)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    runs.par_iter().try_for_each(|(trace, manifest)| {
        write_power_csv(&dir.join(&manifest.trace_file), trace)?;
        write_manifest(&dir.join(format!("{}.json", manifest.run_id)), manifest)
    })?;
    let index = CorpusIndex {
        seed: cfg.seed,
        runs: runs
            .iter()
            .map(|(_, m)| IndexEntry {
                run_id: m.run_id.clone(),
                manifest: format!("{}.json", m.run_id),
            })
            .collect(),
    };
    let path = dir.join(INDEX_FILE);
    fs::write(&path, serde_json::to_string_pretty(&index)?).map_err(|e| Error::io(&path, e))?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{resample_uniform, LabelKind, DEFAULT_DT};

    fn idle_only() -> RunSpec {
        RunSpec {
            tasks: vec![TaskSpec::idle()],
            noise: NoiseSpec::silent(),
            ..RunSpec::default()
        }
    }

    #[test]
    fn noiseless_idle_is_flat_between_plateaus() {
        let spec = idle_only();
        let (trace, manifest) = generate_run(&spec, None, "r", 1).unwrap();
        let m = &manifest.ground_truth.as_ref().unwrap().markers;
        assert_eq!(m.len(), 2);
        for (&t, &p) in trace.times().iter().zip(trace.power()) {
            let on_marker = m.iter().any(|mk| mk.start <= t && t < mk.end);
            assert_eq!(p, if on_marker { 95.0 } else { 20.0 }, "t={t}");
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let spec = RunSpec::default();
        let inf = &infection_presets()[4];
        let (a, _) = generate_run(&spec, Some(inf), "r", 9).unwrap();
        let (b, _) = generate_run(&spec, Some(inf), "r", 9).unwrap();
        assert_eq!(a, b);
        let (c, _) = generate_run(&spec, Some(inf), "r", 10).unwrap();
        assert_ne!(a.power(), c.power());
    }

    #[test]
    fn cadence_is_jittered_around_mean() {
        let (trace, _) = generate_run(&RunSpec::default(), None, "r", 3).unwrap();
        let t = trace.times();
        let mean_step = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
        assert!((mean_step - 0.017).abs() < 1e-4, "{mean_step}");
        assert!(t.windows(2).any(|w| ((w[1] - w[0]) - 0.017).abs() > 1e-4));
    }

    #[test]
    fn mean_shift_raises_task_means() {
        let spec = RunSpec {
            tasks: vec![TaskSpec::idle()],
            noise: NoiseSpec {
                spike_rate: 0.0,
                ..NoiseSpec::default()
            },
            ..RunSpec::default()
        };
        let shift = InfectionSpec {
            family: "x".into(),
            mean_shift: 2.0,
            extra_spike_rate: 0.0,
            periodic_load: None,
            effect_scale: 1.0,
        };
        let idle_mean = |inf: Option<&InfectionSpec>| {
            let (trace, _) = generate_run(&spec, inf, "r", 5).unwrap();
            let (_, tasks) = spec.layout();
            let vals: Vec<f64> = trace
                .times()
                .iter()
                .zip(trace.power())
                .filter(|(t, _)| **t >= tasks[0].0 && **t < tasks[0].1)
                .map(|(_, p)| *p)
                .collect();
            (vals.iter().sum::<f64>() / vals.len() as f64, vals.len())
        };
        let (clean, n) = idle_mean(None);
        let (infected, _) = idle_mean(Some(&shift));
        let tol = 3.0 * 0.5 / (n as f64).sqrt() * 2f64.sqrt();
        assert!(((infected - clean) - 2.0).abs() <= tol, "{}", infected - clean);
    }

    #[test]
    fn zero_effect_scale_matches_clean() {
        let spec = RunSpec::default();
        let quiet = infection_presets()[0].clone().scaled(0.0);
        let (a, _) = generate_run(&spec, None, "r", 11).unwrap();
        let (b, _) = generate_run(&spec, Some(&quiet), "r", 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn presets_are_distinct_and_effective() {
        let presets = infection_presets();
        assert_eq!(presets.len(), 5);
        for (i, p) in presets.iter().enumerate() {
            p.validate().unwrap();
            assert!(presets[i + 1..].iter().all(|q| q.family != p.family));
        }
        let none = InfectionSpec {
            family: "none".into(),
            mean_shift: 0.0,
            extra_spike_rate: 0.0,
            periodic_load: None,
            effect_scale: 1.0,
        };
        assert!(none.validate().is_err());
    }

    #[test]
    fn corpus_counts() {
        let plan = CorpusConfig::default().plan();
        assert_eq!(plan.len(), 30);
        assert_eq!(plan.iter().filter(|(_, i)| i.is_none()).count(), 15);
        let small = CorpusConfig {
            families: 2,
            runs_per_family: 1,
            clean_runs: 2,
            ..CorpusConfig::default()
        };
        assert_eq!(small.plan().len(), 4);
        assert!(CorpusConfig {
            families: 6,
            ..CorpusConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn corpus_on_disk_is_deterministic() {
        let cfg = CorpusConfig {
            families: 2,
            runs_per_family: 1,
            clean_runs: 2,
            run: RunSpec {
                tasks: vec![TaskSpec::registry()],
                ..RunSpec::default()
            },
            ..CorpusConfig::default()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let index = generate_corpus(&cfg, a.path()).unwrap();
        generate_corpus(&cfg, b.path()).unwrap();
        assert_eq!(index.runs.len(), 4);
        let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert_eq!(names.len(), 9);
        for name in names {
            let x = fs::read(a.path().join(&name)).unwrap();
            let y = fs::read(b.path().join(&name)).unwrap();
            assert_eq!(x, y, "{name:?}");
        }
        let m = crate::trace::read_manifest(&a.path().join("infected-steady-drain-0.json")).unwrap();
        assert_eq!(m.label, LabelKind::Infected);
        let reloaded = crate::trace::load_power_trace(&a.path().join(&m.trace_file), DEFAULT_RAIL).unwrap();
        let (mem, _) = generate_run(&cfg.run, Some(&infection_presets()[0]), &m.run_id, cfg.seed + 2).unwrap();
        assert_eq!(reloaded.power(), mem.power());
        assert!(resample_uniform(&reloaded, DEFAULT_DT).is_ok());
    }
}
