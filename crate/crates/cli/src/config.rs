use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use powerprint::detect::FeatureSubset;
use powerprint::pipeline::PipelineConfig;
use powerprint::synth::CorpusConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

/// Everything a command needs, loaded from TOML. Missing sections take
/// their defaults; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub paths: Paths,
    pub corpus: CorpusConfig,
    pub pipeline: PipelineConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub subset: Option<FeatureSubset>,
    pub two_sided: bool,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Config::default()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Self::from_toml(&text).with_context(|| format!("in {}", p.display()))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.pipeline.validate()?;
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.corpus.seed = seed;
            self.pipeline.seed = seed;
        }
        if let Some(subset) = &o.subset {
            self.pipeline.ensemble.subset = subset.clone();
        }
        if o.two_sided {
            self.pipeline.ensemble.two_sided = true;
        }
        self.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn sections_parse() {
        let cfg = Config::from_toml(
            r#"
            [paths]
            corpus = "data"

            [corpus]
            families = 2
            seed = 9

            [pipeline]
            dt = 0.02
            training_clean = 4

            [pipeline.markers]
            level_fraction = 0.8
            reference = "global_max"

            [pipeline.features]
            perm_order = 4
            shapes = 3

            [pipeline.ensemble]
            subset = "recommended"
            two_sided = true

            [pipeline.svm]
            c = 2.0
            kernels = [{ type = "linear" }, { type = "rbf", gamma = 0.5 }]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.paths.corpus, Some(PathBuf::from("data")));
        assert_eq!(cfg.corpus.families, 2);
        assert_eq!(cfg.pipeline.dt, 0.02);
        assert_eq!(cfg.pipeline.features.perm_order, 4);
        assert_eq!(cfg.pipeline.ensemble.subset, FeatureSubset::Recommended);
        assert_eq!(cfg.pipeline.svm.kernels.len(), 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml("[pipeline]\nd_t = 0.01\n").is_err());
        assert!(Config::from_toml("[nonsense]\n").is_err());
        assert!(Config::from_toml("[pipeline.features]\nm = 6\n").is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(Config::from_toml("[pipeline]\ndt = -1.0\n").is_err());
        assert!(Config::from_toml("[pipeline.features]\nperm_order = 5\n").is_err());
        assert!(Config::from_toml("[corpus]\nfamilies = 9\n").is_err());
    }

    #[test]
    fn flags_override_file() {
        let mut cfg = Config::from_toml("[corpus]\nseed = 1\n").unwrap();
        cfg.apply(&Overrides {
            seed: Some(5),
            subset: Some(FeatureSubset::Recommended),
            two_sided: true,
        })
        .unwrap();
        assert_eq!((cfg.corpus.seed, cfg.pipeline.seed), (5, 5));
        assert!(cfg.pipeline.ensemble.two_sided);
        assert_eq!(cfg.pipeline.ensemble.subset, FeatureSubset::Recommended);
    }
}
