//! TOML run configuration: synthetic generation, bootstrap settings and the
//! parameters of every study.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::equivalence::{BootstrapConfig, TestId, TestOptions};
use crate::error::{Error, Result};
use crate::experiments::{
    ConsensusStudyConfig, DatasetGroupSpec, Fig3Config, GroupId, IraCollapseConfig, ProfileParams, SweepSettings,
    DEFAULT_OUTLIER, IMBALANCED_RATIO,
};
use crate::synth::{prevalence_for_imbalance, FlipSpec, GroundTruthConfig, RaterProfile};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub ground_truth: GroundTruthSection,
    pub profiles: Vec<RaterProfile>,
    pub flip: Option<FlipSpec>,
    pub bootstrap: BootstrapConfig,
    pub tests: TestOptions,
    pub experiment: ExperimentSection,
}

/// Ground truth given either by `prevalence_p` or by a negative:positive
/// `imbalance` ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundTruthSection {
    pub prevalence_p: Option<f64>,
    pub imbalance: Option<f64>,
    pub length_n: usize,
    pub seed: u64,
    pub sample_period: f64,
}

impl Default for GroundTruthSection {
    fn default() -> Self {
        Self {
            prevalence_p: None,
            imbalance: Some(1.0),
            length_n: 36_000,
            seed: 0,
            sample_period: 1.0,
        }
    }
}

impl GroundTruthSection {
    pub fn resolve(&self) -> Result<GroundTruthConfig> {
        let p = match (self.prevalence_p, self.imbalance) {
            (Some(_), Some(_)) => {
                return Err(Error::validation(
                    "ground_truth",
                    "set either prevalence_p or imbalance, not both",
                ))
            }
            (Some(p), None) => p,
            (None, Some(r)) => prevalence_for_imbalance(r).map_err(|e| relabel(e, "ground_truth.imbalance"))?,
            (None, None) => return Err(Error::validation("ground_truth", "prevalence_p or imbalance is required")),
        };
        let cfg = GroundTruthConfig {
            prevalence_p: p,
            length_n: self.length_n,
            seed: self.seed,
            sample_period: self.sample_period,
        };
        cfg.validate().map_err(|e| relabel(e, "ground_truth"))?;
        Ok(cfg)
    }
}

fn relabel(e: Error, prefix: &str) -> Error {
    match e {
        Error::Validation { path, message } if !path.starts_with(prefix) => Error::Validation {
            path: format!("{prefix}.{path}"),
            message,
        },
        other => other,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grid {
    Standard,
    #[default]
    Reduced,
    Smoke,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpertSweepSection {
    pub groups: Vec<GroupId>,
    pub grid: Grid,
    /// Ratio used by the imbalanced groups.
    pub imbalanced_ratio: f64,
    pub n_raters_total: Option<usize>,
    pub expert_counts: Option<Vec<usize>>,
    pub sequence_length: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub expert: ProfileParams,
    pub overrater: ProfileParams,
    pub underrater: ProfileParams,
    pub directionless: ProfileParams,
    pub tests: Vec<TestId>,
    pub n_iterations: usize,
}

impl Default for ExpertSweepSection {
    fn default() -> Self {
        let d = DatasetGroupSpec::standard(GroupId::D1);
        Self {
            groups: GroupId::ALL.to_vec(),
            grid: Grid::Reduced,
            imbalanced_ratio: IMBALANCED_RATIO,
            n_raters_total: None,
            expert_counts: None,
            sequence_length: None,
            seeds: None,
            expert: d.expert_profile,
            overrater: d.overrater_profile,
            underrater: d.underrater_profile,
            directionless: d.directionless_profile,
            tests: TestId::ALL.to_vec(),
            n_iterations: SweepSettings::default().bootstrap.n_iterations,
        }
    }
}

impl ExpertSweepSection {
    pub fn group_spec(&self, group: GroupId) -> DatasetGroupSpec {
        let base = match self.grid {
            Grid::Standard => DatasetGroupSpec::standard(group),
            Grid::Reduced => DatasetGroupSpec::reduced(group),
            Grid::Smoke => DatasetGroupSpec::smoke(group),
        };
        let mut spec = base.with_imbalanced_ratio(self.imbalanced_ratio);
        if let Some(n) = self.n_raters_total {
            spec.n_raters_total = n;
        }
        if let Some(c) = &self.expert_counts {
            spec.expert_counts = c.clone();
        }
        if let Some(l) = self.sequence_length {
            spec.sequence_length = l;
        }
        if let Some(s) = &self.seeds {
            spec.seeds = s.clone();
        }
        spec.expert_profile = self.expert;
        spec.overrater_profile = self.overrater;
        spec.underrater_profile = self.underrater;
        spec.directionless_profile = self.directionless;
        spec
    }

    pub fn settings(&self, bootstrap: &BootstrapConfig, options: TestOptions) -> SweepSettings {
        SweepSettings {
            tests: self.tests.clone(),
            bootstrap: BootstrapConfig {
                n_iterations: self.n_iterations,
                ..*bootstrap
            },
            options,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutlierSection {
    pub group: GroupId,
    pub outlier: ProfileParams,
}

impl Default for OutlierSection {
    fn default() -> Self {
        Self {
            group: GroupId::D2,
            outlier: DEFAULT_OUTLIER,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub fig3: Fig3Config,
    pub consensus: ConsensusStudyConfig,
    pub ira_collapse: IraCollapseConfig,
    pub expert_sweep: ExpertSweepSection,
    pub outlier: OutlierSection,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                line,
                field: "config".into(),
                message: e.message().to_string(),
            }
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_toml_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    /// Check every section, reporting the first offending field by path.
    pub fn validate(&self) -> Result<()> {
        self.ground_truth.resolve()?;
        for (i, p) in self.profiles.iter().enumerate() {
            p.validate(&format!("profiles[{i}]"))?;
        }
        if let Some(f) = &self.flip {
            f.validate().map_err(|e| relabel(e, "flip"))?;
        }
        self.bootstrap.validate().map_err(|e| relabel(e, "bootstrap"))?;
        let sweep = &self.experiment.expert_sweep;
        if sweep.n_iterations == 0 {
            return Err(Error::validation("experiment.expert_sweep.n_iterations", "must be at least 1"));
        }
        for &g in &sweep.groups {
            sweep
                .group_spec(g)
                .validate()
                .map_err(|e| relabel(e, "experiment.expert_sweep"))?;
        }
        for (name, p) in [
            ("expert", sweep.expert),
            ("overrater", sweep.overrater),
            ("underrater", sweep.underrater),
            ("directionless", sweep.directionless),
        ] {
            if !(p.sigma >= 0.0) {
                return Err(Error::validation(
                    format!("experiment.expert_sweep.{name}.sigma"),
                    format!("must be non-negative, got {}", p.sigma),
                ));
            }
        }
        Ok(())
    }

    /// Replace every root seed: scalar seeds become `seed`, seed lists keep
    /// their length and become `seed, seed + 1, ...`.
    pub fn override_seed(&mut self, seed: u64) {
        let list = |v: &mut Vec<u64>| {
            let n = v.len().max(1) as u64;
            *v = (0..n).map(|i| seed.wrapping_add(i)).collect();
        };
        self.ground_truth.seed = seed;
        if let Some(f) = &mut self.flip {
            f.seed = seed;
        }
        self.bootstrap.seed = seed;
        list(&mut self.experiment.fig3.seeds);
        list(&mut self.experiment.consensus.seeds);
        list(&mut self.experiment.ira_collapse.seeds);
        let sweep = &mut self.experiment.expert_sweep;
        let mut seeds = sweep
            .seeds
            .clone()
            .unwrap_or_else(|| DatasetGroupSpec::standard(GroupId::D1).seeds);
        list(&mut seeds);
        sweep.seeds = Some(seeds);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = Config::default();
        let text = cfg.to_toml_string();
        assert_eq!(Config::from_toml_str(&text).unwrap(), cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn field_path_for_bad_sigma() {
        let text = r#"
[ground_truth]
imbalance = 50.0
length_n = 100

[[profiles]]
category_id = "expert"
shift_bound = 0.0
sigma = 0.05
count = 3

[[profiles]]
category_id = "over"
shift_bound = 0.3
sigma = -0.1
count = 2
"#;
        let cfg = Config::from_toml_str(text).unwrap();
        match cfg.validate().unwrap_err() {
            Error::Validation { path, .. } => assert_eq!(path, "profiles[1].sigma"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_line() {
        let err = Config::from_toml_str("[ground_truth]\nlenght_n = 5\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn prevalence_and_imbalance_conflict() {
        let mut cfg = Config::default();
        cfg.ground_truth.prevalence_p = Some(0.5);
        assert!(cfg.validate().is_err());
        cfg.ground_truth.imbalance = None;
        assert_eq!(cfg.ground_truth.resolve().unwrap().prevalence_p, 0.5);
    }

    #[test]
    fn seed_override_keeps_counts() {
        let mut cfg = Config::default();
        cfg.override_seed(40);
        assert_eq!(cfg.experiment.fig3.seeds, vec![40, 41, 42]);
        assert_eq!(cfg.experiment.expert_sweep.seeds, Some(vec![40, 41, 42]));
        assert_eq!(cfg.bootstrap.seed, 40);
    }
}
