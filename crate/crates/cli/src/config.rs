//! JSON configuration accepted through `--config`.

use serde::{Deserialize, Serialize};

use affine_dpm::density::{Axis, Grid};
use affine_dpm::experiment::{AnalyzeConfig, Prop1Config, ReplicateConfig, Scale, Study};
use affine_dpm::model::{presets, AffineMap, AlphaSpec, BaseMeasure, Dataset, HyperPriorSpec};
use affine_dpm::sampler::{BaseSource, ChainConfig};
use affine_dpm::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmpiricalBayesSpec {
    pub gamma1: f64,
    pub gamma2: f64,
    pub nu0: f64,
}

/// Explicit axes, or a box around the data (`margin` times the range on each side).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    pub axes: Option<Vec<Axis>>,
    pub margin: f64,
    pub steps: usize,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            axes: None,
            margin: 0.25,
            steps: 200,
        }
    }
}

impl GridSettings {
    pub fn resolve(&self, data: Option<&Dataset>) -> Result<Grid> {
        match (&self.axes, data) {
            (Some(axes), _) => Grid::new(axes.clone()),
            (None, Some(d)) => Grid::around(d, self.margin, self.steps),
            (None, None) => Err(Error::InvalidParameter(
                "grid needs explicit axes in the config or a --data file".into(),
            )),
        }
    }
}

/// Every setting a command may read. Sections a command does not use are ignored.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub base: Option<BaseMeasure>,
    pub empirical_bayes: Option<EmpiricalBayesSpec>,
    pub hyperprior: Option<HyperPriorSpec>,
    pub alpha: Option<AlphaSpec>,
    pub sampler: Option<ChainConfig>,
    pub grid: GridSettings,
    /// One map per draws file given to `compare`; identity when absent.
    pub maps: Option<Vec<AffineMap>>,
    pub level: Option<f64>,
    /// Overrides on top of the study and scale defaults.
    pub experiment: Option<serde_json::Value>,
    pub prop1: Option<Prop1Config>,
    pub analyze: Option<AnalyzeConfig>,
}

/// The prior actually used by `fit`, after defaults are filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSettings {
    pub base: BaseSource,
    pub hyperprior: Option<HyperPriorSpec>,
    pub alpha: AlphaSpec,
    pub sampler: ChainConfig,
}

impl Config {
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("config {}: {e}", path.display())))
    }

    /// Explicit settings win; otherwise the bivariate or univariate study prior
    /// is used for `d = 2` or `d = 1`.
    pub fn fit_settings(&self, d: usize, seed: u64) -> Result<FitSettings> {
        if self.base.is_some() && self.empirical_bayes.is_some() {
            return Err(Error::InvalidParameter(
                "give either base or empirical_bayes, not both".into(),
            ));
        }
        let preset = match d {
            1 => Some(presets::student_t_study()),
            2 => Some(presets::mixture_study()),
            _ => None,
        };
        let base = match (&self.base, &self.empirical_bayes, &preset) {
            (Some(b), _, _) => BaseSource::Fixed(b.clone()),
            (None, Some(eb), _) => BaseSource::EmpiricalBayes {
                gamma1: eb.gamma1,
                gamma2: eb.gamma2,
                nu0: eb.nu0,
            },
            (None, None, Some(p)) => BaseSource::Fixed(p.0.clone()),
            (None, None, None) => {
                return Err(Error::InvalidParameter(format!(
                    "no default prior for d = {d}; set base or empirical_bayes in the config"
                )))
            }
        };
        let explicit_prior = self.base.is_some() || self.empirical_bayes.is_some();
        let hyperprior = match (&self.hyperprior, &preset) {
            (Some(h), _) => Some(h.clone()),
            (None, Some(p)) if !explicit_prior => Some(p.1.clone()),
            _ => None,
        };
        let alpha = self
            .alpha
            .or(preset.as_ref().map(|p| p.2))
            .unwrap_or(AlphaSpec::Fixed { value: 1.0 });
        let sampler = ChainConfig {
            seed,
            ..self.sampler.unwrap_or_default()
        };
        sampler.validate()?;
        alpha.validate()?;
        Ok(FitSettings {
            base,
            hyperprior,
            alpha,
            sampler,
        })
    }
}

impl Config {
    pub fn replicate_config(&self, study: Study, scale: Scale) -> Result<ReplicateConfig> {
        let mut base = serde_json::to_value(ReplicateConfig::new(study, scale))?;
        if let Some(over) = &self.experiment {
            let (Some(b), Some(o)) = (base.as_object_mut(), over.as_object()) else {
                return Err(Error::InvalidParameter(
                    "experiment settings must be a JSON object".into(),
                ));
            };
            for (k, v) in o {
                if !b.contains_key(k) {
                    return Err(Error::InvalidParameter(format!("unknown experiment setting '{k}'")));
                }
                b.insert(k.clone(), v.clone());
            }
        }
        let cfg: ReplicateConfig = serde_json::from_value(base)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_study_prior() {
        let cfg = Config::default();
        let s = cfg.fit_settings(2, 9).unwrap();
        assert_eq!(s.sampler.seed, 9);
        assert_eq!(s.sampler.n_iter, 5000);
        assert_eq!(s.sampler.burn_in, 2500);
        assert!(s.hyperprior.is_some());
        assert!(cfg.fit_settings(3, 0).is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<Config>(r#"{"sampler": {"n_iter": 10}, "bogus": 1}"#).is_err());
        let c: Config = serde_json::from_str(r#"{"alpha": {"mode": "fixed", "value": 2.0}}"#).unwrap();
        assert_eq!(c.alpha, Some(AlphaSpec::Fixed { value: 2.0 }));
    }

    #[test]
    fn experiment_overrides_keep_study_defaults() {
        let c: Config = serde_json::from_str(r#"{"experiment": {"replicates": 2}}"#).unwrap();
        let r = c.replicate_config(Study::Fig4, Scale::Desk).unwrap();
        assert_eq!(r.replicates, 2);
        assert_eq!(r.grid_steps, 1000);
        let bad: Config = serde_json::from_str(r#"{"experiment": {"replicate": 2}}"#).unwrap();
        assert!(bad.replicate_config(Study::Fig4, Scale::Desk).is_err());
    }

    #[test]
    fn full_example_parses() {
        let text = r#"{
  "base": {"m0": [0, 0], "B0": [[1, 0], [0, 1]], "nu0": 6, "S0": [[1, 0], [0, 1]]},
  "empirical_bayes": {"gamma1": 0.5, "gamma2": 2.0, "nu0": 6.0},
  "hyperprior": {"b0_df": 4, "b0_scale": [[15, 0], [0, 15]], "m0_mean": [0, 0], "kappa0": 1},
  "alpha": {"mode": "gamma", "shape": 2.0, "rate": 4.0},
  "sampler": {"n_iter": 5000, "burn_in": 2500, "thin": 1, "aux_m": 3, "seed": 0, "record_params": true},
  "grid": {"margin": 0.25, "steps": 200},
  "maps": [{"C": [[1, 0], [0, 1]], "b": [0, 0]}, {"C": [[5, 1], [0, 5]], "b": [1, -2]}],
  "level": 0.95,
  "experiment": {"replicates": 4, "sizes": [100, 300]},
  "prop1": {"n": 50, "maps": 5, "seeds": 3, "n_iter": 500},
  "analyze": {"nu0": 26, "expected_sigma": 1.0, "level": 0.95}
}"#;
        let c: Config = serde_json::from_str(text).unwrap();
        assert_eq!(c.maps.as_ref().map(Vec::len), Some(2));
        assert!(c.replicate_config(Study::Fig2, Scale::Desk).is_ok());
    }
}
