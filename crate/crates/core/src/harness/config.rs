//! Experiment descriptions and presets.
//!
//! A config file is a JSON object. It may name a `preset`; its remaining
//! keys override the preset field by field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::denoise::{prediction_subsample_size, SubsampleSource};
use crate::error::{Error, Result};
use crate::harness::ingest::RealDataset;
use crate::kselect::KRule;
use crate::partition::{check_gamma, subsample_count};
use crate::synthgen::GaussianClassModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Sim1,
    Sim2,
    #[serde(alias = "sim3")]
    DenoiseBench,
    Real,
}

impl ExperimentKind {
    pub fn default_preset(self) -> &'static str {
        match self {
            ExperimentKind::Sim1 => "sim1",
            ExperimentKind::Sim2 => "sim2",
            ExperimentKind::DenoiseBench => "sim3",
            ExperimentKind::Real => "real",
        }
    }
}

/// Generating distribution for synthetic experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Preset { preset: String, dim: usize },
    Explicit(GaussianClassModel),
}

impl ModelSpec {
    pub fn build(&self) -> Result<GaussianClassModel> {
        let model = match self {
            ModelSpec::Preset { preset, dim } => GaussianClassModel::preset(preset, *dim)?,
            ModelSpec::Explicit(m) => m.clone(),
        };
        model.validate()?;
        Ok(model)
    }
}

/// Test-set size rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSize {
    /// A fixed number of freshly generated points.
    Fixed(usize),
    /// `min(cap, N / divisor)` points held out of a real dataset.
    Holdout { cap: usize, divisor: usize },
}

impl TestSize {
    pub fn for_total(&self, n_total: usize) -> usize {
        match *self {
            TestSize::Fixed(n) => n,
            TestSize::Holdout { cap, divisor } => cap.min(n_total / divisor.max(1)),
        }
    }
}

/// Holdout rule for real data: `min(1000, N / 5)`.
pub fn real_test_size(n_total: usize) -> usize {
    TestSize::Holdout {
        cap: 1000,
        divisor: 5,
    }
    .for_total(n_total)
}

fn default_beta() -> f64 {
    1.0
}

fn default_k_o() -> f64 {
    1.0
}

fn default_k_o_star() -> f64 {
    1.351284
}

fn default_k_exponent() -> f64 {
    0.7
}

fn default_true() -> bool {
    true
}

fn default_folds() -> usize {
    5
}

fn default_bayes_mc() -> usize {
    1_000_000
}

/// Full description of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub dataset: Option<RealDataset>,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    pub gamma_grid: Vec<f64>,
    #[serde(default)]
    pub theta_grid: Vec<f64>,
    #[serde(default)]
    pub repeats_grid: Vec<usize>,
    /// Fixed local k (Simulation-2 style runs).
    #[serde(default)]
    pub k: Option<usize>,
    /// Candidate k values for cross-validation (real data).
    #[serde(default)]
    pub k_grid: Vec<usize>,
    #[serde(default = "default_folds")]
    pub cv_folds: usize,
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Margin exponent, used only to report target slopes.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_k_o")]
    pub k_o: f64,
    #[serde(default = "default_k_o_star")]
    pub k_o_star: f64,
    #[serde(default = "default_k_exponent")]
    pub k_exponent: f64,
    pub replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    pub test_size: TestSize,
    #[serde(default = "default_true")]
    pub cis: bool,
    #[serde(default = "default_true")]
    pub warmup: bool,
    #[serde(default = "default_bayes_mc")]
    pub bayes_mc_samples: usize,
    #[serde(default)]
    pub subsample_source: SubsampleSource,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn thousands(multipliers: &[usize]) -> Vec<usize> {
    multipliers.iter().map(|m| m * 1000).collect()
}

fn tenths(upto: usize) -> Vec<f64> {
    (0..=upto).map(|i| i as f64 / 10.0).collect()
}

impl ExperimentSpec {
    /// Named presets: the published grids ("sim1", "sim2", "sim3", "real")
    /// and reduced desk-scale grids ("sim1-desk", "sim2-desk", "sim3-desk").
    pub fn preset(name: &str) -> Result<Self> {
        let base = ExperimentSpec {
            kind: ExperimentKind::Sim1,
            model: Some(ModelSpec::Preset {
                preset: "sim1".into(),
                dim: 5,
            }),
            dataset: None,
            n_grid: thousands(&[1, 2, 3, 4, 8, 9, 16, 27, 32]),
            gamma_grid: tenths(9),
            theta_grid: Vec::new(),
            repeats_grid: Vec::new(),
            k: None,
            k_grid: Vec::new(),
            cv_folds: default_folds(),
            alpha: Some(0.2),
            beta: 1.0,
            k_o: 1.0,
            k_o_star: default_k_o_star(),
            k_exponent: default_k_exponent(),
            replications: 1000,
            master_seed: 0,
            test_size: TestSize::Fixed(1000),
            cis: true,
            warmup: true,
            bayes_mc_samples: default_bayes_mc(),
            subsample_source: SubsampleSource::Fresh,
            output: None,
        };
        let spec = match name {
            "sim1" => base,
            "sim1-desk" => ExperimentSpec {
                n_grid: thousands(&[1, 2, 4, 8, 16]),
                gamma_grid: vec![0.0, 0.2, 0.4],
                replications: 100,
                ..base
            },
            "sim2" => ExperimentSpec {
                kind: ExperimentKind::Sim2,
                n_grid: thousands(&[1, 2, 4, 8, 10, 12, 16, 20, 32]),
                gamma_grid: tenths(7),
                k: Some(5),
                alpha: None,
                ..base
            },
            "sim2-desk" => ExperimentSpec {
                kind: ExperimentKind::Sim2,
                n_grid: thousands(&[1, 4, 16]),
                gamma_grid: tenths(5),
                k: Some(5),
                alpha: None,
                replications: 100,
                ..base
            },
            "sim3" => ExperimentSpec {
                kind: ExperimentKind::DenoiseBench,
                model: Some(ModelSpec::Preset {
                    preset: "sim3".into(),
                    dim: 8,
                }),
                n_grid: vec![27000],
                gamma_grid: vec![0.2, 0.3],
                theta_grid: (1..=7).map(|i| i as f64 / 10.0).collect(),
                repeats_grid: vec![5, 9, 13, 17, 21],
                alpha: None,
                replications: 300,
                cis: false,
                ..base
            },
            "sim3-desk" => ExperimentSpec {
                kind: ExperimentKind::DenoiseBench,
                model: Some(ModelSpec::Preset {
                    preset: "sim3".into(),
                    dim: 8,
                }),
                n_grid: vec![8000],
                gamma_grid: vec![0.2],
                theta_grid: vec![0.2, 0.4, 0.6],
                repeats_grid: vec![9],
                alpha: None,
                replications: 100,
                cis: false,
                ..base
            },
            "real" => ExperimentSpec {
                kind: ExperimentKind::Real,
                model: None,
                n_grid: Vec::new(),
                gamma_grid: vec![0.1, 0.2, 0.3],
                alpha: None,
                k_grid: (1..=99).step_by(2).collect(),
                replications: 500,
                test_size: TestSize::Holdout {
                    cap: 1000,
                    divisor: 5,
                },
                ..base
            },
            other => return Err(Error::config(format!("unknown preset {other:?}"))),
        };
        Ok(spec)
    }

    /// Resolves a config document: `preset` (or `default_preset`) overridden by the other keys.
    pub fn from_json_value(value: Value, default_preset: &str) -> Result<Self> {
        let Value::Object(mut overrides) = value else {
            return Err(Error::config("config must be a JSON object"));
        };
        let preset = match overrides.remove("preset") {
            Some(Value::String(s)) => s,
            Some(_) => return Err(Error::config("\"preset\" must be a string")),
            None => default_preset.to_string(),
        };
        let base = serde_json::to_value(Self::preset(&preset)?)
            .map_err(|e| Error::config(e.to_string()))?;
        let Value::Object(mut merged) = base else {
            unreachable!("spec serializes to an object")
        };
        for (key, v) in overrides {
            merged.insert(key, v);
        }
        serde_json::from_value(Value::Object(merged)).map_err(|e| Error::config(e.to_string()))
    }

    pub fn from_file(path: &Path, default_preset: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_json_value(value, default_preset)
    }

    pub fn class_model(&self) -> Result<GaussianClassModel> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::config("experiment needs a generating model"))?
            .build()
    }

    /// Local-k rule of a synthetic experiment.
    pub fn k_rule(&self) -> Result<KRule> {
        match self.kind {
            ExperimentKind::Sim1 => Ok(KRule::Theorem {
                alpha: self
                    .alpha
                    .ok_or_else(|| Error::config("sim1 needs alpha"))?,
                k_o: self.k_o,
            }),
            ExperimentKind::Sim2 => Ok(KRule::Fixed {
                k: self.k.ok_or_else(|| Error::config("sim2 needs a fixed k"))?,
            }),
            ExperimentKind::DenoiseBench => Ok(KRule::GlobalShare {
                k_exponent: self.k_exponent,
                k_o_star: self.k_o_star,
            }),
            ExperimentKind::Real => Err(Error::config("real-data k is tuned, not ruled")),
        }
    }

    /// Checks every grid cell before anything runs.
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::config("replications must be at least 1"));
        }
        if self.gamma_grid.is_empty() {
            return Err(Error::config("gamma grid is empty"));
        }
        for &g in &self.gamma_grid {
            check_gamma(g).map_err(|e| Error::config(e.to_string()))?;
        }
        if !(self.k_o > 0.0) || !(self.k_o_star > 0.0) {
            return Err(Error::config("k_o and k_o_star must be positive"));
        }
        if let TestSize::Fixed(0) = self.test_size {
            return Err(Error::config("test size must be at least 1"));
        }

        if self.kind == ExperimentKind::Real {
            if self.dataset.is_none() {
                return Err(Error::config("real-data experiment needs a dataset"));
            }
            if self.k_grid.is_empty() || self.k_grid.contains(&0) {
                return Err(Error::config("k grid must be nonempty and positive"));
            }
            if self.cv_folds < 2 {
                return Err(Error::config("cross-validation needs at least 2 folds"));
            }
            return Ok(());
        }

        self.class_model().map_err(|e| Error::config(e.to_string()))?;
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::config("N grid must be nonempty and positive"));
        }
        if self.kind == ExperimentKind::Sim2 {
            if let Some(alpha) = self.alpha {
                let limit = 2.0 * alpha / (2.0 * alpha + 1.0);
                if let Some(g) = self.gamma_grid.iter().find(|&&g| g >= limit) {
                    return Err(Error::config(format!(
                        "gamma={g} is not below 2a/(2a+1)={limit:.4} for alpha={alpha}"
                    )));
                }
            }
        }
        if self.kind == ExperimentKind::DenoiseBench {
            if self.theta_grid.is_empty() || self.repeats_grid.is_empty() {
                return Err(Error::config("denoise bench needs theta and I grids"));
            }
            if self.repeats_grid.contains(&0) {
                return Err(Error::config("I must be at least 1"));
            }
            for &t in &self.theta_grid {
                prediction_subsample_size(1, t).map_err(|e| Error::config(e.to_string()))?;
            }
        }
        let rule = self.k_rule()?;
        for &n in &self.n_grid {
            for &g in &self.gamma_grid {
                check_cell(n, g, rule)?;
            }
        }
        Ok(())
    }
}

/// Verifies that the local k of one (N, gamma) cell fits every subsample.
pub fn check_cell(n_total: usize, gamma: f64, rule: KRule) -> Result<usize> {
    let s = subsample_count(n_total, gamma).map_err(|e| Error::config(e.to_string()))?;
    let n_min = n_total / s;
    let k = rule
        .resolve(n_total, s, n_min)
        .map_err(|e| Error::config(e.to_string()))?;
    if k > n_min {
        return Err(Error::config(format!(
            "N={n_total}, gamma={gamma}: local k = {k} exceeds the smallest subsample ({n_min} points)"
        )));
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn presets_validate() {
        for name in ["sim1", "sim1-desk", "sim2", "sim2-desk", "sim3", "sim3-desk"] {
            ExperimentSpec::preset(name).unwrap().validate().unwrap();
        }
        // the real preset needs a dataset path
        assert!(matches!(ExperimentSpec::preset("real").unwrap().validate(), Err(Error::Config(_))));
        assert!(ExperimentSpec::preset("nope").is_err());
    }

    #[test]
    fn published_grids() {
        let s1 = ExperimentSpec::preset("sim1").unwrap();
        assert_eq!(s1.n_grid, vec![1000, 2000, 3000, 4000, 8000, 9000, 16000, 27000, 32000]);
        assert_eq!(s1.gamma_grid.len(), 10);
        assert_eq!(s1.gamma_grid[9], 0.9);
        let s3 = ExperimentSpec::preset("sim3").unwrap();
        assert_eq!(s3.k_o_star, 1.351284);
        assert_eq!(s3.repeats_grid, vec![5, 9, 13, 17, 21]);
    }

    #[test]
    fn overrides_apply_on_top_of_preset() {
        let spec = ExperimentSpec::from_json_value(
            json!({"preset": "sim1-desk", "replications": 3, "n_grid": [500, 1000]}),
            "sim1",
        )
        .unwrap();
        assert_eq!(spec.replications, 3);
        assert_eq!(spec.n_grid, vec![500, 1000]);
        assert_eq!(spec.gamma_grid, vec![0.0, 0.2, 0.4]);
        let err = ExperimentSpec::from_json_value(json!({"bogus": 1}), "sim1");
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn sim2_gamma_limit_when_alpha_given() {
        let mut spec = ExperimentSpec::preset("sim2-desk").unwrap();
        spec.validate().unwrap();
        spec.alpha = Some(0.2);
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        spec.gamma_grid = vec![0.0, 0.1, 0.2];
        spec.validate().unwrap();
    }

    #[test]
    fn infeasible_cell_is_reported() {
        let mut spec = ExperimentSpec::preset("sim2-desk").unwrap();
        spec.n_grid = vec![100];
        spec.gamma_grid = vec![0.5];
        spec.k = Some(20);
        match spec.validate() {
            Err(Error::Config(msg)) => assert!(msg.contains("exceeds"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn holdout_rule() {
        assert_eq!(real_test_size(17898), 1000);
        assert_eq!(real_test_size(476), 95);
    }
}
