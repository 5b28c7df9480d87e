//! JSON configs for each subcommand, plus command-line overrides.

use std::path::Path;

use anyhow::{bail, Context, Result};
use rpcmi::{BenchmarkConfig, ObjectiveKind, RelativeParams, SweepGrid};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// `sweep` config: the grid plus the benchmark every cell starts from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub grid: SweepGrid,
    pub base: BenchmarkConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub mi_levels: Vec<f64>,
    pub dim: usize,
    /// Correlations of the 1-d task whose χ² divergence is tabulated.
    pub chi2_rhos: Vec<f64>,
    pub params: RelativeParams,
    pub batch_n: usize,
    pub batch_m: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            mi_levels: vec![2.0, 4.0, 6.0, 8.0, 10.0],
            dim: 20,
            chi2_rhos: vec![0.3, 0.5, 0.8],
            params: RelativeParams::default(),
            batch_n: 64,
            batch_m: 64,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.batch_n == 0 || self.batch_m == 0 {
            bail!("dim and batch sizes must be positive");
        }
        for &mi in &self.mi_levels {
            if !(mi.is_finite() && mi >= 0.0) {
                bail!("MI levels must be finite and >= 0, got {mi}");
            }
        }
        for &rho in &self.chi2_rhos {
            if rho.is_nan() || rho.abs() >= 1.0 {
                bail!("chi2 correlations must lie in (-1, 1), got {rho}");
            }
        }
        self.params.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatioCurveConfig {
    pub betas: Vec<f64>,
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl Default for RatioCurveConfig {
    fn default() -> Self {
        Self {
            betas: vec![0.0, 0.5, 0.95],
            x_min: -10.0,
            x_max: 2.0,
            points: 1201,
        }
    }
}

impl RatioCurveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() {
            bail!("betas must not be empty");
        }
        for &b in &self.betas {
            if !(0.0..1.0).contains(&b) {
                bail!("beta must lie in [0, 1), got {b}");
            }
        }
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_min < self.x_max) {
            bail!("need finite x_min < x_max");
        }
        if self.points < 2 {
            bail!("points must be at least 2");
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let step = (self.x_max - self.x_min) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.x_min + step * i as f64).collect()
    }
}

/// Reads a JSON config, or the type's default when no path is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Flags shared by `bench` and `sweep` that patch the loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub objective: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut BenchmarkConfig) -> Result<()> {
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(name) = &self.objective {
            cfg.objective = ObjectiveKind::parse(name)?;
        }
        let p = &mut cfg.params;
        p.alpha = self.alpha.unwrap_or(p.alpha);
        p.beta = self.beta.unwrap_or(p.beta);
        p.gamma = self.gamma.unwrap_or(p.gamma);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(v: &T) {
        let text = serde_json::to_string_pretty(v).unwrap();
        let back: T = serde_json::from_str(&text).unwrap();
        assert_eq!(&back, v);
        assert_eq!(serde_json::to_string_pretty(&back).unwrap(), text);
    }

    #[test]
    fn configs_round_trip() {
        round_trip(&BenchmarkConfig::default());
        round_trip(&SweepConfig::default());
        round_trip(&OracleConfig::default());
        round_trip(&RatioCurveConfig::default());
        let mut odd = BenchmarkConfig {
            objective: ObjectiveKind::Smile { clip: 2.5 },
            ..Default::default()
        };
        odd.params.beta = 0.1 + 0.2;
        round_trip(&odd);
    }

    #[test]
    fn missing_fields_take_defaults() {
        let cfg: BenchmarkConfig = serde_json::from_str(r#"{"master_seed": 7}"#).unwrap();
        assert_eq!(cfg.master_seed, 7);
        assert_eq!(cfg.total_steps, 20_000);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<BenchmarkConfig>(r#"{"stepz": 1}"#).is_err());
        assert!(serde_json::from_str::<SweepConfig>(r#"{"grid": {"alpha_set": [1]}}"#).is_err());
    }

    #[test]
    fn overrides_patch_only_given_fields() {
        let mut cfg = BenchmarkConfig::default();
        Overrides {
            seed: Some(3),
            objective: Some("nwj".into()),
            beta: Some(0.5),
            ..Default::default()
        }
        .apply(&mut cfg)
        .unwrap();
        assert_eq!(cfg.master_seed, 3);
        assert_eq!(cfg.objective, ObjectiveKind::Nwj);
        assert_eq!((cfg.params.alpha, cfg.params.beta, cfg.params.gamma), (1.0, 0.5, 1.0));
        assert!(Overrides {
            objective: Some("mine".into()),
            ..Default::default()
        }
        .apply(&mut cfg)
        .is_err());
    }

    fn shipped(name: &str) -> std::path::PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
    }

    #[test]
    fn shipped_configs_load_and_validate() {
        let bench: BenchmarkConfig = load(Some(&shipped("rpc_default.json"))).unwrap();
        assert_eq!(bench, BenchmarkConfig::default());
        for name in ["smile_cubic.json", "quick_rpc.json"] {
            load::<BenchmarkConfig>(Some(&shipped(name))).unwrap().validate().unwrap();
        }
        let sweep: SweepConfig = load(Some(&shipped("sweep_default.json"))).unwrap();
        sweep.base.validate().unwrap();
        sweep.grid.validate().unwrap();
        load::<OracleConfig>(Some(&shipped("oracle.json"))).unwrap().validate().unwrap();
        load::<RatioCurveConfig>(Some(&shipped("ratio_curve.json"))).unwrap().validate().unwrap();
    }
}
