//! Run configuration: defaults, file loading, flag overrides, validation.
//!
//! The config file is a single TOML document; any command-line flag
//! overrides the corresponding file value. Validation happens once, before
//! any simulation starts, and names the violated condition.

use serde::{Deserialize, Serialize};

use gmflou_core::flou::MixingParams;
use gmflou_core::gmflou::FarExtension;
use gmflou_core::{LevySpec, SampleGrid};

use crate::CliError;

/// Which process a `simulate` run produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    Flp,
    Flou,
    Aggregate,
    Z,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub n: u32,
    pub horizon_t: f64,
    #[serde(default)]
    pub trunc_steps: Option<u64>,
    #[serde(default)]
    pub warmup_m: Option<f64>,
    #[serde(default)]
    pub far: Option<FarExtension>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n: 128,
            horizon_t: 1.0,
            trunc_steps: None,
            warmup_m: None,
            far: None,
        }
    }
}

impl GridConfig {
    pub fn sample_grid(&self) -> Result<SampleGrid, CliError> {
        let mut g = SampleGrid::new(self.n, self.horizon_t)?;
        if let Some(steps) = self.trunc_steps {
            g = g.with_trunc(gmflou_core::Truncation::Steps { steps });
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub k_sigma: f64,
    pub allowance: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            k_sigma: gmflou_core::stats::DEFAULT_K_SIGMA,
            allowance: gmflou_core::stats::DEFAULT_ALLOWANCE,
        }
    }
}

fn default_levy() -> LevySpec {
    LevySpec::compensated_gamma(1.0, 2.0).expect("static parameters")
}

fn default_replicas() -> usize {
    2000
}

fn default_seed() -> u64 {
    1
}

fn default_out() -> String {
    "out".to_string()
}

fn default_d() -> f64 {
    0.2
}

fn default_h() -> f64 {
    0.12
}

fn default_alpha() -> Vec<f64> {
    vec![1.0]
}

fn default_m() -> usize {
    200
}

/// Fully resolved run configuration; serializable for exact replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub process: Option<ProcessKind>,
    #[serde(default = "default_d")]
    pub d: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    /// One value per parameterization; `simulate` emits one file per entry.
    #[serde(default = "default_alpha")]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub d_list: Option<Vec<f64>>,
    #[serde(default = "default_levy")]
    pub levy: LevySpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: String,
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub report: ReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

impl RunConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config parse error: {e}")))
    }

    pub fn mixing(&self, alpha: f64) -> Result<MixingParams, CliError> {
        Ok(MixingParams::new(self.h, alpha)?)
    }

    /// Validate every admissibility condition needed by `process`; invalid
    /// combinations name the violated condition.
    pub fn validate(&self, process: Option<ProcessKind>) -> Result<(), CliError> {
        if !(self.d > 0.0 && self.d < 0.5) {
            return Err(CliError::Usage(format!(
                "d must lie in (0, 1/2), got {}",
                self.d
            )));
        }
        if self.replicas == 0 {
            return Err(CliError::Usage("replicas must be >= 1".into()));
        }
        if let Some(alpha) = self.alpha.iter().find(|a| **a <= 0.0) {
            return Err(CliError::Usage(format!("alpha must be > 0, got {alpha}")));
        }
        match process {
            Some(ProcessKind::Z) | Some(ProcessKind::Y) => {
                if !(self.h > 0.0 && self.h + self.d < 0.5) {
                    return Err(CliError::Usage(format!(
                        "h + d must be < 1/2 for the limit and companion processes, got h={} d={}",
                        self.h, self.d
                    )));
                }
            }
            Some(ProcessKind::Flou) => {
                let lambda = self
                    .lambda
                    .ok_or_else(|| CliError::Usage("flou requires lambda".into()))?;
                if !(lambda < 0.0) {
                    return Err(CliError::Usage(format!(
                        "lambda must be < 0, got {lambda}"
                    )));
                }
            }
            Some(ProcessKind::Aggregate) => {
                if !(self.h > 0.0 && self.h < 1.0) {
                    return Err(CliError::Usage(format!(
                        "h must lie in (0, 1), got {}",
                        self.h
                    )));
                }
                if self.m == 0 {
                    return Err(CliError::Usage("m must be >= 1".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Canonical JSON of the resolved configuration.
    pub fn canonical_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_verification_battery() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.grid.n, 128);
        assert_eq!(cfg.replicas, 2000);
        assert_eq!(cfg.d, 0.2);
        assert_eq!(cfg.h, 0.12);
        assert_eq!(cfg.alpha, vec![1.0]);
        assert_eq!(cfg.levy.second_moment(), 0.25);
        cfg.validate(Some(ProcessKind::Z)).unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::default();
        let s = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&s).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn validation_names_condition() {
        let mut cfg = RunConfig::default();
        cfg.h = 0.4;
        let err = cfg.validate(Some(ProcessKind::Z)).unwrap_err();
        assert!(err.to_string().contains("h + d must be < 1/2"));
        let mut cfg = RunConfig::default();
        cfg.lambda = Some(0.5);
        assert!(cfg.validate(Some(ProcessKind::Flou)).is_err());
    }

    #[test]
    fn parses_levy_table() {
        let cfg: RunConfig = toml::from_str(
            r#"
            d = 0.25
            [levy]
            kind = "compensated_gamma"
            a = 5.0
            b = 15.0
            "#,
        )
        .unwrap();
        assert!((cfg.levy.second_moment() - 5.0 / 225.0).abs() < 1e-15);
    }
}
