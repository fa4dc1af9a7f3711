//! Per-command configuration files. Relative sample paths resolve against
//! the directory holding the config.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use deconv_quant::config::{
    DensityConfig, KernelConfig, NoiseConfig, RegionConfig, SolverSettings,
};
use deconv_quant::RateParams;

use crate::error::{CliError, Result};

fn t_min() -> f64 {
    -20.0
}

fn t_max() -> f64 {
    20.0
}

fn points() -> usize {
    401
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelCmdConfig {
    pub noise: NoiseConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    pub bandwidth: Vec<f64>,
    #[serde(default = "t_min")]
    pub t_min: f64,
    #[serde(default = "t_max")]
    pub t_max: f64,
    #[serde(default = "points")]
    pub points: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub density: DensityConfig,
    pub n: usize,
}

/// Exactly one of `path` or `generate`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSource {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub generate: Option<GenerateConfig>,
}

impl SampleSource {
    pub fn validate(&mut self, base: &Path) -> Result<()> {
        match (&mut self.path, &self.generate) {
            (Some(p), None) => {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
                if !p.is_file() {
                    return Err(CliError::io(
                        p.clone(),
                        std::io::Error::new(std::io::ErrorKind::NotFound, "sample file not found"),
                    ));
                }
                Ok(())
            }
            (None, Some(_)) => Ok(()),
            _ => Err(CliError::Invalid(
                "sample needs exactly one of `path` or `generate`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    #[default]
    Deconvolution,
    /// Ordinary KDE with the base kernel, ignoring the noise model.
    Direct,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KdeCmdConfig {
    pub noise: NoiseConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    pub bandwidth: Vec<f64>,
    pub region: RegionConfig,
    pub sample: SampleSource,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterCmdConfig {
    pub noise: NoiseConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    pub bandwidth: Vec<f64>,
    pub region: RegionConfig,
    pub sample: SampleSource,
    pub k: usize,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanCmdConfig {
    pub rate_params: RateParams<f64>,
    pub n_grid: Vec<u64>,
}

/// Parses a JSON config, reporting the line and column of the first problem.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text, path)
}

pub fn parse<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_carry_position() {
        let text = "{\n  \"rate_params\": {\"kappa\": 1, \"rho\": 0, \"beta\": [2], \"s\": [2], \"L\": 1},\n  \"n_grid\": [1],\n  \"bogus\": 3\n}";
        match parse::<PlanCmdConfig>(text, Path::new("plan.json")) {
            Err(CliError::Config { line, message, .. }) => {
                assert_eq!(line, 4);
                assert!(message.contains("bogus"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sample_source_needs_exactly_one() {
        let mut s: SampleSource = serde_json::from_str("{}").unwrap();
        assert!(s.validate(Path::new(".")).is_err());
        let mut s: SampleSource =
            serde_json::from_str(r#"{"path": "definitely-missing.csv"}"#).unwrap();
        assert!(matches!(
            s.validate(Path::new(".")),
            Err(CliError::Io { .. })
        ));
    }
}
