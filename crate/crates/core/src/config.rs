//! JSON-facing configuration for noise, kernels, regions, densities and the
//! solver. Unknown keys are rejected everywhere.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::density::{make_density, CompactRegion, DensityKind, DensitySpec, HolderClass};
use crate::error::{check_dim, invalid, Result};
use crate::kernel::{BaseKernel, InversionMode, KernelOptions, KernelSpec, Tabulation};
use crate::lloyd::{InitStrategy, NegativeWeightPolicy, SolverConfig};
use crate::noise::{laplace_noise, zero_noise, AxisNoise, CfTable, NoiseModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKindName {
    Laplace,
    None,
    CustomTable,
}

/// Tabulated real characteristic function for one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CfTableConfig {
    pub t: Vec<f64>,
    pub cf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub kind: NoiseKindName,
    #[serde(default)]
    pub scale: Option<Vec<f64>>,
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    #[serde(default)]
    pub table: Option<Vec<CfTableConfig>>,
}

impl NoiseConfig {
    pub fn build(&self, dim: usize) -> Result<NoiseModel<f64>> {
        if let Some(beta) = &self.beta {
            check_dim(dim, beta.len())?;
        }
        match self.kind {
            NoiseKindName::Laplace => {
                let scale = self
                    .scale
                    .as_ref()
                    .ok_or_else(|| invalid("laplace noise needs a scale vector"))?;
                if let Some(beta) = &self.beta {
                    if beta.iter().any(|&b| b != 2.0) {
                        return Err(invalid("laplace noise has beta = 2 on every axis"));
                    }
                }
                laplace_noise(dim, scale)
            }
            NoiseKindName::None => {
                if let Some(beta) = &self.beta {
                    if beta.iter().any(|&b| b != 0.0) {
                        return Err(invalid("noise kind none has beta = 0"));
                    }
                }
                Ok(zero_noise(dim))
            }
            NoiseKindName::CustomTable => {
                let tables = self
                    .table
                    .as_ref()
                    .ok_or_else(|| invalid("custom-table noise needs a table per axis"))?;
                let beta = self
                    .beta
                    .as_ref()
                    .ok_or_else(|| invalid("custom-table noise needs a beta vector"))?;
                check_dim(dim, tables.len())?;
                let scale = self.scale.clone().unwrap_or_else(|| vec![1.0; dim]);
                check_dim(dim, scale.len())?;
                let axes = tables
                    .iter()
                    .zip(beta)
                    .zip(&scale)
                    .map(|((t, &b), &s)| {
                        Ok(AxisNoise::Table {
                            table: CfTable::new(t.t.clone(), t.cf.clone(), b)?,
                            scale: s,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                NoiseModel::from_axes(axes)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKindName {
    Sinc,
    ValleePoussin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InversionName {
    #[default]
    Auto,
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulationConfig {
    pub range: Option<f64>,
    pub points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub kind: KernelKindName,
    #[serde(default)]
    pub band_limit: Option<Vec<f64>>,
    #[serde(default)]
    pub tabulation: Option<TabulationConfig>,
    #[serde(default)]
    pub inversion: InversionName,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            kind: KernelKindName::Sinc,
            band_limit: None,
            tabulation: None,
            inversion: InversionName::Auto,
        }
    }
}

impl KernelConfig {
    pub fn spec(&self, dim: usize) -> Result<KernelSpec<f64>> {
        let base = match self.kind {
            KernelKindName::Sinc => BaseKernel::Sinc,
            KernelKindName::ValleePoussin => BaseKernel::ValleePoussin,
        };
        let band = self.band_limit.clone().unwrap_or_else(|| vec![1.0; dim]);
        KernelSpec::new(vec![base; dim], band)
    }

    pub fn options(&self) -> KernelOptions {
        let mut tab = Tabulation::default();
        if let Some(t) = &self.tabulation {
            if let Some(r) = t.range {
                tab.range = r;
            }
            if let Some(p) = t.points {
                tab.points = p;
            }
        }
        KernelOptions {
            mode: match self.inversion {
                InversionName::Auto => InversionMode::Auto,
                InversionName::Numerical => InversionMode::Numerical,
            },
            tabulation: tab,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default)]
    pub resolution: Option<Vec<usize>>,
}

impl RegionConfig {
    pub fn build(&self) -> Result<CompactRegion<f64>> {
        match &self.resolution {
            Some(r) => CompactRegion::new(self.lower.clone(), self.upper.clone(), r.clone()),
            None => CompactRegion::with_default_resolution(self.lower.clone(), self.upper.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderConfig {
    pub s: Vec<f64>,
    #[serde(rename = "L", alias = "l")]
    pub l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default)]
    pub holder: Option<HolderConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureConfig {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub sds: Vec<Vec<f64>>,
    #[serde(default)]
    pub truncate: Option<BoxConfig>,
    #[serde(default)]
    pub holder: Option<HolderConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpsConfig {
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
    pub power: Vec<f64>,
    #[serde(default)]
    pub holder: Option<HolderConfig>,
}

/// Density selected by its `kind` key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", try_from = "Value")]
pub enum DensityConfig {
    Uniform(UniformConfig),
    GaussianMixture(MixtureConfig),
    Bumps(BumpsConfig),
}

// Dispatch by hand: serde's buffered tagged-enum path cannot carry
// arbitrary-precision numbers.
impl TryFrom<Value> for DensityConfig {
    type Error = serde_json::Error;

    fn try_from(mut v: Value) -> std::result::Result<Self, Self::Error> {
        use serde::de::Error as _;
        let obj = v
            .as_object_mut()
            .ok_or_else(|| serde_json::Error::custom("density must be an object"))?;
        let kind = match obj.remove("kind") {
            Some(Value::String(k)) => k,
            _ => return Err(serde_json::Error::custom("density needs a string `kind`")),
        };
        match kind.as_str() {
            "uniform" => Ok(DensityConfig::Uniform(serde_json::from_value(v)?)),
            "gaussian-mixture" => Ok(DensityConfig::GaussianMixture(serde_json::from_value(v)?)),
            "bumps" => Ok(DensityConfig::Bumps(serde_json::from_value(v)?)),
            other => Err(serde_json::Error::unknown_variant(
                other,
                &["uniform", "gaussian-mixture", "bumps"],
            )),
        }
    }
}

impl DensityConfig {
    pub fn build(&self) -> Result<DensitySpec<f64>> {
        let (kind, holder) = match self.clone() {
            DensityConfig::Uniform(c) => (
                DensityKind::Uniform {
                    lower: c.lower,
                    upper: c.upper,
                },
                c.holder,
            ),
            DensityConfig::GaussianMixture(c) => (
                DensityKind::GaussianMixture {
                    weights: c.weights,
                    means: c.means,
                    sds: c.sds,
                    truncate: c.truncate.map(|b| (b.lower, b.upper)),
                },
                c.holder,
            ),
            DensityConfig::Bumps(c) => (
                DensityKind::Bumps {
                    center: c.center,
                    half_width: c.half_width,
                    power: c.power,
                },
                c.holder,
            ),
        };
        let spec = make_density(kind)?;
        match holder {
            Some(h) => spec.with_holder(HolderClass { s: h.s, l: h.l }),
            None => Ok(spec),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyName {
    #[default]
    Signed,
    ClampToZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitName {
    #[default]
    MassSeeding,
    UniformRandom,
}

/// Solver knobs; every field defaults to the library default.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default)]
    pub restarts: Option<usize>,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub negative_weight_policy: PolicyName,
    #[serde(default)]
    pub init: InitName,
}

impl SolverSettings {
    pub fn build(&self, k: usize) -> Result<SolverConfig<f64>> {
        let mut c = SolverConfig::new(k, self.seed.unwrap_or(0));
        if let Some(r) = self.restarts {
            c.restarts = r;
        }
        if let Some(m) = self.max_iters {
            c.max_iters = m;
        }
        if let Some(t) = self.tol {
            c.tol = t;
        }
        c.policy = match self.negative_weight_policy {
            PolicyName::Signed => NegativeWeightPolicy::Signed,
            PolicyName::ClampToZero => NegativeWeightPolicy::ClampToZero,
        };
        c.init = match self.init {
            InitName::MassSeeding => InitStrategy::MassSeeding,
            InitName::UniformRandom => InitStrategy::UniformRandom,
        };
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_config_kinds() {
        let c: NoiseConfig = serde_json::from_str(r#"{"kind":"laplace","scale":[0.3]}"#).unwrap();
        assert_eq!(c.build(1).unwrap().beta(), vec![2.0]);
        assert!(c.build(2).is_err());
        let c: NoiseConfig = serde_json::from_str(r#"{"kind":"none"}"#).unwrap();
        assert!(c.build(2).unwrap().is_zero());
        let c: NoiseConfig = serde_json::from_str(
            r#"{"kind":"custom-table","beta":[1],"table":[{"t":[0,1,2],"cf":[1,0.5,0.25]}]}"#,
        )
        .unwrap();
        assert_eq!(c.build(1).unwrap().beta(), vec![1.0]);
        let bad: NoiseConfig =
            serde_json::from_str(r#"{"kind":"laplace","scale":[0.3],"beta":[1]}"#).unwrap();
        assert!(bad.build(1).is_err());
        assert!(
            serde_json::from_str::<NoiseConfig>(r#"{"kind":"laplace","scale":[1],"extra":1}"#)
                .is_err()
        );
        assert!(serde_json::from_str::<NoiseConfig>(r#"{"kind":"gaussian"}"#).is_err());
    }

    #[test]
    fn density_config_rejects_unknown_keys() {
        let ok = r#"{"kind":"uniform","lower":[-1],"upper":[1]}"#;
        assert!(serde_json::from_str::<DensityConfig>(ok)
            .unwrap()
            .build()
            .is_ok());
        let bad = r#"{"kind":"uniform","lower":[-1],"upper":[1],"mean":0}"#;
        assert!(serde_json::from_str::<DensityConfig>(bad).is_err());
        let mix = r#"{"kind":"gaussian-mixture","weights":[0.5,0.5],"means":[[-0.5],[0.5]],
                      "sds":[[0.1],[0.1]],"truncate":{"lower":[-1],"upper":[1]},
                      "holder":{"s":[2],"L":3}}"#;
        let spec = serde_json::from_str::<DensityConfig>(mix)
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(spec.holder().l, 3.0);
    }

    #[test]
    fn kernel_and_solver_defaults() {
        let k: KernelConfig =
            serde_json::from_str(r#"{"kind":"vallee-poussin","tabulation":{"points":500}}"#)
                .unwrap();
        assert_eq!(k.options().tabulation.points, 500);
        assert_eq!(k.options().tabulation.range, 50.0);
        assert_eq!(k.spec(2).unwrap().dim(), 2);
        let s: SolverSettings = serde_json::from_str(r#"{"restarts":3}"#).unwrap();
        let c = s.build(2).unwrap();
        assert_eq!((c.restarts, c.max_iters), (3, 200));
        assert!(serde_json::from_str::<SolverSettings>(r#"{"restart":3}"#).is_err());
    }
}
