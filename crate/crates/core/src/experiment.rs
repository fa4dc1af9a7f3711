//! Rate-probing harness: replicated noisy k-means runs over a grid of sample
//! sizes, excess-risk bookkeeping against an oracle codebook, and a log-log
//! fit of the observed decay.

use std::io::{Read, Write};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{DensityConfig, KernelConfig, NoiseConfig, RegionConfig, SolverSettings};
use crate::density::{CompactRegion, DensitySpec};
use crate::error::{check_dim, invalid, Error, Result};
use crate::kernel::DeconvKernel;
use crate::lloyd::{noisy_kmeans, oracle_codebook, SolveReport, SolverConfig, WeightedPoints};
use crate::noise::NoiseModel;
use crate::rates::{bandwidth_kmeans, theoretical_rate_kmeans, RateParams};
use crate::report::{fmt_f64, json_f64, SCHEMA_VERSION};
use crate::risk::{true_risk, Codebook};
use crate::seed::derive_seed;

/// Mean excess risks below this are floored before taking logs.
pub const QUADRATURE_FLOOR: f64 = 1e-12;

/// Oracle drift must stay below this fraction of the smallest mean excess risk.
pub const ORACLE_DRIFT_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    NoisyKmeans,
    NaiveKmeansOnZ,
    KmeansOnXOracle,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::NoisyKmeans => "noisy-kmeans",
            Method::NaiveKmeansOnZ => "naive-kmeans-on-z",
            Method::KmeansOnXOracle => "kmeans-on-x-oracle",
        }
    }
}

fn default_oracle_budget() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub density: DensityConfig,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    /// Defaults to the density's support hint.
    #[serde(default)]
    pub region: Option<RegionConfig>,
    pub k: usize,
    pub rate_params: RateParams<f64>,
    pub n_grid: Vec<u64>,
    pub replicates: usize,
    #[serde(default)]
    pub solver: SolverSettings,
    pub master_seed: u64,
    #[serde(default)]
    pub baselines: Vec<Method>,
    #[serde(default = "default_oracle_budget")]
    pub oracle_budget: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.len() < 3 {
            return Err(invalid("n_grid needs at least 3 sample sizes"));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) || self.n_grid[0] < 2 {
            return Err(invalid(
                "n_grid must be strictly increasing and start at 2 or more",
            ));
        }
        if self.replicates < 4 {
            return Err(invalid("replicates must be at least 4"));
        }
        if self.k == 0 {
            return Err(invalid("k must be positive"));
        }
        if self.baselines.contains(&Method::NoisyKmeans) {
            return Err(invalid("noisy-kmeans always runs and is not a baseline"));
        }
        if self.rate_params.rho != 0.0 {
            return Err(invalid("the k-means schedule requires rho = 0"));
        }
        self.rate_params.validate()
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut m = vec![Method::NoisyKmeans];
        for b in [Method::NaiveKmeansOnZ, Method::KmeansOnXOracle] {
            if self.baselines.contains(&b) {
                m.push(b);
            }
        }
        m
    }
}

impl ExperimentConfig {
    /// Reference experiment: a well-separated two-component truncated
    /// Gaussian mixture on the line, Laplace(0.3) noise, k = 2, and the
    /// k-means bandwidth schedule `0.3 n^(-1/8)`.
    pub fn default_probe() -> Self {
        serde_json::from_value(json!({
            "density": {
                "kind": "gaussian-mixture",
                "weights": [0.5, 0.5],
                "means": [[-0.6], [0.6]],
                "sds": [[0.15], [0.15]],
                "truncate": {"lower": [-1.2], "upper": [1.2]}
            },
            "noise": {"kind": "laplace", "scale": [0.3]},
            "kernel": {"kind": "sinc"},
            "region": {"lower": [-1.2], "upper": [1.2], "resolution": [241]},
            "k": 2,
            "rate_params": {"kappa": 1, "rho": 0, "beta": [2], "s": [2], "L": 1, "scale_constant": 0.3},
            "n_grid": [500, 1000, 2000, 4000],
            "replicates": 16,
            "master_seed": 20240601,
            "baselines": ["naive-kmeans-on-z", "kmeans-on-x-oracle"]
        }))
        .expect("reference config is well formed")
    }
}

/// Draws `X ~ f` and `Z = X + eps`. `X` and the noise use independent
/// streams, so the clean sample for a seed does not depend on the noise law.
pub fn generate_sample(
    density: &DensitySpec<f64>,
    noise: &NoiseModel<f64>,
    n: usize,
    seed: u64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_dim(density.dim(), noise.dim())?;
    let x = density.sample(n, derive_seed(seed, &[0]))?;
    let eps = noise.sample(n, derive_seed(seed, &[1]))?;
    let z = &x + &eps;
    Ok((x, z))
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: Method,
    pub status: CellStatus,
    pub excess_risk: f64,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct CellRecord {
    pub n: u64,
    pub replicate: usize,
    pub seed: u64,
    pub bandwidth: Vec<f64>,
    pub outcomes: Vec<MethodOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerN {
    pub n: u64,
    pub count: usize,
    pub mean: f64,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
    pub floored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    /// Decay exponent: minus the OLS slope of log mean risk on log n.
    pub exponent: f64,
    pub standard_error: f64,
    pub intercept: f64,
    pub per_n: Vec<PerN>,
}

#[derive(Debug, Clone)]
pub struct OracleCheck {
    pub risk: f64,
    pub drift: f64,
    pub floor: f64,
    pub passed: bool,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub cells: Vec<CellRecord>,
    pub fits: Vec<(Method, Result<RateFit>)>,
    pub theoretical_exponent: f64,
    pub oracle: Codebook<f64>,
    pub oracle_check: OracleCheck,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Ordinary least squares of `log mean(risk)` on `log n`. Means at or below
/// zero are floored at [`QUADRATURE_FLOOR`] and marked.
pub fn fit_rate(groups: &[(u64, Vec<f64>)]) -> Result<RateFit> {
    let groups: Vec<_> = groups.iter().filter(|(_, v)| !v.is_empty()).collect();
    if groups.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            found: groups.len(),
        });
    }
    let per_n: Vec<PerN> = groups
        .iter()
        .map(|(n, v)| {
            let mut s = v.clone();
            s.sort_by(f64::total_cmp);
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            PerN {
                n: *n,
                count: s.len(),
                mean: mean.max(QUADRATURE_FLOOR),
                q10: quantile(&s, 0.1),
                median: quantile(&s, 0.5),
                q90: quantile(&s, 0.9),
                floored: mean <= QUADRATURE_FLOOR,
            }
        })
        .collect();
    let xs: Vec<f64> = per_n.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = per_n.iter().map(|p| p.mean.ln()).collect();
    let m = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let se = (rss / (m - 2.0) / sxx).sqrt();
    Ok(RateFit {
        exponent: -slope,
        standard_error: se,
        intercept,
        per_n,
    })
}

/// A configured rate experiment with its oracle codebook computed.
#[derive(Debug)]
pub struct Experiment {
    config: ExperimentConfig,
    density: DensitySpec<f64>,
    noise: NoiseModel<f64>,
    region: CompactRegion<f64>,
    solver: SolverConfig<f64>,
    oracle: Codebook<f64>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let density = config.density.build()?;
        let dim = density.dim();
        check_dim(dim, config.rate_params.dim())?;
        let noise = config.noise.build(dim)?;
        let region = match &config.region {
            Some(r) => r.build()?,
            None => density.support().clone(),
        };
        check_dim(dim, region.dim())?;
        // fail early on an unusable kernel description
        config.kernel.spec(dim)?;
        let solver = config.solver.build(config.k)?;
        let oracle = oracle_codebook(&density, &region, config.k, config.oracle_budget)?;
        Ok(Experiment {
            config,
            density,
            noise,
            region,
            solver,
            oracle,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn density(&self) -> &DensitySpec<f64> {
        &self.density
    }

    pub fn noise(&self) -> &NoiseModel<f64> {
        &self.noise
    }

    pub fn region(&self) -> &CompactRegion<f64> {
        &self.region
    }

    pub fn oracle(&self) -> &Codebook<f64> {
        &self.oracle
    }

    pub fn cell_seed(&self, n: u64, replicate: usize) -> u64 {
        derive_seed(self.config.master_seed, &[n, replicate as u64])
    }

    pub fn bandwidth(&self, n: u64) -> Result<Vec<f64>> {
        bandwidth_kmeans(&self.config.rate_params, n)
    }

    pub fn kernel(&self, n: u64) -> Result<DeconvKernel<f64>> {
        let spec = self.config.kernel.spec(self.density.dim())?;
        DeconvKernel::build(
            &spec,
            &self.noise,
            &self.bandwidth(n)?,
            self.config.kernel.options(),
        )
    }

    fn excess(&self, c: &Codebook<f64>, oracle_risk: f64) -> (f64, Vec<String>) {
        let e = true_risk(c, &self.density, &self.region) - oracle_risk;
        let flags = if e < 0.0 {
            vec!["negative-excess".to_string()]
        } else {
            vec![]
        };
        (e, flags)
    }

    fn solver_for(&self, seed: u64) -> SolverConfig<f64> {
        let mut s = self.solver.clone();
        s.seed = derive_seed(seed, &[2]);
        s.bound = Some(self.region.sup_radius());
        s
    }

    fn outcome(
        &self,
        method: Method,
        solved: Result<SolveReport<f64>>,
        oracle_risk: f64,
    ) -> MethodOutcome {
        match solved {
            Ok(rep) => {
                let (excess_risk, mut flags) = self.excess(&rep.best, oracle_risk);
                if rep.flags.negative_weights {
                    flags.push("negative-weights".into());
                }
                if rep.flags.negative_mass_cells > 0 {
                    flags.push(format!(
                        "negative-mass-cells={}",
                        rep.flags.negative_mass_cells
                    ));
                }
                if rep.flags.empty_cells_repaired > 0 {
                    flags.push(format!(
                        "empty-cells-repaired={}",
                        rep.flags.empty_cells_repaired
                    ));
                }
                if rep.flags.nonmonotone_steps > 0 {
                    flags.push(format!("nonmonotone-steps={}", rep.flags.nonmonotone_steps));
                }
                MethodOutcome {
                    method,
                    status: CellStatus::Ok,
                    excess_risk,
                    flags,
                }
            }
            Err(e) => MethodOutcome {
                method,
                status: CellStatus::Failed(e.to_string()),
                excess_risk: f64::NAN,
                flags: vec![e.kind().to_string()],
            },
        }
    }

    /// One replicate at sample size `n` for every configured method. Solver
    /// failures are recorded in the returned record.
    pub fn run_cell(&self, n: u64, replicate: usize) -> Result<CellRecord> {
        let kernel = self.kernel(n)?;
        Ok(self.run_cell_with(&kernel, n, replicate, self.oracle_risk()))
    }

    pub fn oracle_risk(&self) -> f64 {
        true_risk(&self.oracle, &self.density, &self.region)
    }

    fn run_cell_with(
        &self,
        kernel: &DeconvKernel<f64>,
        n: u64,
        replicate: usize,
        oracle_risk: f64,
    ) -> CellRecord {
        let seed = self.cell_seed(n, replicate);
        let bandwidth = kernel.bandwidth().to_vec();
        let fail_all = |msg: String| CellRecord {
            n,
            replicate,
            seed,
            bandwidth: bandwidth.clone(),
            outcomes: self
                .config
                .methods()
                .into_iter()
                .map(|method| MethodOutcome {
                    method,
                    status: CellStatus::Failed(msg.clone()),
                    excess_risk: f64::NAN,
                    flags: vec![],
                })
                .collect(),
        };
        let (x, z) = match generate_sample(&self.density, &self.noise, n as usize, seed) {
            Ok(s) => s,
            Err(e) => return fail_all(e.to_string()),
        };
        let solver = self.solver_for(seed);
        let outcomes = self
            .config
            .methods()
            .into_iter()
            .map(|method| {
                let solved = match method {
                    Method::NoisyKmeans => noisy_kmeans(z.view(), kernel, &self.region, &solver),
                    Method::NaiveKmeansOnZ => {
                        WeightedPoints::from_sample(z.view()).and_then(|w| w.solve(&solver))
                    }
                    Method::KmeansOnXOracle => {
                        WeightedPoints::from_sample(x.view()).and_then(|w| w.solve(&solver))
                    }
                };
                self.outcome(method, solved, oracle_risk)
            })
            .collect();
        CellRecord {
            n,
            replicate,
            seed,
            bandwidth,
            outcomes,
        }
    }

    /// Runs every cell, fits the decay per method and checks oracle stability.
    /// An unstable oracle yields [`Error::OracleUnstable`].
    pub fn run(&self) -> Result<ExperimentOutcome> {
        let oracle_risk = self.oracle_risk();
        let kernels = self
            .config
            .n_grid
            .iter()
            .map(|&n| self.kernel(n))
            .collect::<Result<Vec<_>>>()?;
        let jobs: Vec<(usize, usize)> = (0..self.config.n_grid.len())
            .flat_map(|i| (0..self.config.replicates).map(move |r| (i, r)))
            .collect();
        let cells: Vec<CellRecord> = jobs
            .par_iter()
            .map(|&(i, r)| self.run_cell_with(&kernels[i], self.config.n_grid[i], r, oracle_risk))
            .collect();
        let fits: Vec<(Method, Result<RateFit>)> = self
            .config
            .methods()
            .into_iter()
            .map(|m| (m, fit_rate(&group_by_n(&cells, m))))
            .collect();
        let theoretical_exponent = theoretical_rate_kmeans(&self.config.rate_params)?.exponent;
        let oracle_check = self.check_oracle(oracle_risk, &fits);
        if !oracle_check.passed {
            return Err(Error::OracleUnstable {
                drift: oracle_check.drift,
                floor: oracle_check.floor,
            });
        }
        Ok(ExperimentOutcome {
            cells,
            fits,
            theoretical_exponent,
            oracle: self.oracle.clone(),
            oracle_check,
        })
    }

    fn check_oracle(&self, risk: f64, fits: &[(Method, Result<RateFit>)]) -> OracleCheck {
        let finer = self.region.refined(2);
        let drift = (true_risk(&self.oracle, &self.density, &finer) - risk).abs();
        let smallest = fits
            .iter()
            .find(|(m, _)| *m == Method::NoisyKmeans)
            .and_then(|(_, f)| f.as_ref().ok())
            .map(|f| f.per_n.iter().map(|p| p.mean).fold(f64::INFINITY, f64::min))
            .unwrap_or(f64::INFINITY);
        let floor = ORACLE_DRIFT_FRACTION * smallest;
        OracleCheck {
            risk,
            drift,
            floor,
            passed: drift < floor,
        }
    }
}

/// Successful excess risks of `method`, grouped by sample size in grid order.
pub fn group_by_n(cells: &[CellRecord], method: Method) -> Vec<(u64, Vec<f64>)> {
    let mut out: Vec<(u64, Vec<f64>)> = Vec::new();
    for c in cells {
        for o in c
            .outcomes
            .iter()
            .filter(|o| o.method == method && o.status == CellStatus::Ok)
        {
            match out.iter_mut().find(|(n, _)| *n == c.n) {
                Some((_, v)) => v.push(o.excess_risk),
                None => out.push((c.n, vec![o.excess_risk])),
            }
        }
    }
    out.sort_by_key(|(n, _)| *n);
    out
}

impl ExperimentOutcome {
    /// One row per (cell, method).
    pub fn write_cells_csv<W: Write>(&self, out: W) -> Result<()> {
        let dim = self.oracle.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = [
            "schema_version",
            "n",
            "replicate",
            "seed",
            "method",
            "status",
            "excess_risk",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((1..=dim).map(|j| format!("lambda_{j}")));
        header.push("flags".into());
        w.write_record(&header)?;
        for c in &self.cells {
            for o in &c.outcomes {
                let mut row = vec![
                    SCHEMA_VERSION.to_string(),
                    c.n.to_string(),
                    c.replicate.to_string(),
                    c.seed.to_string(),
                    o.method.as_str().to_string(),
                    match &o.status {
                        CellStatus::Ok => "ok".to_string(),
                        CellStatus::Failed(m) => format!("failed: {m}"),
                    },
                    fmt_f64(o.excess_risk),
                ];
                row.extend(c.bandwidth.iter().map(|&l| fmt_f64(l)));
                row.push(o.flags.join(";"));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn fit(&self, method: Method) -> Option<&RateFit> {
        self.fits
            .iter()
            .find(|(m, _)| *m == method)
            .and_then(|(_, f)| f.as_ref().ok())
    }

    pub fn failed_cells(&self) -> usize {
        self.cells
            .iter()
            .flat_map(|c| &c.outcomes)
            .filter(|o| o.status != CellStatus::Ok)
            .count()
    }

    pub fn rate_json(&self) -> Value {
        let methods: Vec<Value> = self
            .fits
            .iter()
            .map(|(m, f)| match f {
                Ok(f) => json!({
                    "method": m.as_str(),
                    "fitted_exponent": json_f64(f.exponent),
                    "standard_error": json_f64(f.standard_error),
                    "intercept": json_f64(f.intercept),
                    "per_n": f.per_n.iter().map(|p| json!({
                        "n": p.n,
                        "count": p.count,
                        "mean_excess_risk": json_f64(p.mean),
                        "q10": json_f64(p.q10),
                        "median": json_f64(p.median),
                        "q90": json_f64(p.q90),
                        "floored": p.floored,
                    })).collect::<Vec<_>>(),
                }),
                Err(e) => json!({"method": m.as_str(), "error": e.to_string()}),
            })
            .collect();
        json!({
            "schema_version": SCHEMA_VERSION,
            "theoretical_exponent": json_f64(self.theoretical_exponent),
            "sqrt_log_log_factor_ignored": true,
            "oracle": {
                "codebook": self.oracle.to_json(),
                "risk": json_f64(self.oracle_check.risk),
                "resolution_drift": json_f64(self.oracle_check.drift),
                "drift_floor": json_f64(self.oracle_check.floor),
            },
            "failed_cells": self.failed_cells(),
            "methods": methods,
        })
    }
}

/// Reads a sample with header `x1,...,xd`.
pub fn read_sample_csv<R: Read>(input: R) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers()?.clone();
    let dim = header.len();
    for (j, h) in header.iter().enumerate() {
        if h != format!("x{}", j + 1) {
            return Err(Error::MalformedSample {
                line: 1,
                message: format!("expected header column x{}, found '{h}'", j + 1),
            });
        }
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::MalformedSample {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != dim {
            return Err(Error::MalformedSample {
                line,
                message: format!("expected {dim} fields, found {}", rec.len()),
            });
        }
        for f in rec.iter() {
            let v: f64 = f.parse().map_err(|_| Error::MalformedSample {
                line,
                message: format!("not a number: '{f}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::MalformedSample {
                    line,
                    message: format!("non-finite value: '{f}'"),
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptySample);
    }
    Ok(Array2::from_shape_vec((rows, dim), data).expect("row-major sample"))
}

pub fn write_sample_csv<W: Write>(sample: &Array2<f64>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record((1..=sample.ncols()).map(|j| format!("x{j}")))?;
    for row in sample.rows() {
        w.write_record(row.iter().map(|&v| fmt_f64(v)))?;
    }
    w.flush()?;
    Ok(())
}
