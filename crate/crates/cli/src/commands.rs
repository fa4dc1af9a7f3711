use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde_json::{json, Value};

use deconv_quant::experiment::{
    generate_sample, read_sample_csv, write_sample_csv, Experiment, ExperimentConfig,
};
use deconv_quant::rates::{
    bandwidth_exact, bandwidth_kmeans, bandwidth_nonexact, density_deconvolution_exponent,
    fast_rate_condition, tau_exact, tau_nonexact, theoretical_rate_kmeans,
};
use deconv_quant::report::{fmt_f64, json_f64, json_vec, to_json_string, SCHEMA_VERSION};
use deconv_quant::{deconv_kde, noisy_kmeans, CompactRegion, DeconvKernel, KernelSpec, NoiseModel};

use crate::configs::{
    ClusterCmdConfig, Estimator, KdeCmdConfig, KernelCmdConfig, PlanCmdConfig, SampleSource,
};
use crate::error::{CliError, Result};

/// Files written by a command, relative to the output directory.
pub type Outputs = Vec<PathBuf>;

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| CliError::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e))
}

fn linspace(a: f64, b: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![a];
    }
    let h = (b - a) / (points - 1) as f64;
    (0..points)
        .map(|i| if i + 1 == points { b } else { a + h * i as f64 })
        .collect()
}

pub fn kernel(cfg: &KernelCmdConfig, out: &Path) -> Result<Outputs> {
    let dim = cfg.bandwidth.len();
    if cfg.t_min.partial_cmp(&cfg.t_max) != Some(std::cmp::Ordering::Less) || cfg.points < 2 {
        return Err(CliError::Invalid(
            "need t_min < t_max and at least 2 points".into(),
        ));
    }
    let noise = cfg.noise.build(dim)?;
    let spec = cfg.kernel.spec(dim)?;
    let k = DeconvKernel::build(&spec, &noise, &cfg.bandwidth, cfg.kernel.options())?;
    let ts = linspace(cfg.t_min, cfg.t_max, cfg.points);
    let rows: Vec<Vec<f64>> = ts
        .par_iter()
        .map(|&t| (0..dim).map(|j| k.eval_axis(j, t)).collect())
        .collect();
    let path = out.join("kernel.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let mut header = vec!["schema_version".to_string(), "t".to_string()];
    header.extend((1..=dim).map(|j| format!("k{j}")));
    w.write_record(&header).map_err(|e| csv_err(&path, e))?;
    for (t, row) in ts.iter().zip(&rows) {
        let mut rec = vec![SCHEMA_VERSION.to_string(), fmt_f64(*t)];
        rec.extend(row.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(vec!["kernel.csv".into()])
}

/// Loads or simulates the noisy sample; a simulated one is also written out.
fn obtain_sample(
    src: &SampleSource,
    noise: &NoiseModel<f64>,
    seed: u64,
    out: &Path,
    outputs: &mut Outputs,
) -> Result<Array2<f64>> {
    if let Some(p) = &src.path {
        let f = File::open(p).map_err(|e| CliError::io(p, e))?;
        return Ok(read_sample_csv(f)?);
    }
    let g = src.generate.as_ref().expect("validated sample source");
    let density = g.density.build()?;
    if g.n == 0 {
        return Err(CliError::Invalid("generate.n must be positive".into()));
    }
    let (_, z) = generate_sample(&density, noise, g.n, seed)?;
    let path = out.join("sample.csv");
    write_sample_csv(&z, create(&path)?)?;
    outputs.push("sample.csv".into());
    Ok(z)
}

/// Ordinary product-kernel estimate `(1/n) sum_i prod_j K_j((Z_ij - x_j)/lam_j) / lam_j`,
/// summed observation by observation at each node.
pub fn direct_kde(
    sample: ArrayView2<'_, f64>,
    spec: &KernelSpec<f64>,
    bandwidth: &[f64],
    region: &CompactRegion<f64>,
) -> Vec<f64> {
    let nodes = region.nodes();
    let n = sample.nrows() as f64;
    (0..region.num_nodes())
        .into_par_iter()
        .map(|i| {
            let x = nodes.row(i);
            let mut acc = 0.0;
            for z in sample.rows() {
                let mut p = 1.0;
                for j in 0..bandwidth.len() {
                    p *= spec.time_value(j, (z[j] - x[j]) / bandwidth[j]) / bandwidth[j];
                }
                acc += p;
            }
            acc / n
        })
        .collect()
}

pub fn kde(cfg: &KdeCmdConfig, out: &Path) -> Result<Outputs> {
    let dim = cfg.bandwidth.len();
    let noise = cfg.noise.build(dim)?;
    let spec = cfg.kernel.spec(dim)?;
    let region = cfg.region.build()?;
    if region.dim() != dim {
        return Err(deconv_quant::Error::DimensionMismatch {
            expected: dim,
            found: region.dim(),
        }
        .into());
    }
    let mut outputs = Vec::new();
    let z = obtain_sample(&cfg.sample, &noise, cfg.seed, out, &mut outputs)?;
    let values = match cfg.estimator {
        Estimator::Deconvolution => {
            let k = DeconvKernel::build(&spec, &noise, &cfg.bandwidth, cfg.kernel.options())?;
            deconv_kde(z.view(), &k, &region)?.values().to_vec()
        }
        Estimator::Direct => {
            if z.ncols() != dim {
                return Err(deconv_quant::Error::DimensionMismatch {
                    expected: dim,
                    found: z.ncols(),
                }
                .into());
            }
            direct_kde(z.view(), &spec, &cfg.bandwidth, &region)
        }
    };
    let path = out.join("density.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let mut header = vec!["schema_version".to_string()];
    header.extend((1..=dim).map(|j| format!("x{j}")));
    header.push("value".into());
    w.write_record(&header).map_err(|e| csv_err(&path, e))?;
    let nodes = region.nodes();
    for (row, v) in nodes.rows().into_iter().zip(&values) {
        let mut rec = vec![SCHEMA_VERSION.to_string()];
        rec.extend(row.iter().map(|&x| fmt_f64(x)));
        rec.push(fmt_f64(*v));
        w.write_record(&rec).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    outputs.push("density.csv".into());
    Ok(outputs)
}

pub fn cluster(cfg: &ClusterCmdConfig, out: &Path) -> Result<Outputs> {
    let dim = cfg.bandwidth.len();
    let noise = cfg.noise.build(dim)?;
    let spec = cfg.kernel.spec(dim)?;
    let region = cfg.region.build()?;
    let mut solver = cfg.solver.build(cfg.k)?;
    if cfg.solver.seed.is_none() {
        solver.seed = cfg.seed;
    }
    let mut outputs = Vec::new();
    let z = obtain_sample(&cfg.sample, &noise, cfg.seed, out, &mut outputs)?;
    let k = DeconvKernel::build(&spec, &noise, &cfg.bandwidth, cfg.kernel.options())?;
    let report = noisy_kmeans(z.view(), &k, &region, &solver)?;
    let mut j = report.to_json();
    j["bandwidth"] = json_vec(cfg.bandwidth.iter().copied());
    j["sample_size"] = json!(z.nrows());
    write_text(&out.join("report.json"), &to_json_string(&j))?;
    outputs.push("report.json".into());
    Ok(outputs)
}

/// Runs the experiment and writes both artifacts even when some cells failed;
/// failures are reported afterwards.
pub fn rates(cfg: &ExperimentConfig, out: &Path) -> Result<Outputs> {
    let exp = Experiment::new(cfg.clone())?;
    log::info!(
        "running {} cells, oracle codebook {:?}",
        cfg.n_grid.len() * cfg.replicates,
        exp.oracle().to_rows()
    );
    let outcome = exp.run()?;
    outcome.write_cells_csv(create(&out.join("cells.csv"))?)?;
    write_text(
        &out.join("rate.json"),
        &to_json_string(&outcome.rate_json()),
    )?;
    let failed = outcome.failed_cells();
    if failed > 0 {
        return Err(CliError::CellsFailed {
            failed,
            total: outcome.cells.iter().map(|c| c.outcomes.len()).sum(),
        });
    }
    Ok(vec!["cells.csv".into(), "rate.json".into()])
}

fn opt(v: deconv_quant::Result<f64>) -> Value {
    v.map(json_f64).unwrap_or(Value::Null)
}

fn opt_vec(v: deconv_quant::Result<Vec<f64>>) -> Value {
    v.map(json_vec).unwrap_or(Value::Null)
}

pub fn plan(cfg: &PlanCmdConfig, out: &Path) -> Result<Outputs> {
    let p = &cfg.rate_params;
    p.validate()?;
    if cfg.n_grid.iter().any(|&n| n < 2) {
        return Err(CliError::Invalid(
            "n_grid entries must be at least 2".into(),
        ));
    }
    let kmeans = theoretical_rate_kmeans(p).ok();
    let grid: Vec<Value> = cfg
        .n_grid
        .iter()
        .map(|&n| {
            json!({
                "n": n,
                "bandwidth_exact": opt_vec(bandwidth_exact(p, n)),
                "bandwidth_nonexact": opt_vec(bandwidth_nonexact(p, n)),
                "bandwidth_kmeans": opt_vec(bandwidth_kmeans(p, n)),
            })
        })
        .collect();
    let j = json!({
        "schema_version": SCHEMA_VERSION,
        "tau_exact": opt(tau_exact(p)),
        "tau_nonexact": opt(tau_nonexact(p)),
        "fast_rate": fast_rate_condition(p)?,
        "kmeans_exponent": kmeans.as_ref().map(|k| json_f64(k.exponent)).unwrap_or(Value::Null),
        "sqrt_log_log_factor": kmeans.map(|k| k.sqrt_log_log_factor),
        "density_deconvolution_exponent": (0..p.dim())
            .map(|u| opt(density_deconvolution_exponent(p, u)))
            .collect::<Vec<_>>(),
        "grid": grid,
    });
    write_text(&out.join("plan.json"), &to_json_string(&j))?;
    Ok(vec!["plan.json".into()])
}
