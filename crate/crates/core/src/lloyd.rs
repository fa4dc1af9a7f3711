//! Weighted Lloyd iterations minimizing the deconvolution empirical risk.
//!
//! By exchanging the sum over observations with the quadrature over the
//! region, `(1/n) sum_i gamma_lambda(c, Z_i) = sum_nodes w_x f_hat(x) gamma(c, x)`,
//! so the objective is a k-means distortion of grid nodes carrying signed
//! weights `w_x f_hat(x)`.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::density::{deconv_kde, CompactRegion, DeconvolvedDensity, DensitySpec};
use crate::error::{check_dim, invalid, Error, Result};
use crate::kernel::DeconvKernel;
use crate::report::{json_f64, json_vec, SCHEMA_VERSION};
use crate::risk::{Codebook, TRUE_RISK_REFINEMENT};
use crate::scalar::Real;
use crate::seed::{derive_seed, rng_from_seed};

/// Cells with `|mass|` below this are treated as empty.
pub const EMPTY_CELL_MASS: f64 = 1e-12;

/// Treatment of negative node weights during assignment and recentering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NegativeWeightPolicy {
    /// Use the signed weights; minimizes the deconvolution risk as defined.
    #[default]
    Signed,
    /// Treat negative weights as zero when updating centers.
    ClampToZero,
}

impl NegativeWeightPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            NegativeWeightPolicy::Signed => "signed",
            NegativeWeightPolicy::ClampToZero => "clamp-to-zero",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitStrategy {
    /// k-means++ style seeding proportional to positive mass times squared distance.
    #[default]
    MassSeeding,
    /// Independent uniform draws in the bounding box of the points.
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop when the relative objective decrease falls below this.
    pub tol: T,
    pub seed: u64,
    pub policy: NegativeWeightPolicy,
    pub init: InitStrategy,
    /// Centers are clamped to `[-bound, bound]^d`; `None` derives it from the data.
    pub bound: Option<T>,
}

impl<T: Real> SolverConfig<T> {
    pub fn new(k: usize, seed: u64) -> Self {
        SolverConfig {
            k,
            restarts: 8,
            max_iters: 200,
            tol: T::lit(1e-9),
            seed,
            policy: NegativeWeightPolicy::Signed,
            init: InitStrategy::MassSeeding,
            bound: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(invalid("restarts must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if !(self.tol > T::zero()) {
            return Err(invalid("tol must be positive"));
        }
        if let Some(b) = self.bound {
            if !(b > T::zero()) {
                return Err(invalid("bound must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveFlags {
    /// Recentering steps that met a cell with negative total mass.
    pub negative_mass_cells: usize,
    pub empty_cells_repaired: usize,
    /// Steps where the objective went up (possible only with negative weights).
    pub nonmonotone_steps: usize,
    /// Whether any input weight was negative.
    pub negative_weights: bool,
    pub policy: NegativeWeightPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T> {
    pub best: Codebook<T>,
    /// Objective of `best` on the signed weights.
    pub objective: T,
    pub best_restart: usize,
    pub iterations: Vec<usize>,
    pub restart_objectives: Vec<T>,
    /// Objective after initialization and after every iteration, per restart.
    pub traces: Vec<Vec<T>>,
    pub flags: SolveFlags,
}

impl<T: Real> SolveReport<T> {
    pub fn to_json(&self) -> Value {
        json!({
            "schema_version": SCHEMA_VERSION,
            "centers": self.best.to_json(),
            "objective": json_f64(self.objective.as_f64()),
            "best_restart": self.best_restart,
            "iterations": self.iterations,
            "restart_objectives": json_vec(self.restart_objectives.iter().map(|v| v.as_f64())),
            "flags": {
                "negative_mass_cells": self.flags.negative_mass_cells,
                "empty_cells_repaired": self.flags.empty_cells_repaired,
                "nonmonotone_steps": self.flags.nonmonotone_steps,
                "negative_weights": self.flags.negative_weights,
                "policy": self.flags.policy.as_str(),
            },
        })
    }
}

/// Points with signed weights; the objective is `sum_i w_i gamma(c, x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPoints<T> {
    points: Array2<T>,
    weights: Vec<T>,
}

impl<T: Real> WeightedPoints<T> {
    pub fn new(points: Array2<T>, weights: Vec<T>) -> Result<Self> {
        check_dim(points.nrows(), weights.len())?;
        if points.nrows() == 0 {
            return Err(Error::EmptySample);
        }
        Ok(WeightedPoints { points, weights })
    }

    /// Grid nodes weighted by trapezoidal weight times density value.
    pub fn from_density(density: &DeconvolvedDensity<T>) -> Self {
        let region = density.region();
        let weights = region
            .weights()
            .iter()
            .zip(density.values())
            .map(|(&w, &v)| w * v)
            .collect();
        WeightedPoints {
            points: region.nodes(),
            weights,
        }
    }

    /// Sample points with equal weights `1/n`.
    pub fn from_sample(sample: ArrayView2<'_, T>) -> Result<Self> {
        let n = sample.nrows();
        if n == 0 {
            return Err(Error::EmptySample);
        }
        let w = T::one() / T::from_usize_lossy(n);
        Ok(WeightedPoints {
            points: sample.to_owned(),
            weights: vec![w; n],
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> ArrayView2<'_, T> {
        self.points.view()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    fn point(&self, i: usize) -> &[T] {
        self.points.row(i).to_slice().expect("row-major points")
    }

    /// `sum_i w_i gamma(c, x_i)`.
    pub fn objective(&self, c: &Codebook<T>) -> T {
        self.objective_with(c, &self.weights)
    }

    fn objective_with(&self, c: &Codebook<T>, weights: &[T]) -> T {
        (0..self.len())
            .map(|i| weights[i] * c.nearest(self.point(i)).1)
            .sum()
    }

    fn sup_radius(&self) -> T {
        self.points.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Best-of-restarts weighted Lloyd.
    pub fn solve(&self, config: &SolverConfig<T>) -> Result<SolveReport<T>> {
        config.validate()?;
        if config.k > self.len() {
            return Err(invalid(format!(
                "k = {} exceeds the number of points ({})",
                config.k,
                self.len()
            )));
        }
        if !self.weights.iter().any(|&w| w > T::zero()) {
            return Err(Error::NonpositiveDensity);
        }
        let effective: Vec<T> = match config.policy {
            NegativeWeightPolicy::Signed => self.weights.clone(),
            NegativeWeightPolicy::ClampToZero => {
                self.weights.iter().map(|&w| w.max(T::zero())).collect()
            }
        };
        let bound = config.bound.unwrap_or_else(|| self.sup_radius());
        let runs: Vec<RestartRun<T>> = (0..config.restarts)
            .into_par_iter()
            .map(|r| {
                self.run_restart(
                    config,
                    &effective,
                    bound,
                    derive_seed(config.seed, &[r as u64]),
                )
            })
            .collect();

        let mut best_restart = 0;
        for (r, run) in runs.iter().enumerate() {
            if run.objective < runs[best_restart].objective {
                best_restart = r;
            }
        }
        let mut flags = SolveFlags {
            negative_weights: self.weights.iter().any(|&w| w < T::zero()),
            policy: config.policy,
            ..Default::default()
        };
        for run in &runs {
            flags.negative_mass_cells += run.negative_mass_cells;
            flags.empty_cells_repaired += run.repaired;
            flags.nonmonotone_steps += run.nonmonotone;
        }
        Ok(SolveReport {
            best: runs[best_restart].best.clone(),
            objective: runs[best_restart].objective,
            best_restart,
            iterations: runs.iter().map(|r| r.iterations).collect(),
            restart_objectives: runs.iter().map(|r| r.objective).collect(),
            traces: runs.iter().map(|r| r.trace.clone()).collect(),
            flags,
        })
    }

    fn bounding_box(&self) -> (Vec<T>, Vec<T>) {
        let d = self.dim();
        let mut lo = vec![T::infinity(); d];
        let mut hi = vec![T::neg_infinity(); d];
        for row in self.points.outer_iter() {
            for j in 0..d {
                lo[j] = lo[j].min(row[j]);
                hi[j] = hi[j].max(row[j]);
            }
        }
        (lo, hi)
    }

    fn uniform_point(&self, rng: &mut impl Rng) -> Vec<T> {
        let (lo, hi) = self.bounding_box();
        lo.iter()
            .zip(&hi)
            .map(|(&a, &b)| a + (b - a) * T::lit(rng.random::<f64>()))
            .collect()
    }

    fn initialize(&self, config: &SolverConfig<T>, weights: &[T], rng: &mut impl Rng) -> Array2<T> {
        let (n, d, k) = (self.len(), self.dim(), config.k);
        let mut centers = Array2::zeros((k, d));
        match config.init {
            InitStrategy::UniformRandom => {
                for j in 0..k {
                    let p = self.uniform_point(rng);
                    centers.row_mut(j).assign(&ndarray::ArrayView1::from(&p));
                }
            }
            InitStrategy::MassSeeding => {
                let positive: Vec<T> = weights.iter().map(|&w| w.max(T::zero())).collect();
                let mut dist = vec![T::infinity(); n];
                for j in 0..k {
                    let score: Vec<T> = if j == 0 {
                        positive.clone()
                    } else {
                        positive.iter().zip(&dist).map(|(&w, &d2)| w * d2).collect()
                    };
                    let chosen = match draw_index(&score, rng) {
                        Some(i) => self.point(i).to_vec(),
                        None => self.uniform_point(rng),
                    };
                    centers
                        .row_mut(j)
                        .assign(&ndarray::ArrayView1::from(&chosen));
                    for (i, dm) in dist.iter_mut().enumerate() {
                        let d2 = sq_dist(self.point(i), &chosen);
                        if d2 < *dm {
                            *dm = d2;
                        }
                    }
                }
            }
        }
        centers
    }

    fn run_restart(
        &self,
        config: &SolverConfig<T>,
        weights: &[T],
        bound: T,
        seed: u64,
    ) -> RestartRun<T> {
        let mut rng = rng_from_seed(seed);
        let (n, d, k) = (self.len(), self.dim(), config.k);
        let mut code = Codebook::new(self.initialize(config, weights, &mut rng))
            .expect("initial centers are finite");
        code.clamp(bound);
        let empty_mass = T::lit(EMPTY_CELL_MASS);

        let mut objective = self.objective_with(&code, weights);
        let mut signed = self.objective(&code);
        let mut run = RestartRun {
            best: code.clone(),
            objective: signed,
            iterations: 0,
            trace: vec![signed],
            negative_mass_cells: 0,
            repaired: 0,
            nonmonotone: 0,
        };
        let mut labels = vec![0usize; n];
        let mut dist = vec![T::zero(); n];
        for it in 1..=config.max_iters {
            for i in 0..n {
                let (j, d2) = code.nearest(self.point(i));
                labels[i] = j;
                dist[i] = d2;
            }
            let mut mass = vec![T::zero(); k];
            let mut sums = Array2::<T>::zeros((k, d));
            for i in 0..n {
                let (j, w) = (labels[i], weights[i]);
                mass[j] += w;
                for (s, &x) in sums.row_mut(j).iter_mut().zip(self.point(i)) {
                    *s += w * x;
                }
            }
            let mut centers = code.centers().to_owned();
            let mut empty = Vec::new();
            for j in 0..k {
                if mass[j].abs() < empty_mass {
                    empty.push(j);
                    continue;
                }
                if mass[j] < T::zero() {
                    run.negative_mass_cells += 1;
                }
                let m = mass[j];
                centers
                    .row_mut(j)
                    .iter_mut()
                    .zip(sums.row(j))
                    .for_each(|(c, &s)| *c = s / m);
            }
            let mut next =
                Codebook::new(centers.mapv(|v| if v.is_finite() { v } else { T::zero() }))
                    .expect("finite centers");
            next.clamp(bound);
            if !empty.is_empty() {
                // distances to the centers of nonempty cells
                let mut nearest: Vec<T> = (0..n)
                    .map(|i| {
                        (0..k)
                            .filter(|j| !empty.contains(j))
                            .map(|j| {
                                sq_dist(self.point(i), next.center(j).as_slice().expect("row"))
                            })
                            .fold(T::infinity(), T::min)
                    })
                    .collect();
                for &j in &empty {
                    let score: Vec<T> = weights
                        .iter()
                        .zip(&nearest)
                        .map(|(&w, &d2)| {
                            if w > T::zero() {
                                w * d2.min(T::max_value())
                            } else {
                                T::zero()
                            }
                        })
                        .collect();
                    if let Some(i) = argmax_positive(&score) {
                        let p = self.point(i).to_vec();
                        let mut c = next.centers().to_owned();
                        c.row_mut(j).assign(&ndarray::ArrayView1::from(&p));
                        next = Codebook::new(c).expect("finite centers");
                        next.clamp(bound);
                        for (q, nq) in nearest.iter_mut().enumerate() {
                            *nq = nq.min(sq_dist(self.point(q), &p));
                        }
                        run.repaired += 1;
                    }
                }
            }
            code = next;
            let new_objective = self.objective_with(&code, weights);
            signed = self.objective(&code);
            run.iterations = it;
            run.trace.push(signed);
            if new_objective > objective {
                run.nonmonotone += 1;
            }
            if signed < run.objective {
                run.objective = signed;
                run.best = code.clone();
            }
            let scale = objective.abs().max(T::min_positive_value());
            let decrease = (objective - new_objective) / scale;
            objective = new_objective;
            if decrease < config.tol {
                break;
            }
        }
        run
    }
}

struct RestartRun<T> {
    best: Codebook<T>,
    objective: T,
    iterations: usize,
    trace: Vec<T>,
    negative_mass_cells: usize,
    repaired: usize,
    nonmonotone: usize,
}

#[inline]
fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(T::zero(), |s, v| s + v)
}

fn argmax_positive<T: Real>(score: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &s) in score.iter().enumerate() {
        if s > T::zero() && best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Index drawn with probability proportional to `score` (nonnegative).
fn draw_index<T: Real>(score: &[T], rng: &mut impl Rng) -> Option<usize> {
    let total: f64 = score
        .iter()
        .map(|s| s.as_f64())
        .filter(|s| s.is_finite())
        .sum();
    if !(total > 0.0) {
        return None;
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, s) in score.iter().enumerate() {
        let s = s.as_f64();
        if !(s > 0.0) || !s.is_finite() {
            continue;
        }
        acc += s;
        last_positive = Some(i);
        if acc > target {
            return Some(i);
        }
    }
    last_positive
}

/// Weighted Lloyd on the nodes of a density grid; centers clamped to the
/// region's `[-M, M]^d` box unless the config sets a bound.
pub fn lloyd_weighted<T: Real>(
    density: &DeconvolvedDensity<T>,
    config: &SolverConfig<T>,
) -> Result<SolveReport<T>> {
    let mut config = config.clone();
    if config.bound.is_none() {
        config.bound = Some(density.region().sup_radius());
    }
    WeightedPoints::from_density(density).solve(&config)
}

/// Deconvolution k-means: minimizes `(1/n) sum_i gamma_lambda(c, Z_i)` over codebooks.
pub fn noisy_kmeans<T: Real>(
    sample_z: ArrayView2<'_, T>,
    kernel: &DeconvKernel<T>,
    region: &CompactRegion<T>,
    config: &SolverConfig<T>,
) -> Result<SolveReport<T>> {
    let density = deconv_kde(sample_z, kernel, region)?;
    lloyd_weighted(&density, config)
}

/// Seed used for oracle codebooks; the oracle is a fixed reference.
pub const ORACLE_SEED: u64 = 0x0AC1E;

/// Numerical surrogate of an optimal codebook for a known density: Lloyd on
/// `f` tabulated at [`TRUE_RISK_REFINEMENT`] times the region's resolution.
pub fn oracle_codebook<T: Real>(
    f: &DensitySpec<T>,
    region: &CompactRegion<T>,
    k: usize,
    budget: usize,
) -> Result<Codebook<T>> {
    if budget < 16 {
        return Err(invalid("oracle budget must be at least 16 restarts"));
    }
    check_dim(f.dim(), region.dim())?;
    let fine = region.refined(TRUE_RISK_REFINEMENT);
    let tab = DeconvolvedDensity::from_fn(&fine, |x| f.eval(x));
    let mut config = SolverConfig::new(k, ORACLE_SEED);
    config.restarts = budget;
    config.max_iters = 1000;
    config.tol = T::lit(1e-12);
    Ok(lloyd_weighted(&tab, &config)?.best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{make_density, DensityKind};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn interval(res: usize) -> CompactRegion<f64> {
        CompactRegion::new(vec![-1.0], vec![1.0], vec![res]).unwrap()
    }

    #[test]
    fn single_cell_is_weighted_barycenter() {
        let region = interval(11);
        let dens = DeconvolvedDensity::from_fn(&region, |x| 1.0 + x[0] + 0.3 * x[0] * x[0]);
        let rep = lloyd_weighted(&dens, &SolverConfig::new(1, 3)).unwrap();
        let wp = WeightedPoints::from_density(&dens);
        let mass: f64 = wp.weights().iter().sum();
        let mean: f64 = wp
            .weights()
            .iter()
            .zip(wp.points().column(0))
            .map(|(w, x)| w * x)
            .sum::<f64>()
            / mass;
        assert_abs_diff_eq!(rep.best.center(0)[0], mean, epsilon = 1e-15);
    }

    #[test]
    fn point_mass_density() {
        let region = interval(9);
        let mut vals = vec![0.0; 9];
        vals[6] = 4.0;
        let dens = DeconvolvedDensity::from_values(&region, vals).unwrap();
        let rep = lloyd_weighted(&dens, &SolverConfig::new(1, 0)).unwrap();
        assert_eq!(rep.best.center(0)[0], 0.5);
    }

    #[test]
    fn uniform_two_means() {
        let region = interval(256);
        let dens = DeconvolvedDensity::from_fn(&region, |_| 0.5);
        let rep = lloyd_weighted(&dens, &SolverConfig::new(2, 1)).unwrap();
        let c = rep.best.sorted();
        let h = region.spacing(0);
        assert!((c.center(0)[0] + 0.5).abs() <= 2.0 * h);
        assert!((c.center(1)[0] - 0.5).abs() <= 2.0 * h);
    }

    #[test]
    fn rejects_bad_inputs() {
        let region = interval(4);
        let neg = DeconvolvedDensity::from_values(&region, vec![-1.0, 0.0, -2.0, 0.0]).unwrap();
        assert!(matches!(
            lloyd_weighted(&neg, &SolverConfig::new(1, 0)),
            Err(Error::NonpositiveDensity)
        ));
        let pos = DeconvolvedDensity::from_fn(&region, |_| 1.0);
        assert!(lloyd_weighted(&pos, &SolverConfig::new(5, 0)).is_err());
        let mut cfg = SolverConfig::new(1, 0);
        cfg.restarts = 0;
        assert!(lloyd_weighted(&pos, &cfg).is_err());
    }

    #[test]
    fn signed_field_terminates_and_flags() {
        let region = interval(41);
        let dens = DeconvolvedDensity::from_fn(&region, |x| (6.0 * x[0]).cos() + 0.2);
        let mut cfg = SolverConfig::new(3, 9);
        cfg.max_iters = 50;
        let rep = lloyd_weighted(&dens, &cfg).unwrap();
        assert!(rep.flags.negative_weights);
        assert!(rep.iterations.iter().all(|&i| i <= 50));
        let wp = WeightedPoints::from_density(&dens);
        assert_abs_diff_eq!(rep.objective, wp.objective(&rep.best), epsilon = 1e-15);

        cfg.policy = NegativeWeightPolicy::ClampToZero;
        let clamped = lloyd_weighted(&dens, &cfg).unwrap();
        assert_eq!(clamped.flags.policy, NegativeWeightPolicy::ClampToZero);
        // reported objective is on the signed field
        assert_abs_diff_eq!(
            clamped.objective,
            wp.objective(&clamped.best),
            epsilon = 1e-15
        );
    }

    #[test]
    fn empty_cells_are_repaired() {
        let points = array![[0.0], [0.1], [5.0], [5.1]];
        let wp = WeightedPoints::new(points, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let mut cfg = SolverConfig::new(2, 4);
        cfg.init = InitStrategy::UniformRandom;
        cfg.bound = Some(100.0);
        cfg.restarts = 4;
        let rep = wp.solve(&cfg).unwrap();
        let c = rep.best.sorted();
        assert_abs_diff_eq!(c.center(0)[0], 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(c.center(1)[0], 5.05, epsilon = 1e-12);
    }

    #[test]
    fn oracle_for_uniform() {
        let f = make_density(DensityKind::Uniform {
            lower: vec![-1.0],
            upper: vec![1.0],
        })
        .unwrap();
        let region = interval(256);
        let h = region.refined(TRUE_RISK_REFINEMENT).spacing(0);
        let c = oracle_codebook(&f, &region, 2, 16).unwrap().sorted();
        assert!((c.center(0)[0] + 0.5).abs() <= h);
        assert!((c.center(1)[0] - 0.5).abs() <= h);
        let c1 = oracle_codebook(&f, &region, 1, 16).unwrap();
        assert!(c1.center(0)[0].abs() <= h);
        assert!(oracle_codebook(&f, &region, 2, 8).is_err());
    }

    #[test]
    fn report_json_shape() {
        let region = interval(32);
        let dens = DeconvolvedDensity::from_fn(&region, |_| 0.5);
        let rep = lloyd_weighted(&dens, &SolverConfig::new(2, 1)).unwrap();
        let v = rep.to_json();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["centers"].as_array().unwrap().len(), 2);
        assert_eq!(v["iterations"].as_array().unwrap().len(), 8);
        assert_eq!(v["flags"]["policy"], "signed");
    }
}
