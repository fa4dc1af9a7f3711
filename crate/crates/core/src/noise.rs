//! Measurement-noise models described by their characteristic function.
//!
//! Only product-form noises are representable: a [`NoiseModel`] is a list of
//! per-axis factors, so the characteristic function factorizes across axes
//! by construction. Every factor has a polynomially decaying characteristic
//! function `|cf(t)| ~ |t|^-beta` (mildly ill-posed deconvolution).

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex;
use rand::RngCore;
use rand_distr::{Distribution, Exp};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;
use crate::seed::rng_from_seed;

pub type CfFn<T> = Arc<dyn Fn(T) -> Complex<T> + Send + Sync>;
pub type AxisSampler = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;

/// Tabulated real, even characteristic function on `t >= 0`.
///
/// Linear interpolation inside the table; beyond the last abscissa the
/// value decays as `cf_last * (t_last / |t|)^beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct CfTable<T> {
    t: Vec<T>,
    cf: Vec<T>,
    beta: T,
}

impl<T: Real> CfTable<T> {
    pub fn new(t: Vec<T>, cf: Vec<T>, beta: T) -> Result<Self> {
        if t.len() != cf.len() || t.len() < 2 {
            return Err(invalid(
                "cf table needs matching t/cf columns with at least two rows",
            ));
        }
        if t[0] != T::zero() || cf[0] != T::one() {
            return Err(invalid("cf table must start at t = 0 with cf = 1"));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("cf table abscissae must be strictly increasing"));
        }
        if cf.iter().any(|&v| !(v > T::zero()) || v > T::one()) {
            return Err(invalid("cf table values must lie in (0, 1]"));
        }
        if !(beta >= T::zero()) {
            return Err(invalid("beta must be nonnegative"));
        }
        Ok(CfTable { t, cf, beta })
    }

    pub fn eval(&self, t: T) -> T {
        let a = t.abs();
        let last = self.t.len() - 1;
        if a >= self.t[last] {
            return self.cf[last] * (self.t[last] / a).powf(self.beta);
        }
        let i = self.t.partition_point(|&x| x <= a) - 1;
        let w = (a - self.t[i]) / (self.t[i + 1] - self.t[i]);
        self.cf[i] + w * (self.cf[i + 1] - self.cf[i])
    }
}

/// One axis of a user-supplied product noise.
#[derive(Clone)]
pub struct CustomAxis<T> {
    pub cf: CfFn<T>,
    pub beta: T,
    pub scale: T,
    pub sampler: Option<AxisSampler>,
}

impl<T: fmt::Debug> fmt::Debug for CustomAxis<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomAxis")
            .field("beta", &self.beta)
            .field("scale", &self.scale)
            .field("sampler", &self.sampler.is_some())
            .finish()
    }
}

/// Per-axis noise factor.
#[derive(Debug, Clone)]
pub enum AxisNoise<T> {
    /// Laplace with density `exp(-|x|/scale) / (2 scale)`.
    Laplace {
        scale: T,
    },
    /// Point mass at zero.
    Zero,
    Table {
        table: CfTable<T>,
        scale: T,
    },
    Custom(CustomAxis<T>),
}

impl<T: Real> AxisNoise<T> {
    pub fn cf(&self, t: T) -> Complex<T> {
        match self {
            AxisNoise::Laplace { scale } => {
                let st = *scale * t;
                Complex::new(T::one() / (T::one() + st * st), T::zero())
            }
            AxisNoise::Zero => Complex::new(T::one(), T::zero()),
            AxisNoise::Table { table, .. } => Complex::new(table.eval(t), T::zero()),
            AxisNoise::Custom(c) => (c.cf)(t),
        }
    }

    pub fn beta(&self) -> T {
        match self {
            AxisNoise::Laplace { .. } => T::lit(2.0),
            AxisNoise::Zero => T::zero(),
            AxisNoise::Table { table, .. } => table.beta,
            AxisNoise::Custom(c) => c.beta,
        }
    }

    pub fn scale(&self) -> T {
        match self {
            AxisNoise::Laplace { scale } | AxisNoise::Table { scale, .. } => *scale,
            AxisNoise::Zero => T::zero(),
            AxisNoise::Custom(c) => c.scale,
        }
    }

    /// Whether the characteristic function is real-valued (symmetric noise).
    pub fn is_real(&self) -> bool {
        !matches!(self, AxisNoise::Custom(_))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, AxisNoise::Zero)
    }

    fn sample_one(&self, axis: usize, rng: &mut dyn RngCore) -> Result<f64> {
        match self {
            AxisNoise::Laplace { scale } => {
                let exp = Exp::new(1.0).expect("unit rate");
                let (a, b): (f64, f64) = (exp.sample(rng), exp.sample(rng));
                Ok(scale.as_f64() * (a - b))
            }
            AxisNoise::Zero => Ok(0.0),
            AxisNoise::Table { .. } => Err(Error::SamplerUnavailable { axis }),
            AxisNoise::Custom(c) => match &c.sampler {
                Some(s) => Ok(s(rng)),
                None => Err(Error::SamplerUnavailable { axis }),
            },
        }
    }
}

/// Product-form noise density `eta`, known through its characteristic function.
#[derive(Debug, Clone)]
pub struct NoiseModel<T> {
    axes: Vec<AxisNoise<T>>,
}

/// Product Laplace noise: `cf(t) = prod_j 1 / (1 + scale_j^2 t_j^2)`, `beta = 2`.
pub fn laplace_noise<T: Real>(dim: usize, scale: &[T]) -> Result<NoiseModel<T>> {
    if dim == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    crate::error::check_dim(dim, scale.len())?;
    if scale.iter().any(|&s| !(s > T::zero()) || !s.is_finite()) {
        return Err(invalid("Laplace scales must be positive and finite"));
    }
    Ok(NoiseModel {
        axes: scale
            .iter()
            .map(|&scale| AxisNoise::Laplace { scale })
            .collect(),
    })
}

/// Direct observations: `cf = 1`, `beta = 0`.
pub fn zero_noise<T: Real>(dim: usize) -> NoiseModel<T> {
    assert!(dim >= 1, "dimension must be at least 1");
    NoiseModel {
        axes: vec![AxisNoise::Zero; dim],
    }
}

impl<T: Real> NoiseModel<T> {
    /// Builds a product noise from per-axis factors, validating each factor.
    ///
    /// Checks `cf(0) = 1`, Hermitian symmetry and nonvanishing `cf` on a
    /// log-spaced probe grid.
    pub fn from_axes(axes: Vec<AxisNoise<T>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(invalid("noise needs at least one axis"));
        }
        for (j, axis) in axes.iter().enumerate() {
            if let AxisNoise::Laplace { scale } = axis {
                if !(*scale > T::zero()) {
                    return Err(invalid(format!("axis {j}: Laplace scale must be positive")));
                }
            }
            if !(axis.beta() >= T::zero()) {
                return Err(invalid(format!("axis {j}: beta must be nonnegative")));
            }
            let c0 = axis.cf(T::zero());
            let tol = T::lit(1e-12);
            if (c0.re - T::one()).abs() > tol || c0.im.abs() > tol {
                return Err(invalid(format!("axis {j}: cf(0) must equal 1")));
            }
            let mut prev = c0;
            for t in probe_grid::<T>() {
                let (p, m) = (axis.cf(t), axis.cf(-t));
                // both parts changing sign between probes means the path crossed 0
                let crossed = |a: T, b: T, floor: T| {
                    a * b < T::zero() || (a.abs() <= floor && b.abs() <= floor)
                };
                let tiny = T::lit(1e-12);
                // an exact zero right after a subnormal-range value is underflow, not a root
                let underflow = prev.norm() < T::min_positive_value().sqrt();
                let zero = !(p.norm() > T::zero()) && !underflow;
                if zero || (prev.re * p.re < T::zero() && crossed(prev.im, p.im, tiny)) {
                    return Err(invalid(format!("axis {j}: cf vanishes near t = {t}")));
                }
                prev = p;
                let asym = (p - m.conj()).norm();
                if asym > T::lit(1e-9) * (T::one() + p.norm()) {
                    return Err(invalid(format!(
                        "axis {j}: cf(-t) != conj(cf(t)) at t = {t}"
                    )));
                }
            }
        }
        Ok(NoiseModel { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[AxisNoise<T>] {
        &self.axes
    }

    pub fn axis(&self, j: usize) -> &AxisNoise<T> {
        &self.axes[j]
    }

    /// `F[eta](t)` for a d-vector `t`.
    pub fn cf(&self, t: &[T]) -> Complex<T> {
        assert_eq!(t.len(), self.dim(), "cf argument dimension");
        self.axes
            .iter()
            .zip(t)
            .fold(Complex::new(T::one(), T::zero()), |acc, (a, &tj)| {
                acc * a.cf(tj)
            })
    }

    pub fn beta(&self) -> Vec<T> {
        self.axes.iter().map(AxisNoise::beta).collect()
    }

    pub fn scale(&self) -> Vec<T> {
        self.axes.iter().map(AxisNoise::scale).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.axes.iter().all(AxisNoise::is_zero)
    }

    /// Draws `n` i.i.d. rows from `eta`; deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Array2<T>> {
        if n == 0 {
            return Err(invalid("sample size must be positive"));
        }
        let d = self.dim();
        let mut rng = rng_from_seed(seed);
        let mut out = Array2::zeros((n, d));
        for i in 0..n {
            for (j, axis) in self.axes.iter().enumerate() {
                out[[i, j]] = T::lit(axis.sample_one(j, &mut rng)?);
            }
        }
        Ok(out)
    }

    /// Largest relative deviation of `|cf(t)| |t|^beta` from its value at the
    /// largest probe, along each axis, over `t` in `[t_min, t_max]`.
    ///
    /// Diagnostic for consistency of the stored exponent with the decay of cf.
    pub fn decay_ratio_spread(&self, t_min: T, t_max: T, points: usize) -> Vec<T> {
        self.axes
            .iter()
            .map(|a| {
                let beta = a.beta();
                let ratio = |t: T| a.cf(t).norm() * t.powf(beta);
                let reference = ratio(t_max);
                let (lo, hi) = (t_min.ln(), t_max.ln());
                (0..points)
                    .map(|i| {
                        let f = T::from_usize_lossy(i) / T::from_usize_lossy(points.max(2) - 1);
                        let t = (lo + (hi - lo) * f).exp();
                        ((ratio(t) - reference) / reference).abs()
                    })
                    .fold(T::zero(), T::max)
            })
            .collect()
    }
}

/// Convenience alias for [`NoiseModel::sample`].
pub fn sample_noise<T: Real>(model: &NoiseModel<T>, n: usize, seed: u64) -> Result<Array2<T>> {
    model.sample(n, seed)
}

fn probe_grid<T: Real>() -> impl Iterator<Item = T> {
    (-64..=128).map(|e| T::lit(10f64.powf(e as f64 / 32.0)))
}
