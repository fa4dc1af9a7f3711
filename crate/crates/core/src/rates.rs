//! Rate exponents and bandwidth schedules for deconvolution ERM.
//!
//! Notation: margin parameter `kappa >= 1`, entropy exponent `rho in [0, 1)`,
//! ill-posedness `beta_j >= 0`, Hölder smoothness `s_j > 0`. The penalty
//! `sum_j beta_j / s_j` drives every exponent.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct RateParams<T> {
    pub kappa: T,
    pub rho: T,
    pub beta: Vec<T>,
    pub s: Vec<T>,
    /// Hölder constant; carried along, unused by the exponents.
    #[serde(rename = "L", alias = "l")]
    pub l: T,
    /// Multiplier applied to every bandwidth schedule.
    #[serde(default = "one")]
    pub scale_constant: T,
}

fn one<T: Real>() -> T {
    T::one()
}

impl<T: Real> RateParams<T> {
    pub fn new(kappa: T, rho: T, beta: Vec<T>, s: Vec<T>) -> Self {
        RateParams {
            kappa,
            rho,
            beta,
            s,
            l: T::one(),
            scale_constant: T::one(),
        }
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= T::one()) {
            return Err(invalid("kappa must be at least 1"));
        }
        if !(self.rho >= T::zero() && self.rho < T::one()) {
            return Err(invalid("rho must lie in [0, 1)"));
        }
        if self.s.is_empty() {
            return Err(invalid("need at least one smoothness exponent"));
        }
        check_dim(self.s.len(), self.beta.len())?;
        if self
            .beta
            .iter()
            .any(|&b| !(b >= T::zero()) || !b.is_finite())
        {
            return Err(invalid("beta must be nonnegative and finite"));
        }
        if self.s.iter().any(|&s| !(s > T::zero()) || !s.is_finite()) {
            return Err(invalid("s must be positive and finite"));
        }
        if !(self.l > T::zero()) {
            return Err(invalid("L must be positive"));
        }
        if !(self.scale_constant > T::zero()) {
            return Err(invalid("scale_constant must be positive"));
        }
        Ok(())
    }

    /// `sum_j beta_j / s_j`.
    pub fn penalty(&self) -> T {
        self.beta.iter().zip(&self.s).map(|(&b, &s)| b / s).sum()
    }
}

/// Exact oracle inequality exponent:
/// `kappa / (2 kappa + rho - 1 + (2 kappa - 1) sum_j beta_j / s_j)`.
pub fn tau_exact<T: Real>(p: &RateParams<T>) -> Result<T> {
    p.validate()?;
    let two = T::lit(2.0);
    let denom = two * p.kappa + p.rho - T::one() + (two * p.kappa - T::one()) * p.penalty();
    if !(denom > T::zero()) {
        return Err(invalid("rate denominator must be positive"));
    }
    Ok(p.kappa / denom)
}

/// Non-exact oracle inequality exponent: `1 / (1 + rho + sum_j beta_j / s_j)`.
pub fn tau_nonexact<T: Real>(p: &RateParams<T>) -> Result<T> {
    p.validate()?;
    let denom = T::one() + p.rho + p.penalty();
    if !(denom > T::zero()) {
        return Err(invalid("rate denominator must be positive"));
    }
    Ok(T::one() / denom)
}

/// Fast rates (faster than `n^{-1/2}`): `(2 kappa - 1) sum_j beta_j / s_j < 1 - rho`.
pub fn fast_rate_condition<T: Real>(p: &RateParams<T>) -> Result<bool> {
    p.validate()?;
    let lhs = (T::lit(2.0) * p.kappa - T::one()) * p.penalty();
    Ok(lhs < T::one() - p.rho)
}

fn check_n(n: u64) -> Result<()> {
    if n < 2 {
        return Err(invalid("sample size must be at least 2"));
    }
    Ok(())
}

fn schedule<T: Real>(p: &RateParams<T>, n: u64, exponent: impl Fn(usize) -> T) -> Vec<T> {
    let ln_n = T::lit(n as f64).ln();
    (0..p.dim())
        .map(|j| p.scale_constant * (-exponent(j) * ln_n).exp())
        .collect()
}

/// Per-axis exponents `e_j` with `lambda_j = C n^{-e_j}` for the exact inequality.
pub fn bandwidth_exact_exponents<T: Real>(p: &RateParams<T>) -> Result<Vec<T>> {
    let tau = tau_exact(p)?;
    let two = T::lit(2.0);
    Ok(p.s
        .iter()
        .map(|&s| (two * p.kappa - T::one()) / (two * p.kappa * s) * tau)
        .collect())
}

/// `lambda_j = C n^{-(2 kappa - 1) / (2 kappa s_j) tau_exact}`.
pub fn bandwidth_exact<T: Real>(p: &RateParams<T>, n: u64) -> Result<Vec<T>> {
    check_n(n)?;
    let e = bandwidth_exact_exponents(p)?;
    Ok(schedule(p, n, |j| e[j]))
}

pub fn bandwidth_nonexact_exponents<T: Real>(p: &RateParams<T>) -> Result<Vec<T>> {
    let tau = tau_nonexact(p)?;
    Ok(p.s.iter().map(|&s| tau / (T::lit(2.0) * s)).collect())
}

/// `lambda_j = C n^{-tau_nonexact / (2 s_j)}`.
pub fn bandwidth_nonexact<T: Real>(p: &RateParams<T>, n: u64) -> Result<Vec<T>> {
    check_n(n)?;
    let e = bandwidth_nonexact_exponents(p)?;
    Ok(schedule(p, n, |j| e[j]))
}

pub fn bandwidth_kmeans_exponents<T: Real>(p: &RateParams<T>) -> Result<Vec<T>> {
    p.validate()?;
    if p.rho != T::zero() {
        return Err(invalid("the k-means schedule requires rho = 0"));
    }
    let denom = T::one() + p.penalty();
    Ok(p.s
        .iter()
        .map(|&s| T::one() / (T::lit(2.0) * s * denom))
        .collect())
}

/// `lambda_j = C n^{-1 / (2 s_j (1 + sum_j beta_j / s_j))}`; finite-dimensional
/// codebooks have `rho = 0`, enforced here.
pub fn bandwidth_kmeans<T: Real>(p: &RateParams<T>, n: u64) -> Result<Vec<T>> {
    check_n(n)?;
    let e = bandwidth_kmeans_exponents(p)?;
    Ok(schedule(p, n, |j| e[j]))
}

/// Polynomial excess-risk exponent of deconvolution k-means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmeansRate<T> {
    /// `1 / (1 + sum_j beta_j / s_j)`.
    pub exponent: T,
    /// The bound carries an extra `sqrt(log log n)` factor, not in `exponent`.
    pub sqrt_log_log_factor: bool,
}

pub fn theoretical_rate_kmeans<T: Real>(p: &RateParams<T>) -> Result<KmeansRate<T>> {
    p.validate()?;
    Ok(KmeansRate {
        exponent: T::one() / (T::one() + p.penalty()),
        sqrt_log_log_factor: true,
    })
}

/// Bandwidth exponent of the plug-in anisotropic density deconvolution
/// estimator along axis `u`: `1 / (s_u (2 + sum_j (2 beta_j + 1) / s_j))`.
pub fn density_deconvolution_exponent<T: Real>(p: &RateParams<T>, u: usize) -> Result<T> {
    p.validate()?;
    if u >= p.dim() {
        return Err(invalid("axis index out of range"));
    }
    let two = T::lit(2.0);
    let sum: T = p
        .beta
        .iter()
        .zip(&p.s)
        .map(|(&b, &s)| (two * b + T::one()) / s)
        .sum();
    Ok(T::one() / (p.s[u] * (two + sum)))
}
