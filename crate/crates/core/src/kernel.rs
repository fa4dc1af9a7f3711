//! Deconvolution kernels built from band-limited product kernels.
//!
//! For a base kernel `K = prod_j K_j` with `F[K_j]` supported in `[-S_j, S_j]`
//! and a noise `eta`, the deconvolution kernel along axis `j` is
//!
//! ```text
//! K_eta,j(t) = 1/(2 pi) * int_{-S_j}^{S_j} exp(-i s t) F[K_j](s) / F[eta_j](s / lambda_j) ds
//! ```
//!
//! so that `(1/lambda) K_eta((z - x)/lambda)` smoothed over noisy observations
//! estimates the density of the clean signal.

use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{check_dim, invalid, Result};
use crate::noise::{AxisNoise, NoiseModel};
use crate::quadrature::CompositeRule;
use crate::scalar::Real;

/// Gauss–Legendre panels and order used for Fourier inversion (2048 nodes).
pub const INVERSION_PANELS: usize = 128;
pub const INVERSION_ORDER: usize = 16;

/// Per-axis band-limited base kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaseKernel {
    /// `F[K](s) = 1{|s| <= S}`, `K(t) = sin(S t) / (pi t)`.
    Sinc,
    /// Trapezoidal transform: 1 on `|s| <= S/2`, linear to 0 at `|s| = S`.
    /// Absolutely integrable, unlike sinc.
    ValleePoussin,
}

impl BaseKernel {
    pub fn ft<T: Real>(self, band: T, s: T) -> T {
        let a = s.abs();
        match self {
            BaseKernel::Sinc => {
                if a <= band {
                    T::one()
                } else {
                    T::zero()
                }
            }
            BaseKernel::ValleePoussin => {
                let half = band / T::lit(2.0);
                if a <= half {
                    T::one()
                } else if a <= band {
                    T::lit(2.0) * (T::one() - a / band)
                } else {
                    T::zero()
                }
            }
        }
    }

    /// Closed-form inverse transform `K(t)`.
    pub fn time_value<T: Real>(self, band: T, t: T) -> T {
        match self {
            BaseKernel::Sinc => band * sinc(band * t) / T::PI(),
            BaseKernel::ValleePoussin => {
                let q = band * t / T::lit(4.0);
                T::lit(0.75) * band / T::PI() * sinc(T::lit(3.0) * q) * sinc(q)
            }
        }
    }
}

/// Moment order of a kernel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KernelOrder {
    /// Flat Fourier transform at the origin: every moment condition holds.
    Superkernel,
    Finite(Vec<u32>),
}

/// Product base kernel `K = prod_j K_j` with per-axis band limits.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec<T> {
    axes: Vec<BaseKernel>,
    band_limit: Vec<T>,
    order: KernelOrder,
}

pub fn sinc_kernel<T: Real>(dim: usize) -> KernelSpec<T> {
    KernelSpec::uniform(BaseKernel::Sinc, dim)
}

pub fn vallee_poussin_kernel<T: Real>(dim: usize) -> KernelSpec<T> {
    KernelSpec::uniform(BaseKernel::ValleePoussin, dim)
}

impl<T: Real> KernelSpec<T> {
    fn uniform(base: BaseKernel, dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        KernelSpec {
            axes: vec![base; dim],
            band_limit: vec![T::one(); dim],
            order: KernelOrder::Superkernel,
        }
    }

    pub fn new(axes: Vec<BaseKernel>, band_limit: Vec<T>) -> Result<Self> {
        if axes.is_empty() {
            return Err(invalid("kernel needs at least one axis"));
        }
        check_dim(axes.len(), band_limit.len())?;
        if band_limit
            .iter()
            .any(|&s| !(s > T::zero()) || !s.is_finite())
        {
            return Err(invalid("band limits must be positive and finite"));
        }
        Ok(KernelSpec {
            axes,
            band_limit,
            order: KernelOrder::Superkernel,
        })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[BaseKernel] {
        &self.axes
    }

    pub fn band_limit(&self) -> &[T] {
        &self.band_limit
    }

    pub fn order(&self) -> &KernelOrder {
        &self.order
    }

    /// `F[K_j](s)`.
    pub fn ft(&self, j: usize, s: T) -> T {
        self.axes[j].ft(self.band_limit[j], s)
    }

    /// `K_j(t)`.
    pub fn time_value(&self, j: usize, t: T) -> T {
        self.axes[j].time_value(self.band_limit[j], t)
    }

    /// `sup_s |F[K](s)|`.
    pub fn ft_sup(&self) -> T {
        T::one()
    }
}

/// How the per-axis deconvolution kernels are realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InversionMode {
    /// Closed form where registered, tabulated numerical inversion otherwise.
    #[default]
    Auto,
    /// Always tabulate the numerical inversion.
    Numerical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tabulation {
    pub range: f64,
    pub points: usize,
}

impl Default for Tabulation {
    fn default() -> Self {
        Tabulation {
            range: 50.0,
            points: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KernelOptions {
    pub mode: InversionMode,
    pub tabulation: Tabulation,
}

/// Quadrature of the inversion integral: nodes `s_i` and `w_i G(s_i) / (2 pi)`.
#[derive(Debug, Clone)]
struct RatioQuadrature<T> {
    nodes: Vec<T>,
    weighted: Vec<Complex<T>>,
}

impl<T: Real> RatioQuadrature<T> {
    fn new(base: BaseKernel, band: T, noise: &AxisNoise<T>, bandwidth: T) -> Self {
        let rule = CompositeRule::new(-band, band, INVERSION_PANELS, INVERSION_ORDER);
        let norm = T::one() / (T::lit(2.0) * T::PI());
        let weighted = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&s, &w)| {
                let ratio = Complex::new(base.ft(band, s), T::zero()) / noise.cf(s / bandwidth);
                ratio * (w * norm)
            })
            .collect();
        RatioQuadrature {
            nodes: rule.nodes,
            weighted,
        }
    }

    fn value(&self, t: T) -> T {
        self.nodes
            .iter()
            .zip(&self.weighted)
            .map(|(&s, g)| {
                let (sin, cos) = (s * t).sin_cos();
                // Re(exp(-i s t) g)
                g.re * cos + g.im * sin
            })
            .sum()
    }

    fn value_and_derivative(&self, t: T) -> (T, T) {
        let mut v = T::zero();
        let mut d = T::zero();
        for (&s, g) in self.nodes.iter().zip(&self.weighted) {
            let (sin, cos) = (s * t).sin_cos();
            v += g.re * cos + g.im * sin;
            d += s * (g.im * cos - g.re * sin);
        }
        (v, d)
    }
}

/// Cubic Hermite table of a kernel on `[start, start + step * (len - 1)]`.
#[derive(Debug, Clone)]
struct HermiteTable<T> {
    start: T,
    step: T,
    values: Vec<T>,
    derivs: Vec<T>,
    even: bool,
}

impl<T: Real> HermiteTable<T> {
    fn build(quad: &RatioQuadrature<T>, range: T, points: usize, even: bool) -> Self {
        let start = if even { T::zero() } else { -range };
        let step = (range - start) / T::from_usize_lossy(points - 1);
        let (values, derivs): (Vec<T>, Vec<T>) = (0..points)
            .into_par_iter()
            .map(|i| {
                let t = start + step * T::from_usize_lossy(i);
                quad.value_and_derivative(t)
            })
            .unzip();
        HermiteTable {
            start,
            step,
            values,
            derivs,
            even,
        }
    }

    fn lookup(&self, t: T) -> Option<T> {
        let t = if self.even { t.abs() } else { t };
        let pos = (t - self.start) / self.step;
        if !(pos >= T::zero()) {
            return None;
        }
        let last = self.values.len() - 1;
        let i = pos.floor().to_usize()?;
        if i > last {
            return None;
        }
        if i == last {
            return (pos == T::from_usize_lossy(last)).then(|| self.values[last]);
        }
        let u = pos - T::from_usize_lossy(i);
        let u2 = u * u;
        let u3 = u2 * u;
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let h00 = two * u3 - three * u2 + T::one();
        let h10 = u3 - two * u2 + u;
        let h01 = three * u2 - two * u3;
        let h11 = u3 - u2;
        let (di, dj) = (self.derivs[i], self.derivs[i + 1]);
        Some(
            h00 * self.values[i]
                + h10 * self.step * di
                + h01 * self.values[i + 1]
                + h11 * self.step * dj,
        )
    }
}

#[derive(Debug, Clone)]
enum AxisEval<T> {
    /// Zero noise: the base kernel itself.
    Base {
        base: BaseKernel,
        band: T,
    },
    /// Sinc base with Laplace noise: `1/F[eta](s/lambda) = 1 + coef s^2`.
    SincLaplace {
        band: T,
        coef: T,
    },
    Tabulated(HermiteTable<T>),
}

/// Per-axis deconvolution kernels for fixed noise and bandwidth.
#[derive(Debug, Clone)]
pub struct DeconvKernel<T> {
    spec: KernelSpec<T>,
    noise: NoiseModel<T>,
    bandwidth: Vec<T>,
    evals: Vec<AxisEval<T>>,
    quads: Vec<Arc<RatioQuadrature<T>>>,
}

pub fn build_deconv_kernel<T: Real>(
    spec: &KernelSpec<T>,
    noise: &NoiseModel<T>,
    bandwidth: &[T],
) -> Result<DeconvKernel<T>> {
    DeconvKernel::build(spec, noise, bandwidth, KernelOptions::default())
}

impl<T: Real> DeconvKernel<T> {
    pub fn build(
        spec: &KernelSpec<T>,
        noise: &NoiseModel<T>,
        bandwidth: &[T],
        options: KernelOptions,
    ) -> Result<Self> {
        check_dim(spec.dim(), noise.dim())?;
        check_dim(spec.dim(), bandwidth.len())?;
        if bandwidth
            .iter()
            .any(|&l| !(l > T::zero()) || !l.is_finite())
        {
            return Err(invalid("bandwidths must be positive and finite"));
        }
        let tab = options.tabulation;
        if !(tab.range > 0.0) || tab.points < 2 {
            return Err(invalid(
                "tabulation needs a positive range and at least two points",
            ));
        }
        let mut evals = Vec::with_capacity(spec.dim());
        let mut quads = Vec::with_capacity(spec.dim());
        for j in 0..spec.dim() {
            let (base, band, lambda) = (spec.axes[j], spec.band_limit[j], bandwidth[j]);
            let axis_noise = noise.axis(j);
            let quad = Arc::new(RatioQuadrature::new(base, band, axis_noise, lambda));
            let closed = match (options.mode, base, axis_noise) {
                (InversionMode::Numerical, ..) => None,
                (_, _, AxisNoise::Zero) => Some(AxisEval::Base { base, band }),
                (_, BaseKernel::Sinc, AxisNoise::Laplace { scale }) => {
                    let r = *scale / lambda;
                    Some(AxisEval::SincLaplace { band, coef: r * r })
                }
                _ => None,
            };
            let eval = closed.unwrap_or_else(|| {
                AxisEval::Tabulated(HermiteTable::build(
                    &quad,
                    T::lit(tab.range),
                    tab.points,
                    axis_noise.is_real(),
                ))
            });
            evals.push(eval);
            quads.push(quad);
        }
        Ok(DeconvKernel {
            spec: spec.clone(),
            noise: noise.clone(),
            bandwidth: bandwidth.to_vec(),
            evals,
            quads,
        })
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn spec(&self) -> &KernelSpec<T> {
        &self.spec
    }

    pub fn noise(&self) -> &NoiseModel<T> {
        &self.noise
    }

    pub fn bandwidth(&self) -> &[T] {
        &self.bandwidth
    }

    /// Whether axis `j` is evaluated from a closed form.
    pub fn is_closed_form(&self, j: usize) -> bool {
        !matches!(self.evals[j], AxisEval::Tabulated(_))
    }

    /// `K_eta,j(t)`.
    pub fn eval_axis(&self, j: usize, t: T) -> T {
        match &self.evals[j] {
            AxisEval::Base { base, band } => base.time_value(*band, t),
            AxisEval::SincLaplace { band, coef } => {
                let b = *band;
                let x = b * t;
                (b * sinc(x) + *coef * b * b * b * sinc_moment2(x)) / T::PI()
            }
            AxisEval::Tabulated(table) => table.lookup(t).unwrap_or_else(|| self.quads[j].value(t)),
        }
    }

    /// `K_eta,j(t)` by direct quadrature of the inversion integral, bypassing
    /// closed forms and tables.
    pub fn eval_axis_by_quadrature(&self, j: usize, t: T) -> T {
        self.quads[j].value(t)
    }

    /// `K_eta(t) = prod_j K_eta,j(t_j)`.
    pub fn eval(&self, t: &[T]) -> T {
        assert_eq!(t.len(), self.dim());
        t.iter()
            .enumerate()
            .map(|(j, &tj)| self.eval_axis(j, tj))
            .fold(T::one(), |a, b| a * b)
    }

    /// `(1/lambda_j) K_eta,j(u / lambda_j)`.
    #[inline]
    pub fn eval_scaled_axis(&self, j: usize, u: T) -> T {
        let l = self.bandwidth[j];
        self.eval_axis(j, u / l) / l
    }

    /// `(1 / prod_j lambda_j) prod_j K_eta,j(u_j / lambda_j)`.
    pub fn eval_scaled(&self, u: &[T]) -> T {
        assert_eq!(u.len(), self.dim());
        u.iter()
            .enumerate()
            .map(|(j, &uj)| self.eval_scaled_axis(j, uj))
            .fold(T::one(), |a, b| a * b)
    }
}

/// `sin(x) / x`.
pub fn sinc<T: Real>(x: T) -> T {
    if x.abs() < T::lit(1e-4) {
        let x2 = x * x;
        T::one() - x2 / T::lit(6.0) + x2 * x2 / T::lit(120.0)
    } else {
        x.sin() / x
    }
}

/// `int_0^1 u^2 cos(x u) du`.
fn sinc_moment2<T: Real>(x: T) -> T {
    if x.abs() < T::one() {
        // sum_k (-1)^k x^{2k} / ((2k)! (2k + 3))
        let x2 = x * x;
        let mut term = T::one();
        let mut sum = T::one() / T::lit(3.0);
        for k in 1..14 {
            let kf = T::from_usize_lossy(k);
            term = -term * x2 / ((T::lit(2.0) * kf - T::one()) * (T::lit(2.0) * kf));
            sum += term / (T::lit(2.0) * kf + T::lit(3.0));
        }
        sum
    } else {
        let (s, c) = x.sin_cos();
        s / x + T::lit(2.0) * c / (x * x) - T::lit(2.0) * s / (x * x * x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{laplace_noise, zero_noise};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn sinc_spec_values() {
        let k = sinc_kernel::<f64>(1);
        assert_eq!(k.ft(0, 0.5), 1.0);
        assert_eq!(k.ft(0, 1.5), 0.0);
        assert_abs_diff_eq!(k.time_value(0, 0.0), 1.0 / PI, epsilon = 1e-15);
        assert_eq!(k.order(), &KernelOrder::Superkernel);
    }

    #[test]
    fn base_kernel_transforms_are_normalized_even() {
        for base in [BaseKernel::Sinc, BaseKernel::ValleePoussin] {
            assert_eq!(base.ft(1.0f64, 0.0), 1.0);
            assert_eq!(base.ft(2.0f64, 2.5), 0.0);
            for s in [0.1, 0.7, 0.95] {
                assert_eq!(base.ft(1.0f64, s), base.ft(1.0, -s));
            }
        }
    }

    #[test]
    fn vallee_poussin_time_value_matches_inversion() {
        let spec = vallee_poussin_kernel::<f64>(1);
        let k = build_deconv_kernel(&spec, &zero_noise(1), &[1.0]).unwrap();
        for t in [0.0, 0.3, 1.0, 4.5, -13.0, 40.0] {
            assert_abs_diff_eq!(
                spec.time_value(0, t),
                k.eval_axis_by_quadrature(0, t),
                epsilon = 1e-12
            );
        }
        assert_abs_diff_eq!(spec.time_value(0, 0.0), 0.75 / PI, epsilon = 1e-15);
    }

    #[test]
    fn zero_noise_collapses_to_base_kernel() {
        let spec = sinc_kernel::<f64>(1);
        let numeric = DeconvKernel::build(
            &spec,
            &zero_noise(1),
            &[0.7],
            KernelOptions {
                mode: InversionMode::Numerical,
                ..Default::default()
            },
        )
        .unwrap();
        let closed = build_deconv_kernel(&spec, &zero_noise(1), &[0.7]).unwrap();
        for i in 0..=200 {
            let t = -20.0 + 0.2 * i as f64;
            assert_abs_diff_eq!(
                closed.eval_axis(0, t),
                spec.time_value(0, t),
                epsilon = 1e-15
            );
            assert_abs_diff_eq!(
                numeric.eval_axis(0, t),
                spec.time_value(0, t),
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn sinc_laplace_at_origin() {
        // (1/2pi) int_{-1}^{1} (1 + s^2) ds = 4 / (3 pi)
        let k = build_deconv_kernel(&sinc_kernel(1), &laplace_noise(1, &[1.0]).unwrap(), &[1.0])
            .unwrap();
        assert!(k.is_closed_form(0));
        assert_abs_diff_eq!(k.eval_axis(0, 0.0), 4.0 / (3.0 * PI), epsilon = 1e-14);
    }

    #[test]
    fn moment2_series_and_closed_form_agree() {
        for x in [0.999999f64, 1.0, 1.000001] {
            let a = sinc_moment2(x);
            let (s, c) = x.sin_cos();
            let b = s / x + 2.0 * c / (x * x) - 2.0 * s / (x * x * x);
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn eval_scaled_values() {
        let spec = sinc_kernel::<f64>(1);
        let k1 = build_deconv_kernel(&spec, &zero_noise(1), &[1.0]).unwrap();
        assert_abs_diff_eq!(k1.eval_scaled(&[0.0]), 1.0 / PI, epsilon = 1e-15);
        let k2 = build_deconv_kernel(&spec, &zero_noise(1), &[2.0]).unwrap();
        assert_abs_diff_eq!(k2.eval_scaled(&[0.0]), 1.0 / (2.0 * PI), epsilon = 1e-15);
        let k = build_deconv_kernel(
            &sinc_kernel(2),
            &laplace_noise(2, &[0.5, 1.0]).unwrap(),
            &[0.3, 0.8],
        )
        .unwrap();
        for u in [[0.1, -0.4], [2.0, 3.5], [-7.1, 0.01]] {
            let neg = [-u[0], -u[1]];
            assert_eq!(k.eval_scaled(&u), k.eval_scaled(&neg));
            let prod = k.eval_axis(0, u[0] / 0.3) * k.eval_axis(1, u[1] / 0.8) / (0.3 * 0.8);
            assert_abs_diff_eq!(k.eval_scaled(&u), prod, epsilon = 1e-14);
        }
    }

    #[test]
    fn build_errors() {
        let spec = sinc_kernel::<f64>(2);
        assert!(build_deconv_kernel(&spec, &zero_noise(1), &[1.0, 1.0]).is_err());
        assert!(build_deconv_kernel(&spec, &zero_noise(2), &[1.0]).is_err());
        assert!(build_deconv_kernel(&spec, &zero_noise(2), &[1.0, 0.0]).is_err());
        assert!(build_deconv_kernel(&spec, &zero_noise(2), &[1.0, -2.0]).is_err());
    }

    #[test]
    fn tabulated_kernel_is_even_and_falls_back_outside_table() {
        let k = build_deconv_kernel(
            &vallee_poussin_kernel(1),
            &laplace_noise(1, &[0.5]).unwrap(),
            &[0.5],
        )
        .unwrap();
        assert!(!k.is_closed_form(0));
        for t in [0.013, 1.7, 33.3] {
            assert_eq!(k.eval_axis(0, t), k.eval_axis(0, -t));
            assert_abs_diff_eq!(
                k.eval_axis(0, t),
                k.eval_axis_by_quadrature(0, t),
                epsilon = 1e-9
            );
        }
        assert_eq!(k.eval_axis(0, 75.0), k.eval_axis_by_quadrature(0, 75.0));
    }
}
