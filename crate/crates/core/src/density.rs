//! Deconvolution kernel density estimation on tensor grids over a compact
//! region, plus synthetic reference densities.

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::function::erf::erf;
use statrs::function::gamma::ln_gamma;

use crate::error::{check_dim, invalid, Error, Result};
use crate::kernel::DeconvKernel;
use crate::quadrature::trapezoid_weights;
use crate::report::fmt_f64;
use crate::scalar::Real;
use crate::seed::rng_from_seed;

const KDE_BLOCK: usize = 2048;

/// Default nodes per axis: 256 in one dimension, 96 in two, 32 beyond.
pub fn default_resolution(dim: usize) -> usize {
    match dim {
        1 => 256,
        2 => 96,
        _ => 32,
    }
}

/// Axis-aligned box `[a, b]` with an equispaced tensor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactRegion<T> {
    lower: Vec<T>,
    upper: Vec<T>,
    resolution: Vec<usize>,
}

impl<T: Real> CompactRegion<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>, resolution: Vec<usize>) -> Result<Self> {
        if lower.is_empty() {
            return Err(invalid("region needs at least one axis"));
        }
        check_dim(lower.len(), upper.len())?;
        check_dim(lower.len(), resolution.len())?;
        for j in 0..lower.len() {
            if !(lower[j] < upper[j]) || !lower[j].is_finite() || !upper[j].is_finite() {
                return Err(invalid(format!("axis {j}: need finite lower < upper")));
            }
            if resolution[j] < 2 {
                return Err(invalid(format!("axis {j}: resolution must be at least 2")));
            }
        }
        Ok(CompactRegion {
            lower,
            upper,
            resolution,
        })
    }

    /// Region with [`default_resolution`] nodes per axis.
    pub fn with_default_resolution(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        let res = vec![default_resolution(lower.len()); lower.len()];
        Self::new(lower, upper, res)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn num_nodes(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn spacing(&self, j: usize) -> T {
        (self.upper[j] - self.lower[j]) / T::from_usize_lossy(self.resolution[j] - 1)
    }

    pub fn axis_nodes(&self, j: usize) -> Vec<T> {
        let h = self.spacing(j);
        let last = self.resolution[j] - 1;
        (0..=last)
            .map(|i| {
                if i == last {
                    self.upper[j]
                } else {
                    self.lower[j] + h * T::from_usize_lossy(i)
                }
            })
            .collect()
    }

    pub fn axis_weights(&self, j: usize) -> Vec<T> {
        trapezoid_weights(self.lower[j], self.upper[j], self.resolution[j])
    }

    /// Per-axis grid index of a flat (row-major, last axis fastest) node index.
    pub fn multi_index(&self, mut flat: usize, out: &mut [usize]) {
        for j in (0..self.dim()).rev() {
            out[j] = flat % self.resolution[j];
            flat /= self.resolution[j];
        }
    }

    /// All node coordinates, row-major.
    pub fn nodes(&self) -> Array2<T> {
        let axes: Vec<Vec<T>> = (0..self.dim()).map(|j| self.axis_nodes(j)).collect();
        let mut out = Array2::zeros((self.num_nodes(), self.dim()));
        let mut idx = vec![0; self.dim()];
        for flat in 0..self.num_nodes() {
            self.multi_index(flat, &mut idx);
            for j in 0..self.dim() {
                out[[flat, j]] = axes[j][idx[j]];
            }
        }
        out
    }

    /// Tensor trapezoidal weights, one per node.
    pub fn weights(&self) -> Vec<T> {
        let axes: Vec<Vec<T>> = (0..self.dim()).map(|j| self.axis_weights(j)).collect();
        let mut idx = vec![0; self.dim()];
        (0..self.num_nodes())
            .map(|flat| {
                self.multi_index(flat, &mut idx);
                idx.iter()
                    .enumerate()
                    .map(|(j, &i)| axes[j][i])
                    .fold(T::one(), |a, b| a * b)
            })
            .collect()
    }

    /// Same box with `factor` times finer spacing on every axis.
    pub fn refined(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        CompactRegion {
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            resolution: self
                .resolution
                .iter()
                .map(|r| factor * (r - 1) + 1)
                .collect(),
        }
    }

    pub fn with_resolution(&self, resolution: Vec<usize>) -> Result<Self> {
        Self::new(self.lower.clone(), self.upper.clone(), resolution)
    }

    /// Smallest `M` with the region inside `[-M, M]^d`.
    pub fn sup_radius(&self) -> T {
        self.lower
            .iter()
            .chain(&self.upper)
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.iter()
            .enumerate()
            .all(|(j, &v)| v >= self.lower[j] && v <= self.upper[j])
    }

    pub fn volume(&self) -> T {
        (0..self.dim())
            .map(|j| self.upper[j] - self.lower[j])
            .fold(T::one(), |a, b| a * b)
    }
}

/// Signed density values on the nodes of a [`CompactRegion`].
///
/// Deconvolution estimates can be negative; values are kept as computed.
#[derive(Debug, Clone, PartialEq)]
pub struct DeconvolvedDensity<T> {
    region: CompactRegion<T>,
    values: Vec<T>,
    bandwidth: Vec<T>,
    sample_size: usize,
}

impl<T: Real> DeconvolvedDensity<T> {
    /// Tabulates an arbitrary function on the region's nodes.
    pub fn from_fn(region: &CompactRegion<T>, f: impl Fn(&[T]) -> T + Sync) -> Self {
        let nodes = region.nodes();
        let values = (0..region.num_nodes())
            .into_par_iter()
            .map(|i| f(nodes.row(i).as_slice().expect("row-major nodes")))
            .collect();
        DeconvolvedDensity {
            region: region.clone(),
            values,
            bandwidth: Vec::new(),
            sample_size: 0,
        }
    }

    pub fn from_values(region: &CompactRegion<T>, values: Vec<T>) -> Result<Self> {
        check_dim(region.num_nodes(), values.len())?;
        Ok(DeconvolvedDensity {
            region: region.clone(),
            values,
            bandwidth: Vec::new(),
            sample_size: 0,
        })
    }

    pub fn region(&self) -> &CompactRegion<T> {
        &self.region
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn bandwidth(&self) -> &[T] {
        &self.bandwidth
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    /// Tensor trapezoidal rule of `integrand * values`.
    pub fn integrate(&self, integrand: impl Fn(&[T]) -> T) -> T {
        let nodes = self.region.nodes();
        self.region
            .weights()
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (&w, &v))| {
                w * v * integrand(nodes.row(i).as_slice().expect("row-major nodes"))
            })
            .sum()
    }

    pub fn mass(&self) -> T {
        self.region
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(&w, &v)| w * v)
            .sum()
    }

    /// Quadrature mass of the negative part.
    pub fn negative_mass(&self) -> T {
        self.region
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(&w, &v)| w * v.min(T::zero()))
            .sum()
    }

    /// One row per node: coordinates then value, 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.region.dim();
        let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
        header.push("value".into());
        w.write_record(&header)?;
        let nodes = self.region.nodes();
        for (i, v) in self.values.iter().enumerate() {
            let mut rec: Vec<String> = nodes.row(i).iter().map(|x| fmt_f64(x.as_f64())).collect();
            rec.push(fmt_f64(v.as_f64()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `f_hat(x) = (1/n) sum_i (1/prod lambda) K_eta((Z_i - x) / lambda)` on every
/// node of `region`.
///
/// Each node's sum runs over observations in a fixed order, so the result is
/// bit-identical regardless of the thread count.
pub fn deconv_kde<T: Real>(
    sample_z: ArrayView2<'_, T>,
    kernel: &DeconvKernel<T>,
    region: &CompactRegion<T>,
) -> Result<DeconvolvedDensity<T>> {
    let n = sample_z.nrows();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let d = region.dim();
    check_dim(d, kernel.dim())?;
    check_dim(d, sample_z.ncols())?;

    let axis_nodes: Vec<Vec<T>> = (0..d).map(|j| region.axis_nodes(j)).collect();
    let offsets: Vec<usize> = axis_nodes
        .iter()
        .scan(0, |acc, v| {
            let o = *acc;
            *acc += v.len();
            Some(o)
        })
        .collect();
    let row_len: usize = axis_nodes.iter().map(Vec::len).sum();
    let mut values = vec![T::zero(); region.num_nodes()];

    let mut start = 0;
    while start < n {
        let end = (start + KDE_BLOCK).min(n);
        // per observation: concatenated per-axis kernel rows over axis nodes
        let rows: Vec<T> = (start..end)
            .into_par_iter()
            .flat_map_iter(|i| {
                let z = sample_z.row(i);
                let axis_nodes = &axis_nodes;
                (0..d).flat_map(move |j| {
                    let zj = z[j];
                    axis_nodes[j]
                        .iter()
                        .map(move |&x| kernel.eval_scaled_axis(j, zj - x))
                })
            })
            .collect();
        let block = end - start;
        values.par_iter_mut().enumerate().for_each_init(
            || vec![0usize; d],
            |idx, (flat, out)| {
                region.multi_index(flat, idx);
                let mut acc = T::zero();
                for r in 0..block {
                    let row = &rows[r * row_len..(r + 1) * row_len];
                    let mut prod = T::one();
                    for j in 0..d {
                        prod *= row[offsets[j] + idx[j]];
                    }
                    acc += prod;
                }
                *out += acc;
            },
        );
        start = end;
    }
    let inv_n = T::one() / T::from_usize_lossy(n);
    values.iter_mut().for_each(|v| *v *= inv_n);
    Ok(DeconvolvedDensity {
        region: region.clone(),
        values,
        bandwidth: kernel.bandwidth().to_vec(),
        sample_size: n,
    })
}

/// Trapezoidal `int_K integrand(x) f_hat(x) dx`.
pub fn grid_quadrature<T: Real>(
    density: &DeconvolvedDensity<T>,
    integrand: impl Fn(&[T]) -> T,
) -> T {
    density.integrate(integrand)
}

/// Anisotropic Hölder class `H(s, L)` attached to a synthetic density.
#[derive(Debug, Clone, PartialEq)]
pub struct HolderClass<T> {
    pub s: Vec<T>,
    pub l: T,
}

/// Synthetic density families.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityKind<T> {
    /// Uniform on the box `[lower, upper]`.
    Uniform { lower: Vec<T>, upper: Vec<T> },
    /// Diagonal Gaussian mixture, optionally truncated to a box and renormalized.
    GaussianMixture {
        weights: Vec<T>,
        means: Vec<Vec<T>>,
        sds: Vec<Vec<T>>,
        truncate: Option<(Vec<T>, Vec<T>)>,
    },
    /// Product of per-axis bumps `(1 - ((x - c)/h)^2)^p` on `|x - c| < h`;
    /// distinct powers give distinct smoothness per axis.
    Bumps {
        center: Vec<T>,
        half_width: Vec<T>,
        power: Vec<T>,
    },
}

/// Known density `f` with evaluator, seeded sampler and smoothness metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySpec<T> {
    kind: DensityKind<T>,
    holder: HolderClass<T>,
    support: CompactRegion<T>,
    dim: usize,
    // truncation mass (mixture) or per-axis normalizers product (bumps)
    norm: f64,
}

/// Validates parameters and builds a [`DensitySpec`] with default Hölder
/// metadata and support hint.
pub fn make_density<T: Real>(kind: DensityKind<T>) -> Result<DensitySpec<T>> {
    DensitySpec::new(kind)
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

fn bump_normalizer(p: f64) -> f64 {
    // int_{-1}^{1} (1 - u^2)^p du = sqrt(pi) Gamma(p + 1) / Gamma(p + 3/2)
    (0.5 * std::f64::consts::PI.ln() + ln_gamma(p + 1.0) - ln_gamma(p + 1.5)).exp()
}

impl<T: Real> DensitySpec<T> {
    pub fn new(kind: DensityKind<T>) -> Result<Self> {
        let (dim, holder_s, support_box, norm) = match &kind {
            DensityKind::Uniform { lower, upper } => {
                check_dim(lower.len(), upper.len())?;
                if lower.is_empty() || lower.iter().zip(upper).any(|(a, b)| !(a < b)) {
                    return Err(invalid("uniform box needs lower < upper on every axis"));
                }
                (lower.len(), T::one(), (lower.clone(), upper.clone()), 1.0)
            }
            DensityKind::GaussianMixture {
                weights,
                means,
                sds,
                truncate,
            } => {
                if weights.is_empty() {
                    return Err(invalid("mixture needs at least one component"));
                }
                check_dim(weights.len(), means.len())?;
                check_dim(weights.len(), sds.len())?;
                if weights.iter().any(|&w| !(w >= T::zero())) {
                    return Err(invalid("mixture weights must be nonnegative"));
                }
                let total: T = weights.iter().copied().sum();
                if (total - T::one()).abs() > T::lit(1e-9) {
                    return Err(invalid("mixture weights must sum to 1"));
                }
                let dim = means[0].len();
                if dim == 0 {
                    return Err(invalid("mixture components need at least one coordinate"));
                }
                for (m, s) in means.iter().zip(sds) {
                    check_dim(dim, m.len())?;
                    check_dim(dim, s.len())?;
                    if s.iter().any(|&v| !(v > T::zero())) {
                        return Err(invalid("mixture standard deviations must be positive"));
                    }
                }
                let (bx, mass) = match truncate {
                    Some((lo, hi)) => {
                        check_dim(dim, lo.len())?;
                        check_dim(dim, hi.len())?;
                        if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                            return Err(invalid("truncation box needs lower < upper"));
                        }
                        let mass: f64 = (0..weights.len())
                            .map(|c| {
                                weights[c].as_f64()
                                    * (0..dim)
                                        .map(|j| {
                                            let (m, s) = (means[c][j].as_f64(), sds[c][j].as_f64());
                                            std_normal_cdf((hi[j].as_f64() - m) / s)
                                                - std_normal_cdf((lo[j].as_f64() - m) / s)
                                        })
                                        .product::<f64>()
                            })
                            .sum();
                        if !(mass > 1e-12) {
                            return Err(invalid("truncation box carries no mixture mass"));
                        }
                        ((lo.clone(), hi.clone()), mass)
                    }
                    None => {
                        let six = T::lit(6.0);
                        let lo = (0..dim)
                            .map(|j| {
                                means
                                    .iter()
                                    .zip(sds)
                                    .map(|(m, s)| m[j] - six * s[j])
                                    .fold(T::infinity(), T::min)
                            })
                            .collect();
                        let hi = (0..dim)
                            .map(|j| {
                                means
                                    .iter()
                                    .zip(sds)
                                    .map(|(m, s)| m[j] + six * s[j])
                                    .fold(T::neg_infinity(), T::max)
                            })
                            .collect();
                        ((lo, hi), 1.0)
                    }
                };
                (dim, T::lit(2.0), bx, mass)
            }
            DensityKind::Bumps {
                center,
                half_width,
                power,
            } => {
                check_dim(center.len(), half_width.len())?;
                check_dim(center.len(), power.len())?;
                if center.is_empty() {
                    return Err(invalid("bumps need at least one axis"));
                }
                if half_width.iter().any(|&h| !(h > T::zero()))
                    || power.iter().any(|&p| !(p > T::zero()))
                {
                    return Err(invalid("bump half widths and powers must be positive"));
                }
                let norm = (0..center.len())
                    .map(|j| bump_normalizer(power[j].as_f64()) * half_width[j].as_f64())
                    .product();
                let lo = center
                    .iter()
                    .zip(half_width)
                    .map(|(&c, &h)| c - h)
                    .collect();
                let hi = center
                    .iter()
                    .zip(half_width)
                    .map(|(&c, &h)| c + h)
                    .collect();
                (center.len(), T::one(), (lo, hi), norm)
            }
        };
        let s = match &kind {
            DensityKind::Bumps { power, .. } => power.clone(),
            _ => vec![holder_s; dim],
        };
        let support = CompactRegion::with_default_resolution(support_box.0, support_box.1)?;
        Ok(DensitySpec {
            kind,
            holder: HolderClass { s, l: T::one() },
            support,
            dim,
            norm,
        })
    }

    pub fn with_holder(mut self, holder: HolderClass<T>) -> Result<Self> {
        check_dim(self.dim, holder.s.len())?;
        if holder.s.iter().any(|&s| !(s > T::zero())) || !(holder.l > T::zero()) {
            return Err(invalid("Hölder exponents and constant must be positive"));
        }
        self.holder = holder;
        Ok(self)
    }

    pub fn with_support(mut self, support: CompactRegion<T>) -> Result<Self> {
        check_dim(self.dim, support.dim())?;
        self.support = support;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &DensityKind<T> {
        &self.kind
    }

    pub fn holder(&self) -> &HolderClass<T> {
        &self.holder
    }

    pub fn support(&self) -> &CompactRegion<T> {
        &self.support
    }

    /// `f(x)`.
    pub fn eval(&self, x: &[T]) -> T {
        assert_eq!(x.len(), self.dim);
        match &self.kind {
            DensityKind::Uniform { lower, upper } => {
                let inside = x
                    .iter()
                    .enumerate()
                    .all(|(j, &v)| v >= lower[j] && v <= upper[j]);
                if inside {
                    let vol = (0..self.dim)
                        .map(|j| upper[j] - lower[j])
                        .fold(T::one(), |a, b| a * b);
                    T::one() / vol
                } else {
                    T::zero()
                }
            }
            DensityKind::GaussianMixture {
                weights,
                means,
                sds,
                truncate,
            } => {
                if let Some((lo, hi)) = truncate {
                    if x.iter().enumerate().any(|(j, &v)| v < lo[j] || v > hi[j]) {
                        return T::zero();
                    }
                }
                let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
                let v: f64 = (0..weights.len())
                    .map(|c| {
                        weights[c].as_f64()
                            * (0..self.dim)
                                .map(|j| {
                                    let s = sds[c][j].as_f64();
                                    let u = (x[j].as_f64() - means[c][j].as_f64()) / s;
                                    inv_sqrt_2pi / s * (-0.5 * u * u).exp()
                                })
                                .product::<f64>()
                    })
                    .sum();
                T::lit(v / self.norm)
            }
            DensityKind::Bumps {
                center,
                half_width,
                power,
            } => {
                let mut v = 1.0;
                for j in 0..self.dim {
                    let u = ((x[j] - center[j]) / half_width[j]).as_f64();
                    if u.abs() >= 1.0 {
                        return T::zero();
                    }
                    v *= (1.0 - u * u).powf(power[j].as_f64());
                }
                T::lit(v / self.norm)
            }
        }
    }

    /// `n` i.i.d. draws from `f`; deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Array2<T>> {
        if n == 0 {
            return Err(invalid("sample size must be positive"));
        }
        let mut rng = rng_from_seed(seed);
        let mut out = Array2::zeros((n, self.dim));
        match &self.kind {
            DensityKind::Uniform { lower, upper } => {
                for i in 0..n {
                    for j in 0..self.dim {
                        let (a, b) = (lower[j].as_f64(), upper[j].as_f64());
                        out[[i, j]] = T::lit(a + (b - a) * rng.random::<f64>());
                    }
                }
            }
            DensityKind::GaussianMixture {
                weights,
                means,
                sds,
                truncate,
            } => {
                let cumulative: Vec<f64> = weights
                    .iter()
                    .scan(0.0, |acc, w| {
                        *acc += w.as_f64();
                        Some(*acc)
                    })
                    .collect();
                let mut row = vec![0.0f64; self.dim];
                for i in 0..n {
                    loop {
                        let u: f64 = rng.random::<f64>() * cumulative[cumulative.len() - 1];
                        let c = cumulative
                            .partition_point(|&p| p <= u)
                            .min(weights.len() - 1);
                        for (j, r) in row.iter_mut().enumerate() {
                            let g: f64 = StandardNormal.sample(&mut rng);
                            *r = means[c][j].as_f64() + sds[c][j].as_f64() * g;
                        }
                        let accepted = match truncate {
                            Some((lo, hi)) => row
                                .iter()
                                .enumerate()
                                .all(|(j, &v)| v >= lo[j].as_f64() && v <= hi[j].as_f64()),
                            None => true,
                        };
                        if accepted {
                            break;
                        }
                    }
                    for j in 0..self.dim {
                        out[[i, j]] = T::lit(row[j]);
                    }
                }
            }
            DensityKind::Bumps {
                center,
                half_width,
                power,
            } => {
                let betas: Vec<Beta<f64>> = power
                    .iter()
                    .map(|p| Beta::new(p.as_f64() + 1.0, p.as_f64() + 1.0).expect("positive shape"))
                    .collect();
                for i in 0..n {
                    for j in 0..self.dim {
                        let u = 2.0 * betas[j].sample(&mut rng) - 1.0;
                        out[[i, j]] = T::lit(center[j].as_f64() + half_width[j].as_f64() * u);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Minimum of `f` over the nodes of `region`.
    pub fn min_on(&self, region: &CompactRegion<T>) -> T {
        let nodes = region.nodes();
        (0..nodes.nrows())
            .map(|i| self.eval(nodes.row(i).as_slice().expect("row-major")))
            .fold(T::infinity(), T::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_deconv_kernel, sinc, sinc_kernel, BaseKernel, KernelSpec};
    use crate::noise::zero_noise;
    use crate::quadrature::CompositeRule;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use std::f64::consts::PI;

    fn unit_interval(res: usize) -> CompactRegion<f64> {
        CompactRegion::new(vec![-1.0], vec![1.0], vec![res]).unwrap()
    }

    #[test]
    fn region_validation_and_geometry() {
        assert!(CompactRegion::new(vec![1.0f64], vec![1.0], vec![4]).is_err());
        assert!(CompactRegion::new(vec![0.0f64], vec![1.0], vec![1]).is_err());
        assert!(CompactRegion::new(vec![0.0f64], vec![1.0, 2.0], vec![4]).is_err());
        let r = CompactRegion::new(vec![-1.0f64, 0.0], vec![1.0, 3.0], vec![3, 4]).unwrap();
        assert_eq!(r.num_nodes(), 12);
        assert_eq!(r.axis_nodes(1), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(r.nodes().row(5).to_vec(), vec![0.0, 1.0]);
        assert_abs_diff_eq!(r.weights().iter().sum::<f64>(), 6.0, epsilon = 1e-14);
        assert_eq!(r.sup_radius(), 3.0);
        assert_eq!(r.refined(4).resolution(), &[9, 13]);
    }

    #[test]
    fn single_observation_at_origin() {
        let k = build_deconv_kernel(&sinc_kernel(1), &zero_noise(1), &[1.0]).unwrap();
        let region = CompactRegion::new(vec![-1.0], vec![1.0], vec![3]).unwrap();
        let kde = deconv_kde(array![[0.0]].view(), &k, &region).unwrap();
        assert_abs_diff_eq!(kde.values()[1], 1.0 / PI, epsilon = 1e-15);
        assert_eq!(kde.sample_size(), 1);
    }

    #[test]
    fn kde_errors() {
        let k = build_deconv_kernel(&sinc_kernel(1), &zero_noise(1), &[1.0]).unwrap();
        let empty = Array2::<f64>::zeros((0, 1));
        assert!(matches!(
            deconv_kde(empty.view(), &k, &unit_interval(8)),
            Err(Error::EmptySample)
        ));
        let region2 = CompactRegion::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![3, 3]).unwrap();
        assert!(deconv_kde(array![[0.0]].view(), &k, &region2).is_err());
    }

    #[test]
    fn concatenation_is_weighted_average() {
        let spec = make_density(DensityKind::Uniform {
            lower: vec![-1.0, -1.0],
            upper: vec![1.0, 1.0],
        })
        .unwrap();
        let noise = crate::noise::laplace_noise(2, &[0.2, 0.3]).unwrap();
        let k = build_deconv_kernel(&sinc_kernel(2), &noise, &[0.4, 0.5]).unwrap();
        let region = CompactRegion::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![17, 13]).unwrap();
        let z1 = spec.sample(37, 1).unwrap();
        let z2 = spec.sample(3000, 2).unwrap();
        let all = ndarray::concatenate![ndarray::Axis(0), z1, z2];
        let f = deconv_kde(all.view(), &k, &region).unwrap();
        let f1 = deconv_kde(z1.view(), &k, &region).unwrap();
        let f2 = deconv_kde(z2.view(), &k, &region).unwrap();
        for i in 0..region.num_nodes() {
            let avg: f64 = (37.0 * f1.values()[i] + 3000.0 * f2.values()[i]) / 3037.0;
            assert_abs_diff_eq!(f.values()[i], avg, epsilon = 1e-12 * (1.0 + avg.abs()));
        }
    }

    #[test]
    fn kde_mean_matches_smoothed_uniform() {
        // E f_hat(x) = (1/2pi) [Si((1 + x)/lam) + Si((1 - x)/lam)] for the sinc kernel
        let lam = 0.1;
        let si = |a: f64| CompositeRule::new(0.0, a, 200, 16).integrate(sinc::<f64>);
        let spec = make_density(DensityKind::Uniform {
            lower: vec![-1.0],
            upper: vec![1.0],
        })
        .unwrap();
        let n = 200_000;
        let z = spec.sample(n, 5).unwrap();
        let region = CompactRegion::new(vec![-0.9], vec![0.9], vec![19]).unwrap();
        let k = build_deconv_kernel(&sinc_kernel(1), &zero_noise(1), &[lam]).unwrap();
        let kde = deconv_kde(z.view(), &k, &region).unwrap();
        let se = (0.5 / (PI * n as f64 * lam)).sqrt();
        for (x, v) in region.axis_nodes(0).iter().zip(kde.values()) {
            let exact = (si((1.0 + x) / lam) + si((1.0 - x) / lam)) / (2.0 * PI);
            assert!((v - exact).abs() < 4.0 * se, "x = {x}: {v} vs {exact}");
        }
    }

    #[test]
    fn noiseless_uniform_kde_and_mass() {
        let spec = make_density(DensityKind::Uniform {
            lower: vec![-1.0],
            upper: vec![1.0],
        })
        .unwrap();
        let z = spec.sample(10_000, 99).unwrap();
        // flat spectrum on [-1, 1] with a linear taper: sinc-like resolution
        // without the slowly decaying ripples off the jumps at +-1
        let vp = KernelSpec::new(vec![BaseKernel::ValleePoussin], vec![2.0]).unwrap();
        let k = build_deconv_kernel(&vp, &zero_noise(1), &[0.1]).unwrap();
        // region strictly contains the support so the mass check sees the leakage
        let region = CompactRegion::<f64>::new(vec![-1.5], vec![1.5], vec![301]).unwrap();
        let kde = deconv_kde(z.view(), &k, &region).unwrap();
        let nodes = region.axis_nodes(0);
        let err = nodes
            .iter()
            .zip(kde.values())
            .filter(|(x, _)| x.abs() <= 0.8)
            .map(|(_, v)| (v - 0.5).abs())
            .fold(0.0, f64::max);
        assert!(err <= 0.05, "max node error {err}");
        assert_abs_diff_eq!(grid_quadrature(&kde, |_| 1.0), 1.0, epsilon = 0.02);
        assert_eq!(grid_quadrature(&kde, |_| 0.0), 0.0);
    }

    #[test]
    fn quadrature_is_linear_in_integrand() {
        let spec = make_density(DensityKind::Uniform {
            lower: vec![-1.0],
            upper: vec![1.0],
        })
        .unwrap();
        let z = spec.sample(500, 5).unwrap();
        let k = build_deconv_kernel(&sinc_kernel(1), &zero_noise(1), &[0.2]).unwrap();
        let kde = deconv_kde(z.view(), &k, &unit_interval(64)).unwrap();
        let f = |x: &[f64]| x[0] * x[0];
        let g = |x: &[f64]| (3.0 * x[0]).sin();
        let lhs = grid_quadrature(&kde, |x| 2.5 * f(x) - 0.7 * g(x));
        let rhs = 2.5 * grid_quadrature(&kde, f) - 0.7 * grid_quadrature(&kde, g);
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-14);
    }

    #[test]
    fn density_examples() {
        let u = make_density(DensityKind::Uniform {
            lower: vec![-1.0f64],
            upper: vec![1.0],
        })
        .unwrap();
        assert_eq!(u.eval(&[0.0]), 0.5);
        let mix = make_density(DensityKind::GaussianMixture {
            weights: vec![0.5, 0.5],
            means: vec![vec![-0.5], vec![0.5]],
            sds: vec![vec![0.15], vec![0.15]],
            truncate: Some((vec![-1.0], vec![1.0])),
        })
        .unwrap();
        for x in [0.1, 0.37, 0.9] {
            assert_eq!(mix.eval(&[x]), mix.eval(&[-x]));
        }
        let fine = unit_interval(20_001);
        let mass = DeconvolvedDensity::from_fn(&fine, |x| mix.eval(x)).mass();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-3);
    }

    #[test]
    fn invalid_mixture_weights() {
        let bad = |weights: Vec<f64>| {
            make_density(DensityKind::GaussianMixture {
                weights,
                means: vec![vec![0.0], vec![1.0]],
                sds: vec![vec![1.0], vec![1.0]],
                truncate: None,
            })
        };
        assert!(bad(vec![0.5, 0.6]).is_err());
        assert!(bad(vec![1.2, -0.2]).is_err());
        assert!(bad(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn densities_integrate_to_one_on_support() {
        let kinds = vec![
            DensityKind::Uniform {
                lower: vec![-1.0, 0.0],
                upper: vec![1.0, 0.5],
            },
            DensityKind::GaussianMixture {
                weights: vec![0.3, 0.7],
                means: vec![vec![-0.5, 0.0], vec![0.4, 0.2]],
                sds: vec![vec![0.2, 0.3], vec![0.25, 0.1]],
                truncate: None,
            },
            DensityKind::Bumps {
                center: vec![0.0, 0.5],
                half_width: vec![1.0, 0.5],
                power: vec![1.5, 4.0],
            },
        ];
        for kind in kinds {
            let spec = make_density(kind).unwrap();
            let region = spec.support().with_resolution(vec![801, 801]).unwrap();
            let mass = DeconvolvedDensity::from_fn(&region, |x| spec.eval(x)).mass();
            assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-3);
        }
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let region = CompactRegion::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![2, 3]).unwrap();
        let d = DeconvolvedDensity::from_fn(&region, |x| x[0] + x[1]);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x1,x2,value");
        assert_eq!(lines.len(), 7);
        assert!(
            lines[6].starts_with("1.0000000000000000e0,1.0000000000000000e0,2.0000000000000000e0")
        );
    }
}
