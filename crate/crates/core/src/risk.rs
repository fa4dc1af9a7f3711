//! k-means distortion, its deconvolution counterpart and risk oracles.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde_json::Value;

use crate::density::{CompactRegion, DeconvolvedDensity, DensitySpec};
use crate::error::{check_dim, invalid, Error, Result};
use crate::kernel::DeconvKernel;
use crate::report::json_vec;
use crate::scalar::Real;

/// Resolution multiplier for true-risk quadrature relative to the estimator grid.
pub const TRUE_RISK_REFINEMENT: usize = 4;

/// `k` centers in `d` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    centers: Array2<T>,
}

impl<T: Real> Codebook<T> {
    pub fn new(centers: Array2<T>) -> Result<Self> {
        if centers.nrows() == 0 || centers.ncols() == 0 {
            return Err(invalid(
                "codebook needs at least one center and one coordinate",
            ));
        }
        if centers.iter().any(|v| !v.is_finite()) {
            return Err(invalid("codebook centers must be finite"));
        }
        Ok(Codebook { centers })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        for r in rows {
            check_dim(d, r.len())?;
        }
        let flat: Vec<T> = rows.iter().flatten().copied().collect();
        let centers =
            Array2::from_shape_vec((rows.len(), d), flat).map_err(|e| invalid(e.to_string()))?;
        Self::new(centers)
    }

    pub fn k(&self) -> usize {
        self.centers.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }

    pub fn centers(&self) -> ArrayView2<'_, T> {
        self.centers.view()
    }

    pub fn center(&self, j: usize) -> ArrayView1<'_, T> {
        self.centers.row(j)
    }

    /// Nearest center and its squared distance; ties go to the lowest index.
    #[inline]
    pub fn nearest(&self, x: &[T]) -> (usize, T) {
        let mut best = (0, T::infinity());
        for (j, c) in self.centers.outer_iter().enumerate() {
            let d2 = c
                .iter()
                .zip(x)
                .map(|(&a, &b)| (a - b) * (a - b))
                .fold(T::zero(), |s, v| s + v);
            if d2 < best.1 {
                best = (j, d2);
            }
        }
        best
    }

    /// Clamps every coordinate to `[-bound, bound]`.
    pub fn clamp(&mut self, bound: T) {
        self.centers.mapv_inplace(|v| v.max(-bound).min(bound));
    }

    /// Centers reordered so that new center `i` is old center `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut centers = self.centers.clone();
        for (i, &p) in perm.iter().enumerate() {
            centers.row_mut(i).assign(&self.centers.row(p));
        }
        Codebook { centers }
    }

    /// Translates every center by `v`.
    pub fn shifted(&self, v: &[T]) -> Self {
        let mut centers = self.centers.clone();
        for mut row in centers.outer_iter_mut() {
            row.iter_mut().zip(v).for_each(|(c, &s)| *c += s);
        }
        Codebook { centers }
    }

    /// Centers sorted lexicographically; handy for comparing solutions.
    pub fn sorted(&self) -> Self {
        let mut idx: Vec<usize> = (0..self.k()).collect();
        idx.sort_by(|&a, &b| {
            let (ra, rb) = (self.center(a), self.center(b));
            ra.iter()
                .zip(rb.iter())
                .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        self.permuted(&idx)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.centers
            .outer_iter()
            .map(|r| r.iter().map(|v| v.as_f64()).collect())
            .collect()
    }

    /// JSON array of center coordinate arrays.
    pub fn to_json(&self) -> Value {
        Value::Array(self.to_rows().into_iter().map(json_vec).collect())
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let rows: Vec<Vec<f64>> = serde_json::from_value(v.clone())?;
        let rows: Vec<Vec<T>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(T::lit).collect())
            .collect();
        Self::from_rows(&rows)
    }
}

/// `gamma(c, x) = min_j |x - c_j|^2`.
pub fn kmeans_loss<T: Real>(c: &Codebook<T>, x: &[T]) -> T {
    c.nearest(x).1
}

fn axis_kernel_rows<T: Real>(
    z: &[T],
    kernel: &DeconvKernel<T>,
    region: &CompactRegion<T>,
) -> Vec<Vec<T>> {
    (0..region.dim())
        .map(|j| {
            let w = region.axis_weights(j);
            region
                .axis_nodes(j)
                .iter()
                .zip(&w)
                .map(|(&x, &wj)| wj * kernel.eval_scaled_axis(j, z[j] - x))
                .collect()
        })
        .collect()
}

/// `gamma_lambda(c, z) = int_K (1/lambda) K_eta((z - x)/lambda) gamma(c, x) dx`
/// by tensor trapezoidal quadrature. May be negative.
pub fn deconv_loss<T: Real>(
    c: &Codebook<T>,
    z: &[T],
    kernel: &DeconvKernel<T>,
    region: &CompactRegion<T>,
) -> T {
    let losses: Vec<T> = node_losses(c, region);
    deconv_loss_with(&losses, z, kernel, region)
}

fn node_losses<T: Real>(c: &Codebook<T>, region: &CompactRegion<T>) -> Vec<T> {
    let nodes = region.nodes();
    nodes
        .outer_iter()
        .map(|x| kmeans_loss(c, x.as_slice().expect("row-major nodes")))
        .collect()
}

fn deconv_loss_with<T: Real>(
    losses: &[T],
    z: &[T],
    kernel: &DeconvKernel<T>,
    region: &CompactRegion<T>,
) -> T {
    let rows = axis_kernel_rows(z, kernel, region);
    let mut idx = vec![0; region.dim()];
    losses
        .iter()
        .enumerate()
        .map(|(flat, &g)| {
            region.multi_index(flat, &mut idx);
            let w = idx
                .iter()
                .enumerate()
                .fold(T::one(), |a, (j, &i)| a * rows[j][i]);
            w * g
        })
        .sum()
}

/// `(1/n) sum_i gamma_lambda(c, Z_i)`, evaluated observation by observation.
pub fn empirical_risk<T: Real>(
    c: &Codebook<T>,
    sample_z: ArrayView2<'_, T>,
    kernel: &DeconvKernel<T>,
    region: &CompactRegion<T>,
) -> Result<T> {
    let n = sample_z.nrows();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    check_dim(region.dim(), sample_z.ncols())?;
    check_dim(region.dim(), c.dim())?;
    check_dim(region.dim(), kernel.dim())?;
    let losses = node_losses(c, region);
    let per_obs: Vec<T> = (0..n)
        .into_par_iter()
        .map(|i| {
            let z = sample_z.row(i).to_vec();
            deconv_loss_with(&losses, &z, kernel, region)
        })
        .collect();
    Ok(per_obs.into_iter().sum::<T>() / T::from_usize_lossy(n))
}

/// Clustering risk restricted to `region`, `int_K gamma(c, x) f(x) dx`, on a
/// grid [`TRUE_RISK_REFINEMENT`] times finer than `region`'s.
pub fn true_risk<T: Real>(c: &Codebook<T>, f: &DensitySpec<T>, region: &CompactRegion<T>) -> T {
    let fine = region.refined(TRUE_RISK_REFINEMENT);
    true_risk_on(c, f, &fine)
}

/// Same as [`true_risk`] on exactly the grid of `region`.
pub fn true_risk_on<T: Real>(c: &Codebook<T>, f: &DensitySpec<T>, region: &CompactRegion<T>) -> T {
    let tab = DeconvolvedDensity::from_fn(region, |x| f.eval(x));
    tab.integrate(|x| kmeans_loss(c, x))
}

/// `R(c) - R(oracle)`. Slightly negative values only reflect quadrature and
/// oracle error; callers decide how to flag them.
pub fn excess_risk<T: Real>(
    c: &Codebook<T>,
    f: &DensitySpec<T>,
    region: &CompactRegion<T>,
    oracle: &Codebook<T>,
) -> T {
    true_risk(c, f, region) - true_risk(oracle, f, region)
}

/// `int_K (gamma(a, x) - gamma(b, x))^2 f(x) dx` on the refined grid.
pub fn loss_distance_sq<T: Real>(
    a: &Codebook<T>,
    b: &Codebook<T>,
    f: &DensitySpec<T>,
    region: &CompactRegion<T>,
) -> T {
    let fine = region.refined(TRUE_RISK_REFINEMENT);
    let tab = DeconvolvedDensity::from_fn(&fine, |x| f.eval(x));
    tab.integrate(|x| {
        let d = kmeans_loss(a, x) - kmeans_loss(b, x);
        d * d
    })
}
