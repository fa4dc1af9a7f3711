//! Deconvolution empirical risk minimization for k-means quantization from
//! noisy observations `Z = X + eps`.
//!
//! The pipeline: a [`NoiseModel`] and a band-limited [`KernelSpec`] give a
//! [`DeconvKernel`]; smoothing the noisy sample with it yields a signed
//! [`DeconvolvedDensity`] on a grid over a compact region; weighted Lloyd
//! iterations on that grid minimize the deconvolution empirical risk.
//! [`rates`] holds the bandwidth schedules and exponents, [`experiment`] a
//! seeded Monte Carlo harness estimating excess-risk decay.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the common double-precision case.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod density;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod lloyd;
pub mod noise;
pub mod quadrature;
pub mod rates;
pub mod report;
pub mod risk;
pub mod scalar;
pub mod seed;

pub use density::{
    deconv_kde, grid_quadrature, make_density, CompactRegion, DeconvolvedDensity, DensityKind,
    DensitySpec, HolderClass,
};
pub use error::{Error, Result};
pub use kernel::{
    build_deconv_kernel, sinc_kernel, vallee_poussin_kernel, BaseKernel, DeconvKernel,
    InversionMode, KernelOptions, KernelSpec, Tabulation,
};
pub use lloyd::{
    lloyd_weighted, noisy_kmeans, oracle_codebook, InitStrategy, NegativeWeightPolicy, SolveReport,
    SolverConfig, WeightedPoints,
};
pub use noise::{laplace_noise, sample_noise, zero_noise, AxisNoise, NoiseModel};
pub use rates::RateParams;
pub use risk::{deconv_loss, empirical_risk, excess_risk, kmeans_loss, true_risk, Codebook};
pub use scalar::Real;

pub type NoiseModel64 = NoiseModel<f64>;
pub type NoiseModel32 = NoiseModel<f32>;
pub type KernelSpec64 = KernelSpec<f64>;
pub type KernelSpec32 = KernelSpec<f32>;
pub type DeconvKernel64 = DeconvKernel<f64>;
pub type DeconvKernel32 = DeconvKernel<f32>;
pub type CompactRegion64 = CompactRegion<f64>;
pub type CompactRegion32 = CompactRegion<f32>;
pub type DeconvolvedDensity64 = DeconvolvedDensity<f64>;
pub type DeconvolvedDensity32 = DeconvolvedDensity<f32>;
pub type DensitySpec64 = DensitySpec<f64>;
pub type DensitySpec32 = DensitySpec<f32>;
pub type Codebook64 = Codebook<f64>;
pub type Codebook32 = Codebook<f32>;
pub type SolverConfig64 = SolverConfig<f64>;
pub type SolveReport64 = SolveReport<f64>;
pub type SolveReport32 = SolveReport<f32>;
pub type RateParams64 = RateParams<f64>;
