//! Stationary determinantal point processes: parametric kernels, Nyström
//! spectra and Brillinger-mixing diagnostics, exact spectral sampling, pair
//! correlation estimation and Monte-Carlo verification of the limit theorems.

pub mod cumulants;
pub mod error;
pub mod estimators;
pub mod io;
pub mod kernel;
pub mod mc;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod special;
pub mod spectral;
pub mod window;

pub use error::{DppError, Result};
pub use kernel::{check_existence, ExistenceReport, Family, HeinrichBounds, KernelModel, ModelSpec};
pub use rng::{replicate_seed, rng_from_seed, DppRng};
pub use sampler::{sample_dpp, sample_poisson, DppSampler, SamplerConfig, SamplerInfo};
pub use window::{PointPattern, Provenance, Window};
pub use estimators::{
    bias_bound, cov_pair_linear, intensity_hat, ise, ise_leading_constant, pcf_hat, pcf_hat_grid, sigma2_intensity,
    tau2_ise, tau2_pointwise, translation_correction, var_linear_statistic, var_pair_statistic, BandwidthRule,
    PairSupport, PcfEstimate, SmoothingFamily, SmoothingKernel, Tau2Variant, VarianceQuadrature,
};
pub use mc::{
    run_cumulant_decay, run_experiment, run_intensity_clt, run_ise_clt, run_pcf_clt, CountMethod, Diagnostics,
    ExperimentConfig, McReport, Statistic, WindowReport,
};
