//! Shared fixtures for the benchmarks.

use dpp_core::{KernelModel, Window};

/// Gaussian model at the existence-boundary scale used throughout the suites.
pub fn gaussian_2d() -> KernelModel {
    KernelModel::gaussian(2, 100.0, 0.05).expect("valid model")
}

pub fn bessel_2d() -> KernelModel {
    KernelModel::bessel(2, 100.0).expect("valid model")
}

pub fn unit_square() -> Window {
    Window::cube(2, 1.0).expect("valid window")
}
