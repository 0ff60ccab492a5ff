//! Iterative reconstruction: the CG x-update, TV denoising and the
//! TV-regularised reference reconstruction.

pub mod cg;
pub mod recon;
pub mod tv;

pub use cg::{cg_x_update, cg_x_update_observed, normal_operator, x_update_objective, CgConfig, CgOutcome};
pub use recon::{tv_reconstruct, tv_reconstruct_with, CouplingRamp, TvReconConfig};
pub use tv::{total_variation, tv_denoise, TvConfig};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha · x`
pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
