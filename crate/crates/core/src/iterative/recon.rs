//! TV-regularised reconstruction by half-quadratic splitting.
//!
//! Alternates a TV proximal step on `v` with the CG x-update, raising the
//! coupling μσ² geometrically from loop to loop.

use serde::{Deserialize, Serialize};

use super::cg::{cg_x_update, CgConfig};
use super::tv::{tv_denoise, TvConfig};
use crate::error::{Error, Result};
use crate::grid::{Image, Sinogram};

/// Geometric μσ² schedule for the TV reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingRamp {
    pub start: f64,
    /// Factor applied per outer loop.
    pub growth: f64,
}

impl Default for CouplingRamp {
    fn default() -> Self {
        CouplingRamp { start: 100.0, growth: 1.4 }
    }
}

impl CouplingRamp {
    pub fn at(&self, loop_index: usize) -> f64 {
        self.start * self.growth.powi(loop_index as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvReconConfig {
    pub tv: TvConfig,
    pub cg: CgConfig,
    pub outer_loops: usize,
    #[serde(default)]
    pub coupling: CouplingRamp,
}

impl Default for TvReconConfig {
    fn default() -> Self {
        TvReconConfig {
            tv: TvConfig::new(2.0, 50),
            cg: CgConfig { max_iters: 10, ..CgConfig::default() },
            outer_loops: 16,
            coupling: CouplingRamp::default(),
        }
    }
}

/// TV reconstruction with the default coupling ramp.
pub fn tv_reconstruct(y: &Sinogram, tv: &TvConfig, cg: &CgConfig, outer_loops: usize) -> Result<Image> {
    tv_reconstruct_with(y, &TvReconConfig { tv: *tv, cg: *cg, outer_loops, coupling: CouplingRamp::default() })
}

/// Minimises `½‖Ax − y‖² + weight·TV(x)` by splitting, starting from zero.
///
/// In loop `k` the proximal step uses ROF weight `weight / μσ²_k`.
pub fn tv_reconstruct_with(y: &Sinogram, cfg: &TvReconConfig) -> Result<Image> {
    cfg.tv.validate()?;
    cfg.cg.validate()?;
    if !(cfg.coupling.start > 0.0) || !(cfg.coupling.growth > 0.0) {
        return Err(Error::validation("TV coupling ramp must be positive"));
    }
    let mut x = Image::zeros(y.geometry().grid);
    for k in 0..cfg.outer_loops {
        let mu = cfg.coupling.at(k);
        let prox = TvConfig { weight: cfg.tv.weight / mu, ..cfg.tv };
        let v = tv_denoise(&x, &prox)?;
        x = cg_x_update(y, &v, mu, &x, &cfg.cg)?.image;
    }
    Ok(x)
}
