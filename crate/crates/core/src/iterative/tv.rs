//! Isotropic total-variation denoising (ROF) by Chambolle's dual projection.
//!
//! Gradients are forward differences with Neumann boundaries; the
//! divergence is the negative adjoint of that gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Image;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvConfig {
    /// Regularisation strength: the ROF weight when denoising, λ of the
    /// regularised cost when reconstructing.
    pub weight: f64,
    pub max_iters: usize,
    /// Dual step size.
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_step() -> f64 {
    0.25
}

impl Default for TvConfig {
    fn default() -> Self {
        TvConfig { weight: 0.0, max_iters: 100, step: 0.25 }
    }
}

impl TvConfig {
    pub fn new(weight: f64, max_iters: usize) -> Self {
        TvConfig { weight, max_iters, step: 0.25 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight >= 0.0) || !self.weight.is_finite() {
            return Err(Error::validation(format!("TV weight must be >= 0, got {}", self.weight)));
        }
        if self.max_iters == 0 {
            return Err(Error::validation("TV needs at least one iteration"));
        }
        if !(self.step > 0.0) {
            return Err(Error::validation(format!("TV step must be positive, got {}", self.step)));
        }
        Ok(())
    }
}

/// Forward-difference gradient with zero flux across the far edges.
pub(crate) fn gradient(u: &[f64], w: usize, h: usize, gx: &mut [f64], gy: &mut [f64]) {
    for i in 0..h {
        for j in 0..w {
            let k = i * w + j;
            gx[k] = if j + 1 < w { u[k + 1] - u[k] } else { 0.0 };
            gy[k] = if i + 1 < h { u[k + w] - u[k] } else { 0.0 };
        }
    }
}

/// Negative adjoint of [`gradient`].
pub(crate) fn divergence(px: &[f64], py: &[f64], w: usize, h: usize, out: &mut [f64]) {
    for i in 0..h {
        for j in 0..w {
            let k = i * w + j;
            let mut d = 0.0;
            if j + 1 < w {
                d += px[k];
            }
            if j > 0 {
                d -= px[k - 1];
            }
            if i + 1 < h {
                d += py[k];
            }
            if i > 0 {
                d -= py[k - w];
            }
            out[k] = d;
        }
    }
}

/// Discrete isotropic total variation `Σ √(gx² + gy²)`.
pub fn total_variation(img: &Image) -> f64 {
    let (w, h) = (img.width(), img.height());
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    gradient(img.values(), w, h, &mut gx, &mut gy);
    gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).sum()
}

/// Solves `min_u ½‖u − noisy‖² + weight·TV(u)`.
pub fn tv_denoise(noisy: &Image, cfg: &TvConfig) -> Result<Image> {
    cfg.validate()?;
    if !noisy.all_finite() {
        return Err(Error::validation("TV input must be finite"));
    }
    if cfg.weight == 0.0 {
        return Ok(noisy.clone());
    }
    let (w, h) = (noisy.width(), noisy.height());
    let n = w * h;
    let lambda = cfg.weight;
    let tau = cfg.step;
    let g = noisy.values();
    let g_scaled: Vec<f64> = g.iter().map(|v| v / lambda).collect();

    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    let mut div = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];

    for _ in 0..cfg.max_iters {
        divergence(&px, &py, w, h, &mut div);
        for k in 0..n {
            t[k] = div[k] - g_scaled[k];
        }
        gradient(&t, w, h, &mut gx, &mut gy);
        for k in 0..n {
            let denom = 1.0 + tau * gx[k].hypot(gy[k]);
            px[k] = (px[k] + tau * gx[k]) / denom;
            py[k] = (py[k] + tau * gy[k]) / denom;
        }
    }

    divergence(&px, &py, w, h, &mut div);
    let values = g.iter().zip(&div).map(|(gv, d)| gv - lambda * d).collect();
    Ok(Image::from_raw(*noisy.grid(), values))
}
