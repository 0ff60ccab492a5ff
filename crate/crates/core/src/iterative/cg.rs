//! Conjugate-gradient solve of the quadratic data-fidelity update.
//!
//! The x-update minimises `½‖Ax − y‖² + (μσ²/2)‖x − v‖²`, whose stationarity
//! condition is `(AᵀA + μσ²·I)·x = Aᵀy + μσ²·v`. Only the product μσ²
//! appears, so it is the single coupling parameter exposed here.

use serde::{Deserialize, Serialize};

use super::{axpy, dot, norm};
use crate::error::{Error, Result};
use crate::grid::{Image, Sinogram};
use crate::projector::{back_project_with, forward_project_with, Execution};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgConfig {
    pub max_iters: usize,
    /// Stop once `‖r‖ / ‖b‖` falls to this value.
    pub rel_tolerance: f64,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig { max_iters: 50, rel_tolerance: 1e-6 }
    }
}

impl CgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::validation("CG needs at least one iteration"));
        }
        if !(self.rel_tolerance > 0.0) {
            return Err(Error::validation(format!("CG tolerance must be positive, got {}", self.rel_tolerance)));
        }
        Ok(())
    }
}

/// Result of a CG x-update.
#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub image: Image,
    pub iterations: usize,
    /// Final `‖r‖ / ‖b‖` (or relative to the initial residual when `b = 0`).
    pub rel_residual: f64,
    pub converged: bool,
}

/// `x ↦ AᵀA·x + μσ²·x`.
pub fn normal_operator(x: &Image, y: &Sinogram, mu_sigma2: f64, exec: Execution) -> Result<Image> {
    let ax = forward_project_with(x, y.geometry(), exec)?;
    let mut out = back_project_with(&ax, exec).into_values();
    axpy(&mut out, mu_sigma2, x.values());
    Ok(Image::from_raw(*x.grid(), out))
}

/// The x-update objective `½‖Ax − y‖² + (μσ²/2)‖x − v‖²`.
pub fn x_update_objective(y: &Sinogram, v: &Image, mu_sigma2: f64, x: &Image) -> Result<f64> {
    let ax = forward_project_with(x, y.geometry(), Execution::Parallel)?;
    let fidelity: f64 = ax.values().iter().zip(y.values()).map(|(a, b)| (a - b).powi(2)).sum();
    let coupling: f64 = x.values().iter().zip(v.values()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(0.5 * fidelity + 0.5 * mu_sigma2 * coupling)
}

fn validate_inputs(y: &Sinogram, v: &Image, mu_sigma2: f64, x0: &Image, cfg: &CgConfig) -> Result<()> {
    cfg.validate()?;
    let grid = &y.geometry().grid;
    if v.grid() != grid || x0.grid() != grid {
        return Err(Error::validation("x-update images must live on the sinogram's grid"));
    }
    if !(mu_sigma2 >= 0.0) || !mu_sigma2.is_finite() {
        return Err(Error::validation(format!("mu_sigma2 must be finite and >= 0, got {mu_sigma2}")));
    }
    if !v.all_finite() || !x0.all_finite() || y.values().iter().any(|a| !a.is_finite()) {
        return Err(Error::validation("x-update inputs must be finite"));
    }
    Ok(())
}

/// Solves the x-update by CG, warm-started from `x0`.
pub fn cg_x_update(y: &Sinogram, v: &Image, mu_sigma2: f64, x0: &Image, cfg: &CgConfig) -> Result<CgOutcome> {
    cg_x_update_observed(y, v, mu_sigma2, x0, cfg, Execution::Parallel, |_, _| {})
}

/// As [`cg_x_update`], calling `observer(k, x_k)` after every iterate
/// (including `k = 0`, the starting point).
pub fn cg_x_update_observed(
    y: &Sinogram,
    v: &Image,
    mu_sigma2: f64,
    x0: &Image,
    cfg: &CgConfig,
    exec: Execution,
    mut observer: impl FnMut(usize, &Image),
) -> Result<CgOutcome> {
    validate_inputs(y, v, mu_sigma2, x0, cfg)?;
    let grid = *x0.grid();

    let mut b = back_project_with(y, exec).into_values();
    axpy(&mut b, mu_sigma2, v.values());

    let mut x = x0.values().to_vec();
    let mut r = b.clone();
    axpy(&mut r, -1.0, normal_operator(x0, y, mu_sigma2, exec)?.values());
    let mut rs = dot(&r, &r);
    let r0_norm = rs.sqrt();
    let b_norm = norm(&b);
    let denom = if b_norm > 0.0 { b_norm } else { r0_norm };

    observer(0, x0);
    if denom == 0.0 {
        return Ok(CgOutcome { image: x0.clone(), iterations: 0, rel_residual: 0.0, converged: true });
    }

    let mut p = r.clone();
    let mut iterations = 0;
    let mut rel = r0_norm / denom;
    while iterations < cfg.max_iters && rel > cfg.rel_tolerance {
        let mp = normal_operator(&Image::from_raw(grid, p.clone()), y, mu_sigma2, exec)?;
        let pmp = dot(&p, mp.values());
        if !(pmp > 0.0) {
            // Search direction in the null space (μσ² = 0 with rank-deficient A).
            break;
        }
        let alpha = rs / pmp;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, mp.values());
        let rs_new = dot(&r, &r);
        iterations += 1;
        if !rs_new.is_finite() || rs_new.sqrt() > 10.0 * r0_norm {
            return Err(Error::Numerical(format!(
                "CG residual grew from {r0_norm:e} to {:e} at iteration {iterations}",
                rs_new.sqrt()
            )));
        }
        let beta = rs_new / rs;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rs = rs_new;
        rel = rs.sqrt() / denom;
        observer(iterations, &Image::from_raw(grid, x.clone()));
    }

    Ok(CgOutcome {
        image: Image::from_raw(grid, x),
        iterations,
        rel_residual: rel,
        converged: rel <= cfg.rel_tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_geometry, ImageGrid, ParallelGeometry};
    use crate::projector::forward_project;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize, views: usize) -> (ParallelGeometry, ChaCha8Rng) {
        let grid = ImageGrid::square(n, 1.0).unwrap();
        let geom = make_geometry(views, ParallelGeometry::covering_bins(&grid, 1.0), 1.0, grid).unwrap();
        (geom, ChaCha8Rng::seed_from_u64(17))
    }

    fn rand_image(grid: ImageGrid, rng: &mut ChaCha8Rng) -> Image {
        Image::from_fn(grid, |_, _| rng.random_range(0.0..1.0))
    }

    fn rel_diff(a: &Image, b: &Image) -> f64 {
        let num: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).powi(2)).sum();
        (num / b.values().iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    #[test]
    fn consistent_data_recovers_v() {
        let (geom, mut rng) = setup(12, 16);
        let v = rand_image(geom.grid, &mut rng);
        let y = forward_project(&v, &geom).unwrap();
        let cfg = CgConfig { max_iters: 500, rel_tolerance: 1e-13 };
        let out = cg_x_update(&y, &v, 10.0, &Image::zeros(geom.grid), &cfg).unwrap();
        assert!(rel_diff(&out.image, &v) < 1e-8);
    }

    #[test]
    fn huge_coupling_returns_v() {
        let (geom, mut rng) = setup(12, 16);
        let v = rand_image(geom.grid, &mut rng);
        let other = rand_image(geom.grid, &mut rng);
        let y = forward_project(&other, &geom).unwrap();
        let out = cg_x_update(&y, &v, 1e12, &Image::zeros(geom.grid), &CgConfig::default()).unwrap();
        assert!(rel_diff(&out.image, &v) < 1e-6);
    }

    #[test]
    fn zero_problem_returns_immediately() {
        let (geom, _) = setup(8, 6);
        let zeros = Image::zeros(geom.grid);
        let out = cg_x_update(&Sinogram::zeros(geom), &zeros, 5e3, &zeros, &CgConfig::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.image.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn objective_never_increases() {
        let (geom, mut rng) = setup(16, 24);
        let v = rand_image(geom.grid, &mut rng);
        let truth = rand_image(geom.grid, &mut rng);
        let y = forward_project(&truth, &geom).unwrap();
        let mut objectives = Vec::new();
        let cfg = CgConfig { max_iters: 40, rel_tolerance: 1e-14 };
        cg_x_update_observed(&y, &v, 50.0, &Image::zeros(geom.grid), &cfg, Execution::Sequential, |_, x| {
            objectives.push(x_update_objective(&y, &v, 50.0, x).unwrap());
        })
        .unwrap();
        assert!(objectives.len() > 2);
        for w in objectives.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn normal_operator_is_symmetric() {
        let (geom, mut rng) = setup(16, 24);
        let y = Sinogram::zeros(geom.clone());
        for _ in 0..10 {
            let x = Image::from_fn(geom.grid, |_, _| rng.random_range(-1.0..1.0));
            let z = Image::from_fn(geom.grid, |_, _| rng.random_range(-1.0..1.0));
            let ox = normal_operator(&x, &y, 5e3, Execution::Sequential).unwrap();
            let oz = normal_operator(&z, &y, 5e3, Execution::Sequential).unwrap();
            let lhs = dot(ox.values(), z.values());
            let rhs = dot(x.values(), oz.values());
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()));
            assert!(dot(ox.values(), x.values()) >= 0.0);
        }
    }

    #[test]
    fn rejects_invalid_inputs() {
        let (geom, _) = setup(8, 6);
        let zeros = Image::zeros(geom.grid);
        let y = Sinogram::zeros(geom.clone());
        assert!(matches!(cg_x_update(&y, &zeros, -1.0, &zeros, &CgConfig::default()), Err(Error::Validation(_))));
        assert!(matches!(
            cg_x_update(&y, &zeros, 1.0, &zeros, &CgConfig { max_iters: 0, rel_tolerance: 1e-6 }),
            Err(Error::Validation(_))
        ));
        let other = Image::zeros(ImageGrid::square(9, 1.0).unwrap());
        assert!(matches!(cg_x_update(&y, &other, 1.0, &zeros, &CgConfig::default()), Err(Error::Validation(_))));
    }

    #[test]
    fn zero_coupling_still_runs() {
        let (geom, mut rng) = setup(8, 4);
        let truth = rand_image(geom.grid, &mut rng);
        let y = forward_project(&truth, &geom).unwrap();
        let zeros = Image::zeros(geom.grid);
        let out = cg_x_update(&y, &zeros, 0.0, &zeros, &CgConfig { max_iters: 200, rel_tolerance: 1e-10 }).unwrap();
        let ax = forward_project(&out.image, &geom).unwrap();
        let misfit: f64 = ax.values().iter().zip(y.values()).map(|(a, b)| (a - b).powi(2)).sum();
        let data: f64 = y.values().iter().map(|b| b * b).sum();
        assert!(misfit < 1e-6 * data);
    }
}
