//! Joseph-method parallel-beam projector and its exact transpose.
//!
//! Each ray steps along the image axis most parallel to it. At every step
//! the ray's position on the other axis is linearly interpolated between the
//! two neighbouring pixel centres, and the sample is weighted by the step
//! length `pixel_size / |cos|` (or `/ |sin|`). Back-projection replays the
//! identical weight pattern, so the pair is an exact adjoint up to
//! floating-point summation order.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Image, ImageGrid, ParallelGeometry, Sinogram};

/// Whether an operator may use the rayon pool.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// Default cap on the number of entries of a dense system matrix.
pub const DENSE_ENTRY_CAP: usize = 1 << 24;

// Views per partial image during parallel back-projection. Fixed so the
// reduction order does not depend on the thread count.
const BACKPROJECT_CHUNK: usize = 8;

#[derive(Clone, Copy, Debug)]
struct ViewStepper {
    cos: f64,
    sin: f64,
    /// True when the ray is closer to vertical: step over rows.
    step_rows: bool,
    step_weight: f64,
}

impl ViewStepper {
    fn new(theta: f64, grid: &ImageGrid) -> Self {
        let (sin, cos) = theta.sin_cos();
        let step_rows = cos.abs() >= sin.abs();
        let step_weight = if step_rows { grid.pixel_size / cos.abs() } else { grid.pixel_size / sin.abs() };
        ViewStepper { cos, sin, step_rows, step_weight }
    }

    /// Calls `f(pixel_index, weight)` for every nonzero weight of the ray at
    /// detector coordinate `s`.
    #[inline]
    fn for_each_weight(&self, grid: &ImageGrid, s: f64, mut f: impl FnMut(usize, f64)) {
        let w = grid.width;
        let h = grid.height;
        let ps = grid.pixel_size;
        if self.step_rows {
            // Column index is linear in the row: a + row·b.
            let b = self.sin / self.cos;
            let a = s / (ps * self.cos) - (h as f64 - 1.0) * 0.5 * b + (w as f64 - 1.0) * 0.5;
            for row in crossed(a, b, w, h) {
                emit(a + row as f64 * b, w, |col, wt| f(row * w + col, wt * self.step_weight));
            }
        } else {
            // Rows count downward while y counts upward.
            let b = self.cos / self.sin;
            let a = (h as f64 - 1.0) * 0.5 - s / (ps * self.sin) - (w as f64 - 1.0) * 0.5 * b;
            for col in crossed(a, b, h, w) {
                emit(a + col as f64 * b, h, |row, wt| f(row * w + col, wt * self.step_weight));
            }
        }
    }
}

/// Steps `k < n_steps` for which `a + k·b` can touch a sample in `0..n`.
#[inline]
fn crossed(a: f64, b: f64, n: usize, n_steps: usize) -> std::ops::Range<usize> {
    let (lo, hi) = (-1.0, n as f64);
    if b == 0.0 {
        return if a > lo && a < hi { 0..n_steps } else { 0..0 };
    }
    let (k0, k1) = ((lo - a) / b, (hi - a) / b);
    let (k0, k1) = if k0 <= k1 { (k0, k1) } else { (k1, k0) };
    let start = (k0.floor().max(0.0) as usize).min(n_steps);
    let end = ((k1.ceil() + 1.0).max(0.0) as usize).min(n_steps);
    start..end.max(start)
}

/// Splits a continuous index between its two neighbouring samples.
#[inline]
fn emit(pos: f64, n: usize, mut f: impl FnMut(usize, f64)) {
    let base = pos.floor();
    let frac = pos - base;
    let i0 = base as isize;
    if i0 >= 0 && (i0 as usize) < n {
        f(i0 as usize, 1.0 - frac);
    }
    let i1 = i0 + 1;
    if frac > 0.0 && i1 >= 0 && (i1 as usize) < n {
        f(i1 as usize, frac);
    }
}

fn steppers(geom: &ParallelGeometry) -> Vec<ViewStepper> {
    geom.angles.iter().map(|&t| ViewStepper::new(t, &geom.grid)).collect()
}

fn check_grid(image: &Image, geom: &ParallelGeometry) -> Result<()> {
    geom.validate()?;
    if image.grid() != &geom.grid {
        return Err(Error::validation(format!(
            "image grid {:?} does not match geometry grid {:?}",
            image.grid(),
            geom.grid
        )));
    }
    Ok(())
}

/// Applies the system matrix: `A·x`.
pub fn forward_project(image: &Image, geom: &ParallelGeometry) -> Result<Sinogram> {
    forward_project_with(image, geom, Execution::Parallel)
}

pub fn forward_project_with(image: &Image, geom: &ParallelGeometry, exec: Execution) -> Result<Sinogram> {
    check_grid(image, geom)?;
    let grid = geom.grid;
    let x = image.values();
    let steppers = steppers(geom);
    let n_bins = geom.n_bins;
    let mut out = vec![0.0; geom.n_rays()];

    let project_view = |(view, row): (usize, &mut [f64])| {
        let st = &steppers[view];
        for (bin, slot) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            st.for_each_weight(&grid, geom.bin_center(bin), |p, w| acc += w * x[p]);
            *slot = acc;
        }
    };
    match exec {
        Execution::Sequential => out.chunks_mut(n_bins).enumerate().for_each(project_view),
        Execution::Parallel => out.par_chunks_mut(n_bins).enumerate().for_each(project_view),
    }
    Ok(Sinogram::from_raw(geom.clone(), out))
}

/// Applies the transpose of the system matrix: `Aᵀ·u`.
pub fn back_project(sino: &Sinogram) -> Image {
    back_project_with(sino, Execution::Parallel)
}

pub fn back_project_with(sino: &Sinogram, exec: Execution) -> Image {
    let geom = sino.geometry();
    let grid = geom.grid;
    let steppers = steppers(geom);

    let accumulate = |views: std::ops::Range<usize>, acc: &mut [f64]| {
        for view in views {
            let st = &steppers[view];
            for (bin, &u) in sino.view(view).iter().enumerate() {
                if u == 0.0 {
                    continue;
                }
                st.for_each_weight(&grid, geom.bin_center(bin), |p, w| acc[p] += w * u);
            }
        }
    };

    let values = match exec {
        Execution::Sequential => {
            let mut acc = vec![0.0; grid.len()];
            accumulate(0..geom.n_views(), &mut acc);
            acc
        }
        Execution::Parallel => {
            let n_chunks = geom.n_views().div_ceil(BACKPROJECT_CHUNK);
            let partials: Vec<Vec<f64>> = (0..n_chunks)
                .into_par_iter()
                .map(|c| {
                    let mut acc = vec![0.0; grid.len()];
                    let start = c * BACKPROJECT_CHUNK;
                    let end = (start + BACKPROJECT_CHUNK).min(geom.n_views());
                    accumulate(start..end, &mut acc);
                    acc
                })
                .collect();
            let mut total = vec![0.0; grid.len()];
            for partial in &partials {
                for (t, p) in total.iter_mut().zip(partial) {
                    *t += p;
                }
            }
            total
        }
    };
    Image::from_raw(grid, values)
}

/// Row-major dense matrix, used as a test oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        self.data.chunks(self.cols).map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }
}

/// Explicit system matrix (rays × pixels) with the default entry cap.
pub fn system_matrix_dense(geom: &ParallelGeometry) -> Result<DenseMatrix> {
    system_matrix_dense_capped(geom, DENSE_ENTRY_CAP)
}

pub fn system_matrix_dense_capped(geom: &ParallelGeometry, cap: usize) -> Result<DenseMatrix> {
    geom.validate()?;
    let rows = geom.n_rays();
    let cols = geom.grid.len();
    let entries = rows.saturating_mul(cols);
    if entries > cap {
        return Err(Error::Size(format!("dense system matrix would need {entries} entries, cap is {cap}")));
    }
    let mut data = vec![0.0; entries];
    for (view, st) in steppers(geom).iter().enumerate() {
        for bin in 0..geom.n_bins {
            let row = &mut data[(view * geom.n_bins + bin) * cols..][..cols];
            st.for_each_weight(&geom.grid, geom.bin_center(bin), |p, w| row[p] += w);
        }
    }
    Ok(DenseMatrix { rows, cols, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_geometry;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(grid: ImageGrid, rng: &mut ChaCha8Rng) -> Image {
        Image::from_fn(grid, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_image_gives_zero_sinogram() {
        let grid = ImageGrid::square(8, 1.0).unwrap();
        let geom = make_geometry(6, 12, 1.0, grid).unwrap();
        let sino = forward_project(&Image::zeros(grid), &geom).unwrap();
        assert!(sino.values().iter().all(|&v| v == 0.0));
        let back = back_project(&Sinogram::zeros(geom));
        assert!(back.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_pixel_one_ray() {
        let grid = ImageGrid::square(1, 2.5).unwrap();
        let geom = make_geometry(1, 1, 1.0, grid).unwrap();
        let m = system_matrix_dense(&geom).unwrap();
        assert_eq!((m.rows, m.cols), (1, 1));
        assert_eq!(m.data, vec![2.5]);
    }

    // Dense point sampling along the ray of a piecewise-constant image.
    fn sampled_line_integral(img: &Image, theta: f64, s: f64, samples: usize) -> f64 {
        let g = img.grid();
        let half = 0.5 * ((g.width.pow(2) + g.height.pow(2)) as f64).sqrt() * g.pixel_size;
        let dt = 2.0 * half / samples as f64;
        let (st, ct) = theta.sin_cos();
        let mut acc = 0.0;
        for k in 0..samples {
            let t = -half + (k as f64 + 0.5) * dt;
            let x = s * ct - t * st;
            let y = s * st + t * ct;
            let col = (x / g.pixel_size + g.width as f64 * 0.5).floor();
            let row = (g.height as f64 * 0.5 - y / g.pixel_size).floor();
            if col >= 0.0 && row >= 0.0 && (col as usize) < g.width && (row as usize) < g.height {
                acc += img.get(row as usize, col as usize) * dt;
            }
        }
        acc
    }

    #[test]
    fn column_aligned_ray_through_ones() {
        let grid = ImageGrid::square(2, 1.0).unwrap();
        let img = Image::filled(grid, 1.0);
        let geom = make_geometry(1, 2, 1.0, grid).unwrap();
        let sino = forward_project(&img, &geom).unwrap();
        let oracle = sampled_line_integral(&img, 0.0, geom.bin_center(0), 10_000);
        assert!((oracle - 2.0).abs() < 1e-3);
        assert!((sino.get(0, 0) - 2.0).abs() < 1e-12);
        assert!((sino.get(0, 1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn linear_in_image() {
        let grid = ImageGrid::square(16, 0.7).unwrap();
        let geom = make_geometry(12, 25, 0.6, grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_image(grid, &mut rng);
        let a = forward_project(&x, &geom).unwrap();
        let b = forward_project(&x.scaled(2.0), &geom).unwrap();
        for (p, q) in a.values().iter().zip(b.values()) {
            assert_eq!(2.0 * p, *q);
        }
    }

    #[test]
    fn single_ray_backprojects_to_its_weights() {
        let grid = ImageGrid::square(4, 1.0).unwrap();
        let geom = make_geometry(3, 6, 0.8, grid).unwrap();
        let dense = system_matrix_dense(&geom).unwrap();
        for bin in 0..geom.n_bins {
            let mut values = vec![0.0; geom.n_rays()];
            values[bin] = 1.0;
            let back = back_project_with(&Sinogram::new(geom.clone(), values).unwrap(), Execution::Sequential);
            let row = dense.row(bin);
            for (p, (&b, &w)) in back.values().iter().zip(row).enumerate() {
                assert_eq!(b != 0.0, w != 0.0, "pixel {p}");
                assert!((b - w).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dense_matches_operator() {
        let grid = ImageGrid::square(8, 1.0).unwrap();
        let geom = make_geometry(10, 13, 1.0, grid).unwrap();
        let dense = system_matrix_dense(&geom).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_image(grid, &mut rng);
        let via_dense = dense.mul_vec(x.values());
        let via_op = forward_project(&x, &geom).unwrap();
        let tol = 1e-12 * x.max_abs();
        for (a, b) in via_dense.iter().zip(via_op.values()) {
            assert!((a - b).abs() < tol);
        }
        let ones = forward_project(&Image::filled(grid, 1.0), &geom).unwrap();
        for r in 0..dense.rows {
            let sum: f64 = dense.row(r).iter().sum();
            assert!((sum - ones.values()[r]).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_cap_enforced() {
        let grid = ImageGrid::square(8, 1.0).unwrap();
        let geom = make_geometry(10, 13, 1.0, grid).unwrap();
        assert!(matches!(system_matrix_dense_capped(&geom, 100), Err(Error::Size(_))));
    }

    #[test]
    fn grid_mismatch_rejected() {
        let grid = ImageGrid::square(8, 1.0).unwrap();
        let other = ImageGrid::square(9, 1.0).unwrap();
        let geom = make_geometry(4, 13, 1.0, grid).unwrap();
        assert!(matches!(forward_project(&Image::zeros(other), &geom), Err(Error::Validation(_))));
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let grid = ImageGrid::square(20, 1.0).unwrap();
        let geom = make_geometry(30, 29, 1.0, grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_image(grid, &mut rng);
        let s1 = forward_project_with(&x, &geom, Execution::Sequential).unwrap();
        let s2 = forward_project_with(&x, &geom, Execution::Parallel).unwrap();
        assert_eq!(s1, s2);
        let b1 = back_project_with(&s1, Execution::Sequential);
        let b2 = back_project_with(&s1, Execution::Parallel);
        let scale = b1.max_abs();
        for (a, b) in b1.values().iter().zip(b2.values()) {
            assert!((a - b).abs() <= 1e-10 * scale);
        }
    }
}
