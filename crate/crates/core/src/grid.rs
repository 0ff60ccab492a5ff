//! Image and sinogram containers plus the parallel-beam acquisition geometry.
//!
//! Coordinates are physical millimetres. The image grid is centred on the
//! origin with +x to the right and +y up, so row 0 of an image is the top
//! row. A view at angle `θ` measures line integrals along rays
//! `x·cosθ + y·sinθ = s`, where `s` is the signed detector coordinate and
//! the detector array is centred on the ray through the origin.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discretisation of the image plane: square pixels, centred on the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    pub width: usize,
    pub height: usize,
    /// Pixel edge length in mm.
    pub pixel_size: f64,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, pixel_size: f64) -> Result<Self> {
        let grid = ImageGrid { width, height, pixel_size };
        grid.validate()?;
        Ok(grid)
    }

    /// Square `n × n` grid.
    pub fn square(n: usize, pixel_size: f64) -> Result<Self> {
        Self::new(n, n, pixel_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::validation(format!(
                "image grid must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.pixel_size > 0.0) || !self.pixel_size.is_finite() {
            return Err(Error::validation(format!("pixel size must be positive and finite, got {}", self.pixel_size)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Physical x coordinate of the centre of column `col`.
    #[inline]
    pub fn x_center(&self, col: usize) -> f64 {
        (col as f64 - (self.width as f64 - 1.0) * 0.5) * self.pixel_size
    }

    /// Physical y coordinate of the centre of row `row` (row 0 is the top).
    #[inline]
    pub fn y_center(&self, row: usize) -> f64 {
        ((self.height as f64 - 1.0) * 0.5 - row as f64) * self.pixel_size
    }

    /// Half the smaller physical extent of the grid.
    pub fn half_extent(&self) -> f64 {
        0.5 * self.width.min(self.height) as f64 * self.pixel_size
    }
}

/// A 2D attenuation map in mm⁻¹, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    grid: ImageGrid,
    values: Vec<f64>,
}

impl Image {
    pub fn new(grid: ImageGrid, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(Error::validation(format!(
                "image has {} values but grid {}x{} needs {}",
                values.len(),
                grid.width,
                grid.height,
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!("non-finite image value at index {i}")));
        }
        Ok(Image { grid, values })
    }

    pub fn zeros(grid: ImageGrid) -> Self {
        Image { grid, values: vec![0.0; grid.len()] }
    }

    pub fn filled(grid: ImageGrid, value: f64) -> Self {
        Image { grid, values: vec![value; grid.len()] }
    }

    /// Builds an image by evaluating `f(row, col)` on every pixel.
    pub fn from_fn(grid: ImageGrid, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for row in 0..grid.height {
            for col in 0..grid.width {
                values.push(f(row, col));
            }
        }
        Image { grid, values }
    }

    /// Internal constructor for values produced by arithmetic on valid images.
    pub(crate) fn from_raw(grid: ImageGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Image { grid, values }
    }

    pub fn grid(&self) -> &ImageGrid {
        &self.grid
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.grid.width + col]
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, factor: f64) -> Image {
        self.map(|v| v * factor)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Minimum and maximum pixel value.
    pub fn min_max(&self) -> (f64, f64) {
        self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.grid.width == other.grid.width && self.grid.height == other.grid.height
    }
}

/// Parallel-beam geometry; fixes the discrete system matrix together with
/// the projector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParallelGeometry {
    /// View angles in radians.
    pub angles: Vec<f64>,
    pub n_bins: usize,
    /// Detector bin pitch in mm.
    pub bin_width: f64,
    pub grid: ImageGrid,
}

/// Uniform parallel-beam geometry with angles `k·π/n_views`.
pub fn make_geometry(n_views: usize, n_bins: usize, bin_width: f64, grid: ImageGrid) -> Result<ParallelGeometry> {
    if n_views == 0 {
        return Err(Error::validation("geometry needs at least one view"));
    }
    let angles = (0..n_views).map(|k| k as f64 * PI / n_views as f64).collect();
    ParallelGeometry::with_angles(angles, n_bins, bin_width, grid)
}

impl ParallelGeometry {
    /// Geometry with explicit view angles.
    pub fn with_angles(angles: Vec<f64>, n_bins: usize, bin_width: f64, grid: ImageGrid) -> Result<Self> {
        let geom = ParallelGeometry { angles, n_bins, bin_width, grid };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.angles.is_empty() {
            return Err(Error::validation("geometry needs at least one view"));
        }
        if self.n_bins == 0 {
            return Err(Error::validation("geometry needs at least one detector bin"));
        }
        if !(self.bin_width > 0.0) || !self.bin_width.is_finite() {
            return Err(Error::validation(format!("bin width must be positive and finite, got {}", self.bin_width)));
        }
        if self.angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::validation("view angles must be finite"));
        }
        Ok(())
    }

    pub fn n_views(&self) -> usize {
        self.angles.len()
    }

    /// Number of rays (`n_views · n_bins`).
    pub fn n_rays(&self) -> usize {
        self.angles.len() * self.n_bins
    }

    /// Signed detector coordinate of the centre of bin `bin`.
    #[inline]
    pub fn bin_center(&self, bin: usize) -> f64 {
        (bin as f64 - (self.n_bins as f64 - 1.0) * 0.5) * self.bin_width
    }

    /// Smallest odd bin count whose detector covers the grid diagonal.
    pub fn covering_bins(grid: &ImageGrid, bin_width: f64) -> usize {
        let diag = ((grid.width * grid.width + grid.height * grid.height) as f64).sqrt() * grid.pixel_size;
        let n = (diag / bin_width).ceil() as usize + 2;
        n | 1
    }
}

/// Post-log line integrals, view-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    geometry: ParallelGeometry,
    values: Vec<f64>,
}

impl Sinogram {
    pub fn new(geometry: ParallelGeometry, values: Vec<f64>) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.n_rays() {
            return Err(Error::validation(format!(
                "sinogram has {} values but geometry needs {}",
                values.len(),
                geometry.n_rays()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!("non-finite sinogram value at index {i}")));
        }
        Ok(Sinogram { geometry, values })
    }

    pub fn zeros(geometry: ParallelGeometry) -> Self {
        let n = geometry.n_rays();
        Sinogram { geometry, values: vec![0.0; n] }
    }

    pub(crate) fn from_raw(geometry: ParallelGeometry, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), geometry.n_rays());
        Sinogram { geometry, values }
    }

    pub fn geometry(&self) -> &ParallelGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Detector row for one view.
    pub fn view(&self, view: usize) -> &[f64] {
        let n = self.geometry.n_bins;
        &self.values[view * n..(view + 1) * n]
    }

    #[inline]
    pub fn get(&self, view: usize, bin: usize) -> f64 {
        self.values[view * self.geometry.n_bins + bin]
    }

    pub fn scaled(&self, factor: f64) -> Sinogram {
        Sinogram::from_raw(self.geometry.clone(), self.values.iter().map(|v| v * factor).collect())
    }
}
