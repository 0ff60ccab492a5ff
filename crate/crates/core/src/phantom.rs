//! Synthetic ellipse phantoms with exact rasterisation and analytic sinograms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Image, ImageGrid, ParallelGeometry, Sinogram};

/// A filled ellipse in physical coordinates (mm).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    /// Semi-axis along the ellipse's own x axis.
    pub a: f64,
    /// Semi-axis along the ellipse's own y axis.
    pub b: f64,
    /// Counter-clockwise rotation of the ellipse axes, radians.
    pub phi: f64,
    /// Additive attenuation inside the ellipse, mm⁻¹.
    pub value: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.phi.sin_cos();
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u * u) / (self.a * self.a) + (v * v) / (self.b * self.b) <= 1.0
    }

    /// Exact line integral along `x·cosθ + y·sinθ = s`.
    pub fn line_integral(&self, theta: f64, s: f64) -> f64 {
        let (st, ct) = theta.sin_cos();
        let shifted = s - (self.cx * ct + self.cy * st);
        let alpha = theta - self.phi;
        let (sa, ca) = alpha.sin_cos();
        let half_width_sq = self.a * self.a * ca * ca + self.b * self.b * sa * sa;
        let d = half_width_sq - shifted * shifted;
        if d <= 0.0 {
            0.0
        } else {
            2.0 * self.value * self.a * self.b * d.sqrt() / half_width_sq
        }
    }
}

/// Intensity convention for the Shepp–Logan head phantom.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SheppLoganVariant {
    /// Original intensities (skull 2.0, brain 1.02).
    #[default]
    Standard,
    /// High-contrast intensities popularised by Toft.
    Modified,
}

// (x0, y0, a, b, phi_deg) on the unit square [-1, 1]², followed by the
// standard and modified intensities.
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64, f64); 10] = [
    (0.0, 0.0, 0.69, 0.92, 0.0, 2.0, 1.0),
    (0.0, -0.0184, 0.6624, 0.874, 0.0, -0.98, -0.8),
    (0.22, 0.0, 0.11, 0.31, -18.0, -0.02, -0.2),
    (-0.22, 0.0, 0.16, 0.41, 18.0, -0.02, -0.2),
    (0.0, 0.35, 0.21, 0.25, 0.0, 0.01, 0.1),
    (0.0, 0.1, 0.046, 0.046, 0.0, 0.01, 0.1),
    (0.0, -0.1, 0.046, 0.046, 0.0, 0.01, 0.1),
    (-0.08, -0.605, 0.046, 0.023, 0.0, 0.01, 0.1),
    (0.0, -0.606, 0.023, 0.023, 0.0, 0.01, 0.1),
    (0.06, -0.605, 0.023, 0.046, 0.0, 0.01, 0.1),
];

/// The ten Shepp–Logan ellipses scaled to a field of half-width
/// `half_extent` mm, intensities multiplied by `scale`.
pub fn shepp_logan_ellipses(variant: SheppLoganVariant, half_extent: f64, scale: f64) -> Vec<Ellipse> {
    SHEPP_LOGAN
        .iter()
        .map(|&(x0, y0, a, b, phi_deg, standard, modified)| Ellipse {
            cx: x0 * half_extent,
            cy: y0 * half_extent,
            a: a * half_extent,
            b: b * half_extent,
            phi: phi_deg.to_radians(),
            value: scale
                * match variant {
                    SheppLoganVariant::Standard => standard,
                    SheppLoganVariant::Modified => modified,
                },
        })
        .collect()
}

/// Standard Shepp–Logan phantom filling the grid.
///
/// Each pixel holds `scale` times the summed intensities of the ellipses
/// containing its centre.
pub fn shepp_logan(grid: ImageGrid, scale: f64) -> Result<Image> {
    shepp_logan_variant(grid, scale, SheppLoganVariant::Standard)
}

pub fn shepp_logan_variant(grid: ImageGrid, scale: f64, variant: SheppLoganVariant) -> Result<Image> {
    grid.validate()?;
    check_scale(scale)?;
    Ok(rasterize(&shepp_logan_ellipses(variant, grid.half_extent(), scale), grid))
}

/// Uniform disk of `value` mm⁻¹ and `radius` mm centred on the origin.
pub fn disk(grid: ImageGrid, radius: f64, value: f64) -> Result<Image> {
    grid.validate()?;
    if !(radius > 0.0) {
        return Err(Error::validation(format!("disk radius must be positive, got {radius}")));
    }
    Ok(rasterize(&[disk_ellipse(radius, value)], grid))
}

pub fn disk_ellipse(radius: f64, value: f64) -> Ellipse {
    Ellipse { cx: 0.0, cy: 0.0, a: radius, b: radius, phi: 0.0, value }
}

/// Point-sampled rasterisation at pixel centres.
pub fn rasterize(ellipses: &[Ellipse], grid: ImageGrid) -> Image {
    Image::from_fn(grid, |row, col| {
        let x = grid.x_center(col);
        let y = grid.y_center(row);
        ellipses.iter().filter(|e| e.contains(x, y)).map(|e| e.value).sum()
    })
}

/// Exact Radon transform of a set of ellipses, sampled at bin centres.
pub fn analytic_sinogram(ellipses: &[Ellipse], geom: &ParallelGeometry) -> Sinogram {
    let mut values = Vec::with_capacity(geom.n_rays());
    for &theta in &geom.angles {
        for bin in 0..geom.n_bins {
            let s = geom.bin_center(bin);
            values.push(ellipses.iter().map(|e| e.line_integral(theta, s)).sum());
        }
    }
    Sinogram::from_raw(geom.clone(), values)
}

fn check_scale(scale: f64) -> Result<()> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::validation(format!("phantom scale must be positive, got {scale}")));
    }
    Ok(())
}
