//! Image-quality metrics: MSE, PSNR and the noise power spectrum.
//!
//! The NPS follows a texture-oriented recipe: a 4×4 box filter gives the
//! low-frequency part of an image, the residual is the high-frequency part,
//! and its mean-removed periodogram is averaged over rings of constant
//! radial frequency.

use std::fmt;
use std::io::Write;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Image;

fn check_shapes(a: &Image, b: &Image) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::validation(format!(
            "shape mismatch: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Mean squared difference.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    let sum: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).powi(2)).sum();
    Ok(sum / a.values().len() as f64)
}

/// Peak signal-to-noise ratio in dB.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Psnr {
    Finite(f64),
    /// The images are identical (zero MSE).
    Identical,
}

impl Psnr {
    pub fn db(self) -> Option<f64> {
        match self {
            Psnr::Finite(v) => Some(v),
            Psnr::Identical => None,
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v:.6}"),
            Psnr::Identical => f.write_str("identical"),
        }
    }
}

pub fn psnr(a: &Image, b: &Image, data_range: f64) -> Result<Psnr> {
    if !(data_range > 0.0) || !data_range.is_finite() {
        return Err(Error::validation(format!("PSNR data range must be positive, got {data_range}")));
    }
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(Psnr::Identical);
    }
    Ok(Psnr::Finite(10.0 * (data_range * data_range / m).log10()))
}

/// Radially averaged noise power spectrum of an image's high-frequency part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NpsResult {
    /// Ring centre frequencies, cycles/mm.
    pub radial_bins: Vec<f64>,
    /// Mean periodogram power in each ring.
    pub power: Vec<f64>,
    /// Total periodogram power over the full 2D spectrum.
    pub hf_total: f64,
}

impl NpsResult {
    /// Writes `freq_cycles_per_mm,power` rows with 9 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "freq_cycles_per_mm,power")?;
        for (f, p) in self.radial_bins.iter().zip(&self.power) {
            writeln!(out, "{f:.8e},{p:.8e}")?;
        }
        Ok(())
    }

    /// Bin-wise mean of several profiles over identical bins.
    pub fn average(profiles: &[NpsResult]) -> Result<NpsResult> {
        let first = profiles.first().ok_or_else(|| Error::validation("no NPS profiles to average"))?;
        if profiles.iter().any(|p| p.radial_bins != first.radial_bins) {
            return Err(Error::validation("NPS profiles have different radial bins"));
        }
        let n = profiles.len() as f64;
        let mut power = vec![0.0; first.power.len()];
        for p in profiles {
            for (acc, v) in power.iter_mut().zip(&p.power) {
                *acc += v;
            }
        }
        power.iter_mut().for_each(|v| *v /= n);
        Ok(NpsResult {
            radial_bins: first.radial_bins.clone(),
            power,
            hf_total: profiles.iter().map(|p| p.hf_total).sum::<f64>() / n,
        })
    }
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i - 1
    } else if i >= n {
        2 * n - i - 1
    } else {
        i
    };
    r as usize
}

/// 4×4 mean filter with half-sample symmetric boundaries.
///
/// An even kernel has no centre; output pixel `(r, c)` averages rows
/// `r−1..=r+2` and columns `c−1..=c+2`.
pub fn box_filter_4x4(img: &Image) -> Image {
    let (w, h) = (img.width(), img.height());
    let v = img.values();
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for dr in -1..=2isize {
                let rr = reflect(r as isize + dr, h);
                for dc in -1..=2isize {
                    acc += v[rr * w + reflect(c as isize + dc, w)];
                }
            }
            out[r * w + c] = acc / 16.0;
        }
    }
    Image::from_raw(*img.grid(), out)
}

/// Low/high split: `(box_filter_4x4(img), img − low)`.
pub fn split_frequencies(img: &Image) -> (Image, Image) {
    let low = box_filter_4x4(img);
    let high = img.values().iter().zip(low.values()).map(|(a, b)| a - b).collect();
    let high = Image::from_raw(*img.grid(), high);
    (low, high)
}

/// Unnormalised 2D DFT of a real row-major array.
pub(crate) fn fft2(values: &[f64], w: usize, h: usize) -> Vec<Complex<f64>> {
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(w);
    let col_fft = planner.plan_fft_forward(h);
    let mut data: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    for row in data.chunks_mut(w) {
        row_fft.process(row);
    }
    let mut column = vec![Complex::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            column[r] = data[r * w + c];
        }
        col_fft.process(&mut column);
        for r in 0..h {
            data[r * w + c] = column[r];
        }
    }
    data
}

/// Periodogram `|F|² / N` of the mean-removed array.
pub fn periodogram(values: &[f64], w: usize, h: usize) -> Vec<f64> {
    let n = (w * h) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let centred: Vec<f64> = values.iter().map(|v| v - mean).collect();
    fft2(&centred, w, h).iter().map(|c| c.norm_sqr() / n).collect()
}

fn signed_index(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

pub fn nps_compute(img: &Image) -> Result<NpsResult> {
    let (w, h) = (img.width(), img.height());
    if w < 8 || h < 8 {
        return Err(Error::validation(format!("NPS needs at least 8x8 pixels, got {w}x{h}")));
    }
    let ps = img.grid().pixel_size;
    let (_, high) = split_frequencies(img);
    let spectrum = periodogram(high.values(), w, h);
    let hf_total = spectrum.iter().sum();

    let df = 1.0 / (w.max(h) as f64 * ps);
    let mut sums: Vec<f64> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for r in 0..h {
        let fy = signed_index(r, h) / (h as f64 * ps);
        for c in 0..w {
            let fx = signed_index(c, w) / (w as f64 * ps);
            let bin = (fx.hypot(fy) / df).round() as usize;
            if bin >= sums.len() {
                sums.resize(bin + 1, 0.0);
                counts.resize(bin + 1, 0);
            }
            sums[bin] += spectrum[r * w + c];
            counts[bin] += 1;
        }
    }
    let (radial_bins, power) = sums
        .iter()
        .zip(&counts)
        .enumerate()
        .filter(|(_, (_, &n))| n > 0)
        .map(|(k, (s, &n))| (k as f64 * df, s / n as f64))
        .unzip();
    Ok(NpsResult { radial_bins, power, hf_total })
}

/// Euclidean distance between the radial NPS profiles of two images.
pub fn nps_distance(a: &Image, reference: &Image) -> Result<f64> {
    check_shapes(a, reference)?;
    let pa = nps_compute(a)?;
    let pb = nps_compute(reference)?;
    profile_distance(&pa, &pb)
}

/// Euclidean distance between two profiles with matching bins.
pub fn profile_distance(a: &NpsResult, b: &NpsResult) -> Result<f64> {
    if a.radial_bins.len() != b.radial_bins.len() {
        return Err(Error::validation("NPS profiles have different bin counts"));
    }
    Ok(a.power.iter().zip(&b.power).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ImageGrid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = ImageGrid::square(n, 1.0).unwrap();
        Image::from_fn(grid, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn mse_analytic_cases() {
        let a = noise(16, 1);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let b = a.map(|v| v + 0.1);
        assert!((mse(&a, &b).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn psnr_analytic_cases() {
        let a = noise(16, 2);
        let b = a.map(|v| v + 0.1);
        let p = psnr(&a, &b, 1.0).unwrap().db().unwrap();
        assert!((p - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), Psnr::Identical);
        assert!(psnr(&a, &b, 0.0).is_err());
        assert!(psnr(&a, &noise(8, 1), 1.0).is_err());
    }

    #[test]
    fn psnr_decreases_with_error() {
        let a = noise(16, 3);
        let mut last = f64::INFINITY;
        for k in 1..20 {
            let b = a.map(|v| v + 0.01 * k as f64);
            let p = psnr(&a, &b, 2.0).unwrap().db().unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn constant_image_has_no_high_frequency_power() {
        let grid = ImageGrid::square(32, 0.5).unwrap();
        let nps = nps_compute(&Image::filled(grid, 3.25)).unwrap();
        assert!(nps.power.iter().all(|&p| p == 0.0));
        assert_eq!(nps.hf_total, 0.0);
    }

    #[test]
    fn parseval_bookkeeping() {
        let img = noise(64, 4);
        let nps = nps_compute(&img).unwrap();
        let (_, high) = split_frequencies(&img);
        let mean = high.values().iter().sum::<f64>() / high.values().len() as f64;
        let spatial: f64 = high.values().iter().map(|v| (v - mean).powi(2)).sum();
        assert!((nps.hf_total - spatial).abs() <= 1e-9 * spatial);
    }

    #[test]
    fn bins_are_increasing_and_nonnegative() {
        let nps = nps_compute(&noise(40, 5)).unwrap();
        assert!(nps.radial_bins.windows(2).all(|w| w[1] > w[0]));
        assert!(nps.power.iter().all(|&p| p >= 0.0));
        assert_eq!(nps.radial_bins[0], 0.0);
    }

    #[test]
    fn box_filter_edge_convention() {
        let grid = ImageGrid::square(8, 1.0).unwrap();
        let img = Image::from_fn(grid, |_, c| c as f64);
        let low = box_filter_4x4(&img);
        // Columns -1, 0, 1, 2 reflect to 0, 0, 1, 2.
        assert!((low.get(3, 0) - 0.75).abs() < 1e-15);
        // Interior: columns 2..=5.
        assert!((low.get(3, 3) - 3.5).abs() < 1e-15);
        // Columns 6, 7, 8, 9 reflect to 6, 7, 7, 6.
        assert!((low.get(3, 7) - 6.5).abs() < 1e-15);
    }

    #[test]
    fn split_reconstructs_input() {
        let img = noise(32, 6);
        let (low, high) = split_frequencies(&img);
        for ((a, l), h) in img.values().iter().zip(low.values()).zip(high.values()) {
            assert!((l + h - a).abs() <= f64::EPSILON * l.abs().max(a.abs()));
        }
    }

    #[test]
    fn too_small_rejected() {
        assert!(matches!(nps_compute(&noise(7, 0)), Err(Error::Validation(_))));
    }

    #[test]
    fn distance_is_symmetric_and_zero_on_self() {
        let a = noise(32, 7);
        let b = noise(32, 8).scaled(2.0);
        assert_eq!(nps_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(nps_distance(&a, &b).unwrap(), nps_distance(&b, &a).unwrap());
        assert!(nps_distance(&a, &b).unwrap() > 0.0);
    }

    #[test]
    fn csv_format() {
        let nps = NpsResult { radial_bins: vec![0.0, 0.125], power: vec![1.5, 2.0 / 3.0], hf_total: 0.0 };
        let mut buf = Vec::new();
        nps.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "freq_cycles_per_mm,power\n0.00000000e0,1.50000000e0\n1.25000000e-1,6.66666667e-1\n");
    }
}
