//! Poisson dose reduction: how per-ray variance and FBP quality scale with dose.

use pnpct::{
    fbp_reconstruct, forward_project, make_geometry, psnr, shepp_logan, simulate_low_dose, FbpFilter, ImageGrid,
    NoiseModel, ParallelGeometry, Result,
};

fn main() -> Result<()> {
    let grid = ImageGrid::square(128, 1.0)?;
    let truth = shepp_logan(grid, 0.02)?;
    let geom = make_geometry(180, ParallelGeometry::covering_bins(&grid, 1.0), 1.0, grid)?;
    let clean = forward_project(&truth, &geom)?;
    let (lo, hi) = truth.min_max();

    for fraction in [1.0, 0.5, 0.25, 0.1, 0.05] {
        let low = simulate_low_dose(&clean, &NoiseModel::new(1e5, fraction, 7)?)?;
        let resid: Vec<f64> = low.sinogram.values().iter().zip(clean.values()).map(|(a, b)| a - b).collect();
        let var = resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64;
        let img = fbp_reconstruct(&low.sinogram, FbpFilter::Hann)?;
        println!(
            "dose {:5.1}%  sinogram noise variance {var:.3e}  FBP PSNR {}  starved bins {}",
            fraction * 100.0,
            psnr(&img, &truth, hi - lo)?,
            low.stats.photon_starved
        );
    }
    Ok(())
}
