//! TV-regularised reconstruction of a full-dose scan, the usual stand-in for
//! a clean reference image.

use pnpct::iterative::{tv_reconstruct_with, TvReconConfig};
use pnpct::{
    fbp_reconstruct, forward_project, make_geometry, psnr, shepp_logan, simulate_low_dose, FbpFilter, ImageGrid,
    NoiseModel, ParallelGeometry, Result, TvConfig,
};

fn main() -> Result<()> {
    let grid = ImageGrid::square(128, 1.0)?;
    let truth = shepp_logan(grid, 0.02)?;
    let geom = make_geometry(180, ParallelGeometry::covering_bins(&grid, 1.0), 1.0, grid)?;
    let clean = forward_project(&truth, &geom)?;
    let full = simulate_low_dose(&clean, &NoiseModel::new(1e5, 1.0, 1)?)?.sinogram;
    let (lo, hi) = truth.min_max();

    println!("FBP           PSNR {}", psnr(&fbp_reconstruct(&full, FbpFilter::RamLak)?, &truth, hi - lo)?);
    for weight in [0.05, 0.1, 0.25, 0.5] {
        let cfg = TvReconConfig { tv: TvConfig::new(weight, 50), ..TvReconConfig::default() };
        let img = tv_reconstruct_with(&full, &cfg)?;
        println!("TV weight {weight:<3} PSNR {}", psnr(&img, &truth, hi - lo)?);
    }
    Ok(())
}
