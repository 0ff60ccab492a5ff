//! Choosing the coupling weight whose x-update best matches the noise texture
//! of a full-dose reference.

use pnpct::pnp::{apply_plugin, score_mu_sigma2, select_mu_sigma2};
use pnpct::{
    fbp_reconstruct, forward_project, make_geometry, shepp_logan, simulate_low_dose, CgConfig, FbpFilter, ImageGrid,
    NoiseModel, ParallelGeometry, PluginSpec, Result,
};

fn main() -> Result<()> {
    let grid = ImageGrid::square(96, 1.0)?;
    let truth = shepp_logan(grid, 0.02)?;
    let geom = make_geometry(120, ParallelGeometry::covering_bins(&grid, 1.0), 1.0, grid)?;
    let clean = forward_project(&truth, &geom)?;
    let full = simulate_low_dose(&clean, &NoiseModel::new(1e5, 1.0, 1)?)?.sinogram;
    let low = simulate_low_dose(&clean, &NoiseModel::new(1e5, 0.1, 2)?)?.sinogram;

    let reference = fbp_reconstruct(&full, FbpFilter::Hann)?;
    let v = apply_plugin(&fbp_reconstruct(&low, FbpFilter::Hann)?, &PluginSpec::tv(0.02), 0)?;
    let candidates = [1e2, 1e3, 5e3, 1e4, 1e5];
    let cg = CgConfig::default();
    for (mu, d) in score_mu_sigma2(&low, &v, &reference, &candidates, &cg)? {
        println!("mu_sigma2 {mu:>8}  NPS distance {d:.4e}");
    }
    println!("selected {}", select_mu_sigma2(&low, &v, &reference, &candidates, &cg)?);
    Ok(())
}
