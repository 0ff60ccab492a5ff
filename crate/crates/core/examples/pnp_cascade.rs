//! Three-loop plug-and-play reconstruction of a 10% dose scan, printing the
//! per-loop trace.

use pnpct::iterative::TvReconConfig;
use pnpct::pnp::Initializer;
use pnpct::{
    fbp_reconstruct, forward_project, make_geometry, pnp_reconstruct, psnr, shepp_logan, simulate_low_dose, Error,
    FbpFilter, ImageGrid, NoiseModel, ParallelGeometry, PluginSpec, PnpConfig, Result, TvConfig,
};

fn main() -> Result<()> {
    let grid = ImageGrid::square(128, 1.0)?;
    let truth = shepp_logan(grid, 0.02)?;
    let geom = make_geometry(180, ParallelGeometry::covering_bins(&grid, 1.0), 1.0, grid)?;
    let clean = forward_project(&truth, &geom)?;
    let low = simulate_low_dose(&clean, &NoiseModel::new(1e5, 0.1, 2)?)?.sinogram;
    let (lo, hi) = truth.min_max();

    let cfg = PnpConfig::new(vec![5e3, 7e3, 8e3], vec![PluginSpec::tv(0.02); 3])
        .with_initializer(Initializer::Tv(TvReconConfig { tv: TvConfig::new(0.25, 50), ..TvReconConfig::default() }));
    let out = pnp_reconstruct(&low, &cfg).map_err(Error::from)?;
    for rec in &out.trace.records {
        println!(
            "loop {}  {:10}  mu_sigma2 {:>6}  CG {:2} iters, residual {:.2e}",
            rec.loop_index, rec.plugin_label, rec.mu_sigma2, rec.cg_iterations, rec.cg_rel_residual
        );
    }
    println!("FBP PSNR {}", psnr(&fbp_reconstruct(&low, FbpFilter::RamLak)?, &truth, hi - lo)?);
    println!("PnP PSNR {}", psnr(&out.image, &truth, hi - lo)?);
    Ok(())
}
