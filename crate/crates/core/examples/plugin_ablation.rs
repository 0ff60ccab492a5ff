//! Loop-specific denoisers versus reusing the first loop's denoiser everywhere.

use pnpct::pnp::{run_plugin_ablation, Initializer};
use pnpct::{
    forward_project, make_geometry, psnr, shepp_logan, simulate_low_dose, Error, FbpFilter, ImageGrid, NoiseModel,
    ParallelGeometry, PluginSpec, PnpConfig, Result,
};

fn main() -> Result<()> {
    let grid = ImageGrid::square(96, 1.0)?;
    let truth = shepp_logan(grid, 0.02)?;
    let geom = make_geometry(120, ParallelGeometry::covering_bins(&grid, 1.0), 1.0, grid)?;
    let low = simulate_low_dose(&forward_project(&truth, &geom)?, &NoiseModel::new(1e5, 0.1, 3)?)?.sinogram;
    let (lo, hi) = truth.min_max();

    let plugins = vec![PluginSpec::gaussian(1.0), PluginSpec::tv(0.02), PluginSpec::tv(0.01)];
    let cfg = PnpConfig::new(vec![5e3, 7e3, 8e3], plugins).with_initializer(Initializer::Fbp(FbpFilter::Hann));
    let out = run_plugin_ablation(&low, &cfg).map_err(Error::from)?;
    for (name, run) in [("loop-specific", &out.proposed), ("first-only", &out.fixed_first)] {
        println!("{name:14} {:?}  PSNR {}", run.trace.labels(), psnr(&run.image, &truth, hi - lo)?);
    }
    Ok(())
}
