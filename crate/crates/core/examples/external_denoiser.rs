//! Running the cascade with denoisers hosted in separate processes.
//!
//! Uses the reference plugin built into the `pnpct` binary; build it first
//! with `cargo build`, or pass another binary path as the first argument.

use std::path::PathBuf;

use pnpct::pnp::{ExternalMode, Initializer};
use pnpct::{
    forward_project, make_geometry, pnp_reconstruct, shepp_logan, simulate_low_dose, Error, FbpFilter, ImageGrid,
    NoiseModel, ParallelGeometry, PluginSpec, PnpConfig, Result,
};

fn pnpct_binary() -> PathBuf {
    if let Some(p) = std::env::args().nth(1) {
        return p.into();
    }
    // target/<profile>/examples/<this> → target/<profile>/pnpct
    let exe = std::env::current_exe().expect("current exe");
    exe.parent().and_then(|p| p.parent()).expect("target dir").join("pnpct")
}

fn main() -> Result<()> {
    let bin = pnpct_binary();
    let grid = ImageGrid::square(64, 1.0)?;
    let geom = make_geometry(90, ParallelGeometry::covering_bins(&grid, 1.0), 1.0, grid)?;
    let clean = forward_project(&shepp_logan(grid, 0.02)?, &geom)?;
    let low = simulate_low_dose(&clean, &NoiseModel::new(1e5, 0.1, 2)?)?.sinogram;

    let endpoint = format!("'{}' plugin-serve --mode 'loopmap:0=gaussian:1.0;1=tv:0.02;2=tv:0.02'", bin.display());
    let mut cfg = PnpConfig::new(vec![5e3, 7e3, 8e3], vec![PluginSpec::external(endpoint); 3])
        .with_initializer(Initializer::Fbp(FbpFilter::Hann));
    cfg.external_mode = ExternalMode::Persistent;
    let remote = pnp_reconstruct(&low, &cfg).map_err(Error::from)?;

    let local_cfg =
        PnpConfig { plugins: vec![PluginSpec::gaussian(1.0), PluginSpec::tv(0.02), PluginSpec::tv(0.02)], ..cfg };
    let local = pnp_reconstruct(&low, &local_cfg).map_err(Error::from)?;
    let gap = remote.image.values().iter().zip(local.image.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("external vs in-process max difference {gap:.3e}");
    Ok(())
}
