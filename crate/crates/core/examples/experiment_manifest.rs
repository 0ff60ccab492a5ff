//! A small comparison run driven by a TOML manifest.

use pnpct::experiment::{run_experiment, ExperimentManifest};
use pnpct::Result;

const MANIFEST: &str = r#"
[phantom]
kind = "shepp-logan"
size = 128

[geometry]
views = 180

[noise]
i0_full = 1e5
dose_fraction = 0.1
seed = 11

[reference]
weight = 0.1

[[variants]]
name = "fbp"
kind = "fbp"

[[variants]]
name = "fbp_smooth"
kind = "fbp"
smooth_sigma_px = 1.5

[[variants]]
name = "tv"
kind = "tv"
tv = { weight = 0.25 }

[[variants]]
name = "pnp"
kind = "pnp"
plugins = ["tv:0.02", "tv:0.02", "tv:0.02"]
init_tv = { weight = 0.25 }
"#;

fn main() -> Result<()> {
    let manifest = ExperimentManifest::from_toml(MANIFEST)?;
    let dir = tempfile::tempdir()?;
    let report = run_experiment(&manifest, dir.path(), false)?;
    print!("{}", report.to_csv());
    Ok(())
}
