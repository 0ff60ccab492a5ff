//! Radial noise power spectra of white noise and of a smoothed copy, written
//! as CSV to stdout.

use pnpct::pnp::plugin::gaussian_blur;
use pnpct::{nps_compute, nps_distance, Image, ImageGrid, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let normal = Normal::new(0.0, 1e-3).unwrap();
    let noise = Image::from_fn(ImageGrid::square(128, 1.0)?, |_, _| normal.sample(&mut rng));
    let smooth = gaussian_blur(&noise, 1.5);

    let white = nps_compute(&noise)?;
    let blurred = nps_compute(&smooth)?;
    println!("freq,white,smoothed");
    for ((f, a), b) in white.radial_bins.iter().zip(&white.power).zip(&blurred.power).step_by(8) {
        println!("{f:.4},{a:.3e},{b:.3e}");
    }
    println!("high-frequency power: white {:.3e}, smoothed {:.3e}", white.hf_total, blurred.hf_total);
    println!("distance {:.3e}", nps_distance(&smooth, &noise)?);
    Ok(())
}
