//! Raw f32 images with TOML descriptors, plus an 8-bit PNG preview.

use pnpct::io::{read_image_with_descriptor, write_image, write_png_preview, HuWindow, Provenance};
use pnpct::{shepp_logan, ImageGrid, Result};

fn main() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("phantom.f32");
    let img = shepp_logan(ImageGrid::square(64, 0.5)?, 0.02)?;
    write_image(&path, &img, &Provenance::content("shepp-logan").with_seed(0))?;
    write_png_preview(dir.path().join("phantom.png"), &img, &HuWindow::new(-1000.0, 1000.0, 0.02)?)?;

    let (back, desc) = read_image_with_descriptor(&path)?;
    println!("{}", toml::to_string(&desc).expect("descriptor serialises"));
    let worst = img.values().iter().zip(back.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("round-trip max error {worst:.2e} (f32 storage)");
    Ok(())
}
