//! Filtered back-projection of a noiseless scan with each window.

use pnpct::{
    fbp_reconstruct, forward_project, make_geometry, psnr, shepp_logan, FbpFilter, ImageGrid, ParallelGeometry, Result,
};

fn main() -> Result<()> {
    let grid = ImageGrid::square(128, 1.0)?;
    let truth = shepp_logan(grid, 0.02)?;
    let (lo, hi) = truth.min_max();
    for views in [45, 90, 180, 360] {
        let geom = make_geometry(views, ParallelGeometry::covering_bins(&grid, 1.0), 1.0, grid)?;
        let sino = forward_project(&truth, &geom)?;
        for filter in [FbpFilter::RamLak, FbpFilter::SheppLogan, FbpFilter::Hann] {
            let img = fbp_reconstruct(&sino, filter)?;
            println!("{views:4} views  {filter:12}  PSNR {}", psnr(&img, &truth, hi - lo)?);
        }
    }
    Ok(())
}
