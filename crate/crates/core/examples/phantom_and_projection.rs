//! Rasterise a Shepp–Logan phantom, project it, and compare against the
//! analytic line integrals of the same ellipses.

use pnpct::phantom::{analytic_sinogram, shepp_logan_ellipses};
use pnpct::{
    back_project, forward_project, make_geometry, shepp_logan, ImageGrid, ParallelGeometry, Result, SheppLoganVariant,
};

fn main() -> Result<()> {
    let grid = ImageGrid::square(128, 1.0)?;
    let phantom = shepp_logan(grid, 0.02)?;
    let geom = make_geometry(180, ParallelGeometry::covering_bins(&grid, 1.0), 1.0, grid)?;

    let sino = forward_project(&phantom, &geom)?;
    let exact = analytic_sinogram(&shepp_logan_ellipses(SheppLoganVariant::Standard, grid.half_extent(), 0.02), &geom);
    let peak = exact.values().iter().cloned().fold(0.0, f64::max);
    let worst = sino.values().iter().zip(exact.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("{} views x {} bins", geom.n_views(), geom.n_bins);
    println!("peak line integral {peak:.4}, worst deviation from analytic {worst:.4}");

    let bp = back_project(&sino);
    println!("back-projection range {:?}", bp.min_max());
    Ok(())
}
