use pnpct::phantom::{analytic_sinogram, disk_ellipse, shepp_logan_ellipses, SheppLoganVariant};
use pnpct::{fbp_reconstruct, make_geometry, mse, shepp_logan, FbpFilter, ImageGrid, ParallelGeometry, Sinogram};

fn disk_sinogram(n: usize, views: usize, radius: f64, value: f64) -> Sinogram {
    let grid = ImageGrid::square(n, 1.0).unwrap();
    let geom = make_geometry(views, ParallelGeometry::covering_bins(&grid, 1.0), 1.0, grid).unwrap();
    analytic_sinogram(&[disk_ellipse(radius, value)], &geom)
}

#[test]
fn disk_centre_within_two_percent() {
    let sino = disk_sinogram(128, 512, 40.0, 0.02);
    for filter in [FbpFilter::RamLak, FbpFilter::SheppLogan] {
        let img = fbp_reconstruct(&sino, filter).unwrap();
        let centre = (img.get(63, 63) + img.get(63, 64) + img.get(64, 63) + img.get(64, 64)) / 4.0;
        assert!((centre - 0.02).abs() <= 0.02 * 0.02, "{filter}: {centre}");
    }
}

#[test]
fn dc_fidelity_over_disk_interior() {
    let sino = disk_sinogram(128, 720, 40.0, 0.02);
    let img = fbp_reconstruct(&sino, FbpFilter::RamLak).unwrap();
    let grid = *img.grid();
    let mut acc = (0.0, 0usize);
    for r in 0..grid.height {
        for c in 0..grid.width {
            if grid.x_center(c).hypot(grid.y_center(r)) < 35.0 {
                acc.0 += img.get(r, c);
                acc.1 += 1;
            }
        }
    }
    let mean = acc.0 / acc.1 as f64;
    assert!((mean - 0.02).abs() <= 0.02 * 0.02, "{mean}");
}

#[test]
fn rmse_decreases_with_view_count() {
    let grid = ImageGrid::square(256, 1.0).unwrap();
    let truth = shepp_logan(grid, 0.02).unwrap();
    let ellipses = shepp_logan_ellipses(SheppLoganVariant::Standard, grid.half_extent(), 0.02);
    let mut last = f64::INFINITY;
    for views in [45, 90, 180, 360, 720] {
        let geom = make_geometry(views, ParallelGeometry::covering_bins(&grid, 1.0), 1.0, grid).unwrap();
        let img = fbp_reconstruct(&analytic_sinogram(&ellipses, &geom), FbpFilter::RamLak).unwrap();
        let rmse = mse(&img, &truth).unwrap().sqrt();
        assert!(rmse < last, "{views} views: {rmse} !< {last}");
        last = rmse;
    }
}

#[test]
fn two_views_suffice_for_every_filter() {
    let sino = disk_sinogram(64, 2, 20.0, 0.02);
    for filter in [FbpFilter::RamLak, FbpFilter::SheppLogan, FbpFilter::Hann] {
        assert!(fbp_reconstruct(&sino, filter).unwrap().all_finite());
    }
}
