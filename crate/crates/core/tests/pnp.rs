use pnpct::dose::simulate_low_dose;
use pnpct::pnp::{apply_plugin, run_cascade, run_plugin_ablation, score_mu_sigma2, select_mu_sigma2, Initializer};
use pnpct::{
    cg_x_update, fbp_reconstruct, forward_project, make_geometry, nps_distance, pnp_reconstruct, shepp_logan, CgConfig,
    FbpFilter, Image, ImageGrid, NoiseModel, ParallelGeometry, PluginSpec, PnpConfig, Sinogram,
};

fn problem(n: usize, views: usize, seed: u64) -> (Image, Sinogram) {
    let grid = ImageGrid::square(n, 1.0).unwrap();
    let truth = shepp_logan(grid, 0.02).unwrap();
    let geom = make_geometry(views, ParallelGeometry::covering_bins(&grid, 1.0), 1.0, grid).unwrap();
    let clean = forward_project(&truth, &geom).unwrap();
    let low = simulate_low_dose(&clean, &NoiseModel::new(1e5, 0.1, seed).unwrap()).unwrap();
    (truth, low.sinogram)
}

fn linf(a: &Image, b: &Image) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn identity_cascade_equals_sequential_x_updates() {
    let (_, y) = problem(32, 40, 1);
    let init = fbp_reconstruct(&y, FbpFilter::Hann).unwrap();
    let schedule = vec![5e3, 7e3, 8e3];
    let cfg = PnpConfig::new(schedule.clone(), vec![PluginSpec::identity(); 3])
        .with_initializer(Initializer::Provided(init.clone()));
    let out = pnp_reconstruct(&y, &cfg).unwrap();

    let mut x = init;
    for mu in schedule {
        let v = x.clone();
        x = cg_x_update(&y, &v, mu, &x, &cfg.cg).unwrap().image;
    }
    assert_eq!(out.image, x);
    assert_eq!(out.trace.len(), 3);
}

#[test]
fn stronger_coupling_keeps_x_closer_to_v() {
    let (_, y) = problem(32, 40, 2);
    let v = fbp_reconstruct(&y, FbpFilter::Hann).unwrap().map(|p| p * 0.5);
    let cfg = CgConfig { max_iters: 200, rel_tolerance: 1e-10 };
    let mut last = f64::INFINITY;
    for mu in [1e2, 1e3, 1e4, 1e5] {
        let x = cg_x_update(&y, &v, mu, &v, &cfg).unwrap().image;
        let d: f64 = x.values().iter().zip(v.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(d < last, "mu {mu}: {d} !< {last}");
        last = d;
    }
}

#[test]
fn builtin_cascade_is_bitwise_reproducible() {
    let (_, y) = problem(32, 40, 3);
    let cfg = PnpConfig::new(
        vec![5e3, 7e3, 8e3],
        vec![PluginSpec::gaussian(1.0), PluginSpec::tv(0.05), PluginSpec::median(1)],
    );
    let a = pnp_reconstruct(&y, &cfg).unwrap();
    let b = pnp_reconstruct(&y, &cfg).unwrap();
    assert_eq!(a.image, b.image);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn huge_coupling_returns_the_initializer() {
    let (_, y) = problem(32, 40, 4);
    let init = fbp_reconstruct(&y, FbpFilter::RamLak).unwrap();
    let cfg =
        PnpConfig::new(vec![1e12], vec![PluginSpec::identity()]).with_initializer(Initializer::Provided(init.clone()));
    let out = pnp_reconstruct(&y, &cfg).unwrap();
    let num: f64 = out.image.values().iter().zip(init.values()).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = init.values().iter().map(|v| v * v).sum();
    assert!((num / den).sqrt() < 1e-5);
}

#[test]
fn intermediates_match_trace_checksums() {
    let (_, y) = problem(32, 40, 5);
    let mut cfg = PnpConfig::new(vec![5e3, 7e3], vec![PluginSpec::gaussian(1.0), PluginSpec::tv(0.05)])
        .with_initializer(Initializer::Fbp(FbpFilter::Hann));
    cfg.keep_intermediates = true;
    let out = pnp_reconstruct(&y, &cfg).unwrap();
    assert_eq!(out.intermediates.len(), 2);
    for (rec, imgs) in out.trace.records.iter().zip(&out.intermediates) {
        assert_eq!(rec.dl_checksum, pnpct::pnp::image_checksum(&imgs.dl));
        assert_eq!(rec.pnp_checksum, pnpct::pnp::image_checksum(&imgs.pnp));
    }
    assert_eq!(out.intermediates[1].pnp, out.image);
    assert_eq!(out.trace.records[1].mu_sigma2, 7e3);
}

#[test]
fn cascade_from_explicit_start_matches_provided_initializer() {
    let (_, y) = problem(32, 40, 6);
    let init = fbp_reconstruct(&y, FbpFilter::Hann).unwrap();
    let cfg = PnpConfig::new(vec![5e3], vec![PluginSpec::tv(0.05)]);
    let a = run_cascade(&y, init.clone(), &cfg).unwrap();
    let b = pnp_reconstruct(&y, &cfg.clone().with_initializer(Initializer::Provided(init))).unwrap();
    assert_eq!(a.image, b.image);
}

#[test]
fn mu_sigma2_selection_matches_exhaustive_search() {
    let (truth, y) = problem(48, 60, 7);
    let grid = *truth.grid();
    let geom = y.geometry().clone();
    let clean = forward_project(&truth, &geom).unwrap();
    let full = simulate_low_dose(&clean, &NoiseModel::new(1e5, 1.0, 70).unwrap()).unwrap().sinogram;
    let reference = fbp_reconstruct(&full, FbpFilter::Hann).unwrap();
    let v = apply_plugin(&fbp_reconstruct(&y, FbpFilter::Hann).unwrap(), &PluginSpec::tv(0.05), 0).unwrap();
    let cfg = CgConfig::default();
    let candidates = [1e2, 5e3, 1e6];

    let mut best = (f64::NAN, f64::INFINITY);
    for &mu in &candidates {
        let x = cg_x_update(&y, &v, mu, &v, &cfg).unwrap().image;
        let d = nps_distance(&x, &reference).unwrap();
        if d < best.1 || (d == best.1 && mu > best.0) {
            best = (mu, d);
        }
    }
    assert_eq!(select_mu_sigma2(&y, &v, &reference, &candidates, &cfg).unwrap(), best.0);
    let scored = score_mu_sigma2(&y, &v, &reference, &candidates, &cfg).unwrap();
    assert_eq!(scored.len(), 3);
    assert!(scored.iter().all(|(_, d)| d.is_finite() && *d >= 0.0));
    assert_eq!(Image::zeros(grid).width(), 48);
}

#[test]
fn ablation_swaps_in_the_first_plugin() {
    let (_, y) = problem(32, 40, 8);
    let plugins = vec![PluginSpec::gaussian(1.0), PluginSpec::tv(0.05), PluginSpec::tv(0.05)];
    let cfg = PnpConfig::new(vec![5e3, 7e3, 8e3], plugins).with_initializer(Initializer::Fbp(FbpFilter::Hann));
    let out = run_plugin_ablation(&y, &cfg).unwrap();
    assert_eq!(out.proposed.trace.labels(), ["gaussian:1", "tv:0.05", "tv:0.05"]);
    assert_eq!(out.fixed_first.trace.labels(), ["gaussian:1", "gaussian:1", "gaussian:1"]);
    assert!(linf(&out.proposed.image, &out.fixed_first.image) > 1e-9);
    // Loop 1 is shared, so its checksums agree.
    assert_eq!(out.proposed.trace.records[0], out.fixed_first.trace.records[0]);

    let same = PnpConfig::new(vec![5e3, 7e3, 8e3], vec![PluginSpec::tv(0.05); 3])
        .with_initializer(Initializer::Fbp(FbpFilter::Hann));
    let out = run_plugin_ablation(&y, &same).unwrap();
    assert_eq!(out.proposed.image, out.fixed_first.image);
}

#[test]
fn plugin_failure_keeps_the_partial_trace() {
    let (_, y) = problem(32, 40, 9);
    let cfg = PnpConfig::new(
        vec![5e3, 7e3, 8e3],
        vec![PluginSpec::tv(0.05), PluginSpec::external("exit 3"), PluginSpec::tv(0.05)],
    )
    .with_initializer(Initializer::Fbp(FbpFilter::Hann));
    let failure = pnp_reconstruct(&y, &cfg).unwrap_err();
    assert_eq!(failure.loop_index, Some(1));
    assert_eq!(failure.trace.len(), 1);
    assert_eq!(failure.error.exit_code(), 4);
}

#[test]
fn plugins_preserve_constants() {
    let img = Image::filled(ImageGrid::new(12, 9, 0.5).unwrap(), 0.02);
    for spec in ["identity", "gaussian:1.5", "tv:0.05", "median:2"] {
        let spec: PluginSpec = spec.parse().unwrap();
        let out = apply_plugin(&img, &spec, 0).unwrap();
        assert!(linf(&out, &img) <= 1e-12, "{}", spec.label);
    }
}
