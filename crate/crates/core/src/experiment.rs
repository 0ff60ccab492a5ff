//! Manifest-driven comparison runs.
//!
//! A run builds a phantom, projects it, simulates a full-dose and a
//! low-dose scan, reconstructs a full-dose reference and then every variant
//! from the low-dose scan, and scores each variant:
//!
//! - MSE and PSNR against the phantom,
//! - NPS distance against the full-dose reference.
//!
//! ```toml
//! [phantom]
//! kind = "shepp-logan"
//! size = 128
//! scale = 0.02
//!
//! [geometry]
//! views = 180
//!
//! [noise]
//! i0_full = 1e5
//! dose_fraction = 0.1
//! seed = 7
//!
//! [[variants]]
//! name = "fbp"
//! kind = "fbp"
//! filter = "ram-lak"
//!
//! [[variants]]
//! name = "pnp"
//! kind = "pnp"
//! mu_sigma2 = [5e3, 7e3, 8e3]
//! plugins = ["tv:0.05", "tv:0.05", "tv:0.05"]
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dose::{simulate_low_dose, NoiseModel};
use crate::error::{Error, Result};
use crate::fbp::{fbp_reconstruct, FbpFilter};
use crate::grid::{make_geometry, Image, ImageGrid, ParallelGeometry, Sinogram};
use crate::io::{write_atomic, write_image, write_sinogram, Provenance};
use crate::iterative::{tv_reconstruct_with, CgConfig, CouplingRamp, TvConfig, TvReconConfig};
use crate::metrics::{mse, nps_compute, profile_distance, psnr, NpsResult, Psnr};
use crate::phantom::{disk, shepp_logan_variant, SheppLoganVariant};
use crate::pnp::plugin::gaussian_blur;
use crate::pnp::{pnp_reconstruct, ExternalMode, Initializer, PluginKind, PluginSpec, PnpConfig, DEFAULT_SCHEDULE};
use crate::projector::forward_project;

pub const METRICS_HEADER: &str = "variant,mse,psnr,nps_distance,status";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomKind {
    SheppLogan,
    ModifiedSheppLogan,
    Disk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub size: usize,
    #[serde(default = "one")]
    pub pixel_size_mm: f64,
    /// Attenuation of the brightest structure, in mm⁻¹.
    #[serde(default = "default_scale")]
    pub scale: f64,
    /// Disk radius as a fraction of the half-width.
    #[serde(default = "default_radius")]
    pub radius_fraction: f64,
}

impl PhantomSpec {
    pub fn grid(&self) -> Result<ImageGrid> {
        ImageGrid::square(self.size, self.pixel_size_mm)
    }

    pub fn build(&self) -> Result<Image> {
        let grid = self.grid()?;
        match self.kind {
            PhantomKind::SheppLogan => shepp_logan_variant(grid, self.scale, SheppLoganVariant::Standard),
            PhantomKind::ModifiedSheppLogan => shepp_logan_variant(grid, self.scale, SheppLoganVariant::Modified),
            PhantomKind::Disk => disk(grid, self.radius_fraction * grid.half_extent(), self.scale),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_scale() -> f64 {
    0.02
}

fn default_radius() -> f64 {
    0.8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub views: usize,
    /// Defaults to enough bins to cover the image diagonal.
    #[serde(default)]
    pub bins: Option<usize>,
    #[serde(default = "one")]
    pub bin_width_mm: f64,
}

impl GeometrySpec {
    pub fn build(&self, grid: ImageGrid) -> Result<ParallelGeometry> {
        let bins = self.bins.unwrap_or_else(|| ParallelGeometry::covering_bins(&grid, self.bin_width_mm));
        make_geometry(self.views, bins, self.bin_width_mm, grid)
    }
}

/// Settings for TV reconstructions in a manifest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TvSpec {
    pub weight: f64,
    #[serde(default = "default_tv_loops")]
    pub loops: usize,
    #[serde(default = "default_tv_iters")]
    pub tv_iters: usize,
    #[serde(default = "default_cg_iters")]
    pub cg_iters: usize,
    #[serde(default)]
    pub coupling: CouplingRamp,
}

fn default_tv_loops() -> usize {
    TvReconConfig::default().outer_loops
}

fn default_tv_iters() -> usize {
    TvReconConfig::default().tv.max_iters
}

fn default_cg_iters() -> usize {
    TvReconConfig::default().cg.max_iters
}

impl TvSpec {
    pub fn config(&self) -> TvReconConfig {
        TvReconConfig {
            tv: TvConfig::new(self.weight, self.tv_iters),
            cg: CgConfig { max_iters: self.cg_iters, ..CgConfig::default() },
            outer_loops: self.loops,
            coupling: self.coupling,
        }
    }
}

impl Default for TvSpec {
    fn default() -> Self {
        let d = TvReconConfig::default();
        TvSpec {
            weight: d.tv.weight,
            loops: d.outer_loops,
            tv_iters: d.tv.max_iters,
            cg_iters: d.cg.max_iters,
            coupling: d.coupling,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    #[default]
    Tv,
    Fbp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum VariantConfig {
    Fbp {
        name: String,
        #[serde(default = "default_filter")]
        filter: FbpFilter,
        /// Gaussian post-smoothing in pixels.
        #[serde(default)]
        smooth_sigma_px: Option<f64>,
    },
    Tv {
        name: String,
        tv: TvSpec,
    },
    Pnp {
        name: String,
        #[serde(default = "default_schedule")]
        mu_sigma2: Vec<f64>,
        plugins: Vec<PluginSpec>,
        #[serde(default)]
        init: InitKind,
        /// Initializer settings when `init = "tv"`; the reference settings otherwise.
        #[serde(default)]
        init_tv: Option<TvSpec>,
        #[serde(default = "default_filter")]
        init_filter: FbpFilter,
        #[serde(default = "default_pnp_cg_iters")]
        cg_iters: usize,
        #[serde(default)]
        external_mode: ExternalMode,
    },
}

fn default_schedule() -> Vec<f64> {
    DEFAULT_SCHEDULE.to_vec()
}

fn default_pnp_cg_iters() -> usize {
    CgConfig::default().max_iters
}

fn default_filter() -> FbpFilter {
    FbpFilter::RamLak
}

impl VariantConfig {
    pub fn name(&self) -> &str {
        match self {
            VariantConfig::Fbp { name, .. } | VariantConfig::Tv { name, .. } | VariantConfig::Pnp { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    /// PSNR data range; defaults to the phantom's max − min.
    #[serde(default)]
    pub range: Option<f64>,
    /// Skip NPS profiles and distances.
    #[serde(default)]
    pub skip_nps: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub phantom: PhantomSpec,
    pub geometry: GeometrySpec,
    pub noise: NoiseModel,
    /// Reconstruction of the full-dose scan used as the NPS reference.
    #[serde(default)]
    pub reference: TvSpec,
    #[serde(default)]
    pub metrics: MetricSpec,
    #[serde(default)]
    pub variants: Vec<VariantConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentManifest {
    pub fn from_toml(text: &str) -> Result<Self> {
        let m: ExperimentManifest = toml::from_str(text).map_err(|e| Error::validation(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.phantom.grid()?;
        self.geometry.build(grid)?;
        self.noise.validate()?;
        self.reference.config().tv.validate()?;
        if let Some(r) = self.metrics.range {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::validation(format!("metric range must be positive, got {r}")));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for v in &self.variants {
            let name = v.name();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                return Err(Error::validation(format!("variant name '{name}' must be non-empty [A-Za-z0-9._-]")));
            }
            if !seen.insert(name) {
                return Err(Error::validation(format!("duplicate variant name '{name}'")));
            }
            match v {
                VariantConfig::Fbp { smooth_sigma_px: Some(s), .. } if !(*s > 0.0) => {
                    return Err(Error::validation(format!("{name}: smoothing sigma must be positive")));
                }
                VariantConfig::Tv { tv, .. } => tv.config().tv.validate()?,
                VariantConfig::Pnp { mu_sigma2, plugins, .. } => {
                    self.pnp_config(v).map(|c| c.validate()).transpose()?;
                    if mu_sigma2.len() != plugins.len() {
                        return Err(Error::validation(format!(
                            "{name}: {} mu_sigma2 entries for {} plugins",
                            mu_sigma2.len(),
                            plugins.len()
                        )));
                    }
                    for p in plugins {
                        if let PluginKind::External { endpoint } = &p.kind {
                            if !endpoint_exists(endpoint) {
                                return Err(Error::validation(format!(
                                    "{name}: plugin endpoint '{endpoint}' not found"
                                )));
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn pnp_config(&self, v: &VariantConfig) -> Option<PnpConfig> {
        let VariantConfig::Pnp { mu_sigma2, plugins, init, init_tv, init_filter, cg_iters, external_mode, .. } = v
        else {
            return None;
        };
        let initializer = match init {
            InitKind::Tv => Initializer::Tv(init_tv.unwrap_or(self.reference).config()),
            InitKind::Fbp => Initializer::Fbp(*init_filter),
        };
        let mut cfg = PnpConfig::new(mu_sigma2.clone(), plugins.clone())
            .with_initializer(initializer)
            .with_cg(CgConfig { max_iters: *cg_iters, ..CgConfig::default() });
        cfg.external_mode = *external_mode;
        Some(cfg)
    }
}

/// Checks that the program an external endpoint launches can be found.
pub fn endpoint_exists(endpoint: &str) -> bool {
    let Some(program) = endpoint.split_whitespace().next() else {
        return false;
    };
    if program.contains('/') {
        return Path::new(program).is_file();
    }
    std::env::var_os("PATH")
        .map(|paths| std::env::split_paths(&paths).any(|dir| dir.join(program).is_file()))
        .unwrap_or(false)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariantRow {
    pub name: String,
    pub mse: Option<f64>,
    pub psnr: Option<Psnr>,
    pub nps_distance: Option<f64>,
    /// `None` when the variant succeeded.
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub output_dir: PathBuf,
    pub rows: Vec<VariantRow>,
}

impl ExperimentReport {
    pub fn row(&self, name: &str) -> Option<&VariantRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        let num = |v: Option<f64>| v.map(|x| format!("{x:.8e}")).unwrap_or_default();
        for r in &self.rows {
            let p = match r.psnr {
                Some(Psnr::Finite(db)) => format!("{db:.8e}"),
                Some(Psnr::Identical) => "inf".into(),
                None => String::new(),
            };
            let status = match &r.error {
                None => "ok".to_string(),
                Some(e) => format!("error: {}", e.replace([',', '\n', '\r'], " ")),
            };
            let _ = writeln!(out, "{},{},{},{},{}", r.name, num(r.mse), p, num(r.nps_distance), status);
        }
        out
    }
}

fn prepare_output(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = fs::read_dir(dir)?.next().is_some();
        if occupied && !force {
            return Err(Error::validation(format!(
                "output directory {} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
    } else {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn write_nps(dir: &Path, name: &str, nps: &NpsResult) -> Result<()> {
    let mut buf = Vec::new();
    nps.write_csv(&mut buf)?;
    write_atomic(&dir.join(format!("nps_{name}.csv")), &buf)
}

struct Scored {
    mse: f64,
    psnr: Psnr,
    nps_distance: Option<f64>,
}

/// Runs every stage and writes the report into `out_dir`.
///
/// Fails only if the shared stages fail; a failing variant is recorded in
/// its row and the remaining variants still run.
pub fn run_experiment(manifest: &ExperimentManifest, out_dir: &Path, force: bool) -> Result<ExperimentReport> {
    manifest.validate()?;
    prepare_output(out_dir, force)?;
    let seed = manifest.noise.seed;

    let truth = manifest.phantom.build()?;
    write_image(out_dir.join("phantom.f32"), &truth, &Provenance::content("phantom"))?;
    let geom = manifest.geometry.build(*truth.grid())?;
    let clean = forward_project(&truth, &geom)?;

    let full_model = NoiseModel { dose_fraction: 1.0, ..manifest.noise };
    let full = simulate_low_dose(&clean, &full_model)?.sinogram;
    // The low-dose scan gets its own stream so it is independent of the full-dose one.
    let low_model = NoiseModel { seed: seed.wrapping_add(1), ..manifest.noise };
    let low = simulate_low_dose(&clean, &low_model)?.sinogram;
    write_sinogram(out_dir.join("sino_full.f32"), &full, &Provenance::content("full-dose").with_seed(seed))?;
    write_sinogram(out_dir.join("sino_low.f32"), &low, &Provenance::content("low-dose").with_seed(low_model.seed))?;

    let reference = tv_reconstruct_with(&full, &manifest.reference.config())?;
    write_image(out_dir.join("reference.f32"), &reference, &Provenance::content("full-dose TV reference"))?;
    let ref_nps = if manifest.metrics.skip_nps {
        None
    } else {
        let nps = nps_compute(&reference)?;
        write_nps(out_dir, "reference", &nps)?;
        Some(nps)
    };

    let range = manifest.metrics.range.unwrap_or_else(|| {
        let (lo, hi) = truth.min_max();
        if hi > lo {
            hi - lo
        } else {
            1.0
        }
    });

    let mut rows = Vec::new();
    for variant in &manifest.variants {
        let name = variant.name().to_string();
        let result = run_variant(manifest, variant, &low, out_dir).and_then(|img| {
            write_image(out_dir.join(format!("{name}.f32")), &img, &Provenance::content(name.clone()))?;
            let nps_distance = match &ref_nps {
                Some(r) => {
                    let nps = nps_compute(&img)?;
                    write_nps(out_dir, &name, &nps)?;
                    Some(profile_distance(&nps, r)?)
                }
                None => None,
            };
            Ok(Scored { mse: mse(&img, &truth)?, psnr: psnr(&img, &truth, range)?, nps_distance })
        });
        let row = match result {
            Ok(s) => {
                VariantRow { name, mse: Some(s.mse), psnr: Some(s.psnr), nps_distance: s.nps_distance, error: None }
            }
            Err(e) => {
                log::warn!("variant {name} failed: {e}");
                VariantRow { name, mse: None, psnr: None, nps_distance: None, error: Some(e.to_string()) }
            }
        };
        rows.push(row);
    }

    let report = ExperimentReport { output_dir: out_dir.to_path_buf(), rows };
    write_atomic(&out_dir.join("metrics.csv"), report.to_csv().as_bytes())?;
    Ok(report)
}

fn run_variant(
    manifest: &ExperimentManifest,
    variant: &VariantConfig,
    low: &Sinogram,
    out_dir: &Path,
) -> Result<Image> {
    match variant {
        VariantConfig::Fbp { filter, smooth_sigma_px, .. } => {
            let img = fbp_reconstruct(low, *filter)?;
            Ok(match smooth_sigma_px {
                Some(s) => gaussian_blur(&img, *s),
                None => img,
            })
        }
        VariantConfig::Tv { tv, .. } => tv_reconstruct_with(low, &tv.config()),
        VariantConfig::Pnp { name, .. } => {
            let cfg = manifest.pnp_config(variant).expect("pnp variant");
            let (result, trace) = match pnp_reconstruct(low, &cfg) {
                Ok(out) => (Ok(out.image), out.trace),
                Err(f) => (Err(f.error), f.trace),
            };
            let json = serde_json::to_vec_pretty(&trace).map_err(|e| Error::Format(e.to_string()))?;
            write_atomic(&out_dir.join(format!("{name}.trace.json")), &json)?;
            result
        }
    }
}
