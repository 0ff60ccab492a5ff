use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pnpct::experiment::{run_experiment, ExperimentManifest};
use pnpct::io::{
    read_image, read_sinogram, read_sinogram_with_descriptor, write_image, write_png_preview, write_sinogram, HuWindow,
    Provenance,
};
use pnpct::iterative::{tv_reconstruct_with, CgConfig, TvConfig, TvReconConfig};
use pnpct::phantom::{disk, shepp_logan_variant, SheppLoganVariant};
use pnpct::pnp::plugin::gaussian_blur;
use pnpct::pnp::protocol::{serve, Request, Response};
use pnpct::pnp::{pnp_reconstruct, ExternalMode, Initializer, PluginKind, PluginSpec, PnpConfig, PnpTrace};
use pnpct::{
    fbp_reconstruct, forward_project, make_geometry, mse, nps_compute, psnr, simulate_low_dose, Error, FbpFilter,
    ImageGrid, NoiseModel, ParallelGeometry, Result,
};

#[derive(Parser)]
#[command(name = "pnpct", version, about = "Low-dose CT simulation and reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesise a phantom image.
    Phantom(PhantomArgs),
    /// Forward-project an image into a sinogram.
    Project(ProjectArgs),
    /// Simulate a reduced-dose scan of a noiseless sinogram.
    Simulate(SimulateArgs),
    /// Filtered back-projection.
    Fbp(FbpArgs),
    /// TV-regularised iterative reconstruction.
    Tv(TvArgs),
    /// Cascaded plug-and-play reconstruction.
    Pnp(PnpArgs),
    /// MSE and PSNR between two images.
    Metrics(MetricsArgs),
    /// Radial noise power spectrum of an image.
    Nps(NpsArgs),
    /// Run a comparison described by a manifest.
    Experiment(ExperimentArgs),
    /// Reference denoiser plugin speaking the wire protocol on stdio.
    #[command(hide = true)]
    PluginServe(PluginServeArgs),
}

#[derive(Args)]
struct PreviewArgs {
    /// Also write an 8-bit PNG preview.
    #[arg(long)]
    preview: Option<PathBuf>,
    /// Preview window lower bound in HU.
    #[arg(long, default_value_t = -1000.0, allow_hyphen_values = true)]
    window_min: f64,
    /// Preview window upper bound in HU.
    #[arg(long, default_value_t = 1000.0, allow_hyphen_values = true)]
    window_max: f64,
    /// Attenuation of water (0 HU) in mm⁻¹.
    #[arg(long, default_value_t = 0.02)]
    mu_water: f64,
}

impl PreviewArgs {
    fn write(&self, img: &pnpct::Image) -> Result<()> {
        match &self.preview {
            Some(path) => {
                write_png_preview(path, img, &HuWindow::new(self.window_min, self.window_max, self.mu_water)?)
            }
            None => Ok(()),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PhantomChoice {
    SheppLogan,
    ModifiedSheppLogan,
    Disk,
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long)]
    size: usize,
    #[arg(long, value_enum, default_value = "shepp-logan")]
    kind: PhantomChoice,
    /// Peak attenuation in mm⁻¹.
    #[arg(long, default_value_t = 0.02)]
    scale: f64,
    #[arg(long, default_value_t = 1.0)]
    pixel_size: f64,
    /// Disk radius as a fraction of the half-width.
    #[arg(long, default_value_t = 0.8)]
    radius: f64,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    preview: PreviewArgs,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long)]
    views: usize,
    /// Detector bins; defaults to covering the image diagonal.
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    bin_width: f64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Full-dose blank-scan photon count per ray.
    #[arg(long, default_value_t = 1e5)]
    i0: f64,
    #[arg(long, default_value_t = 0.1)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct FbpArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value = "ram-lak")]
    filter: FbpFilter,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    preview: PreviewArgs,
}

#[derive(Args)]
struct TvArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long)]
    weight: f64,
    #[arg(long, default_value_t = 16)]
    loops: usize,
    #[arg(long, default_value_t = 50)]
    tv_iters: usize,
    /// CG iterations per outer loop.
    #[arg(long, default_value_t = 10)]
    cg_iters: usize,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    preview: PreviewArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitChoice {
    Tv,
    Fbp,
}

#[derive(Args)]
struct PnpArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Number of loops; must match the schedule and plugin counts.
    #[arg(long)]
    loops: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "5e3,7e3,8e3")]
    mu_sigma2: Vec<f64>,
    /// One per loop: identity, gaussian:S, tv:W[:ITERS], median:R, external:CMD.
    #[arg(long = "plugin", required = true)]
    plugins: Vec<PluginSpec>,
    #[arg(long, value_enum, default_value = "tv")]
    init: InitChoice,
    /// TV weight of the TV initializer.
    #[arg(long, default_value_t = 2.0)]
    init_weight: f64,
    #[arg(long, default_value_t = 50)]
    cg_iters: usize,
    /// Keep one process per external endpoint for the whole run.
    #[arg(long)]
    persistent: bool,
    /// Seconds to wait for an external plugin response.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    #[arg(short, long)]
    output: PathBuf,
    /// Write the per-loop trace as JSON, also on failure.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    preview: PreviewArgs,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(short = 'a', long)]
    a: PathBuf,
    #[arg(short = 'b', long)]
    b: PathBuf,
    /// Data range for PSNR.
    #[arg(long)]
    range: f64,
}

#[derive(Args)]
struct NpsArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(short, long)]
    manifest: PathBuf,
    /// Output directory; overrides the manifest's.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Overwrite an existing non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct PluginServeArgs {
    /// identity, gaussian:S or loopmap:0=identity;1=gaussian:1.0
    #[arg(long, default_value = "identity")]
    mode: String,
    /// Abort without answering once this many requests have been served.
    #[arg(long)]
    die_after: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("pnpct: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pnpct: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("PNPCT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Validation(format!("PNPCT_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::Validation(e.to_string()))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Phantom(a) => {
            let grid = ImageGrid::square(a.size, a.pixel_size)?;
            let img = match a.kind {
                PhantomChoice::SheppLogan => shepp_logan_variant(grid, a.scale, SheppLoganVariant::Standard)?,
                PhantomChoice::ModifiedSheppLogan => shepp_logan_variant(grid, a.scale, SheppLoganVariant::Modified)?,
                PhantomChoice::Disk => disk(grid, a.radius * grid.half_extent(), a.scale)?,
            };
            write_image(&a.output, &img, &Provenance::content("phantom"))?;
            a.preview.write(&img)
        }
        Command::Project(a) => {
            let img = read_image(&a.input)?;
            let bins = a.bins.unwrap_or_else(|| ParallelGeometry::covering_bins(img.grid(), a.bin_width));
            let geom = make_geometry(a.views, bins, a.bin_width, *img.grid())?;
            let sino = forward_project(&img, &geom)?;
            write_sinogram(&a.output, &sino, &Provenance::content("projection"))
        }
        Command::Simulate(a) => {
            let clean = read_sinogram(&a.input)?;
            let model = NoiseModel::new(a.i0, a.fraction, a.seed)?;
            let low = simulate_low_dose(&clean, &model)?;
            if low.stats.clamped_negative > 0 || low.stats.photon_starved > 0 {
                log::warn!(
                    "{} negative line integrals clamped, {} rays photon-starved",
                    low.stats.clamped_negative,
                    low.stats.photon_starved
                );
            }
            let label = format!("simulated dose fraction {}", a.fraction);
            write_sinogram(&a.output, &low.sinogram, &Provenance::content(label).with_seed(a.seed))
        }
        Command::Fbp(a) => {
            let img = fbp_reconstruct(&read_sinogram(&a.input)?, a.filter)?;
            write_image(&a.output, &img, &Provenance::content(format!("fbp {}", a.filter)))?;
            a.preview.write(&img)
        }
        Command::Tv(a) => {
            let cfg = TvReconConfig {
                tv: TvConfig::new(a.weight, a.tv_iters),
                cg: CgConfig { max_iters: a.cg_iters, ..CgConfig::default() },
                outer_loops: a.loops,
                ..TvReconConfig::default()
            };
            let img = tv_reconstruct_with(&read_sinogram(&a.input)?, &cfg)?;
            write_image(&a.output, &img, &Provenance::content("tv"))?;
            a.preview.write(&img)
        }
        Command::Pnp(a) => run_pnp(a),
        Command::Metrics(a) => {
            let (x, y) = (read_image(&a.a)?, read_image(&a.b)?);
            println!("mse,{:.8e}", mse(&x, &y)?);
            println!("psnr,{}", psnr(&x, &y, a.range)?);
            Ok(())
        }
        Command::Nps(a) => {
            let nps = nps_compute(&read_image(&a.input)?)?;
            let mut buf = Vec::new();
            nps.write_csv(&mut buf)?;
            pnpct::io::write_atomic(&a.output, &buf)
        }
        Command::Experiment(a) => {
            let manifest = ExperimentManifest::load(&a.manifest)?;
            let out = a
                .output
                .or_else(|| manifest.output_dir.clone())
                .ok_or_else(|| Error::Validation("no output directory given".into()))?;
            let report = run_experiment(&manifest, &out, a.force)?;
            print!("{}", report.to_csv());
            Ok(())
        }
        Command::PluginServe(a) => plugin_serve(&a.mode, a.die_after),
    }
}

fn run_pnp(a: PnpArgs) -> Result<()> {
    let (y, _) = read_sinogram_with_descriptor(&a.input)?;
    let loops = a.loops.unwrap_or(a.plugins.len());
    if a.timeout.is_nan() || a.timeout <= 0.0 || !a.timeout.is_finite() {
        return Err(Error::Validation(format!("timeout must be positive, got {}", a.timeout)));
    }
    let initializer = match a.init {
        InitChoice::Tv => {
            Initializer::Tv(TvReconConfig { tv: TvConfig::new(a.init_weight, 50), ..TvReconConfig::default() })
        }
        InitChoice::Fbp => Initializer::Fbp(FbpFilter::RamLak),
    };
    let mut cfg = PnpConfig::new(a.mu_sigma2, a.plugins)
        .with_initializer(initializer)
        .with_cg(CgConfig { max_iters: a.cg_iters, ..CgConfig::default() });
    cfg.loops = loops;
    cfg.plugin_timeout = Duration::from_secs_f64(a.timeout);
    if a.persistent {
        cfg.external_mode = ExternalMode::Persistent;
    }
    match pnp_reconstruct(&y, &cfg) {
        Ok(out) => {
            write_trace(a.trace.as_deref(), &out.trace)?;
            write_image(&a.output, &out.image, &Provenance::content("pnp"))?;
            a.preview.write(&out.image)
        }
        Err(failure) => {
            write_trace(a.trace.as_deref(), &failure.trace)?;
            if let Some(n) = failure.loop_index {
                log::error!("cascade stopped in loop {n} after {} completed loops", failure.trace.len());
            }
            Err(failure.error)
        }
    }
}

fn write_trace(path: Option<&Path>, trace: &PnpTrace) -> Result<()> {
    let Some(path) = path else { return Ok(()) };
    let json = serde_json::to_vec_pretty(trace).map_err(|e| Error::Format(e.to_string()))?;
    pnpct::io::write_atomic(path, &json)
}

enum ServeMode {
    Identity,
    Builtin(PluginKind),
    LoopMap(Vec<(u32, ServeMode)>),
}

fn parse_serve_mode(text: &str) -> Result<ServeMode> {
    if let Some(map) = text.strip_prefix("loopmap:") {
        let mut entries = Vec::new();
        for item in map.split(';').filter(|s| !s.is_empty()) {
            let (idx, sub) = item
                .split_once('=')
                .ok_or_else(|| Error::Validation(format!("loopmap entry '{item}' needs INDEX=MODE")))?;
            let idx: u32 = idx.trim().parse().map_err(|_| Error::Validation(format!("bad loop index '{idx}'")))?;
            entries.push((idx, parse_serve_mode(sub.trim())?));
        }
        return Ok(ServeMode::LoopMap(entries));
    }
    match text.parse::<PluginKind>()? {
        PluginKind::Identity => Ok(ServeMode::Identity),
        PluginKind::External { .. } => Err(Error::Validation("plugin-serve cannot host external plugins".into())),
        kind => Ok(ServeMode::Builtin(kind)),
    }
}

fn answer(mode: &ServeMode, req: &Request) -> Response {
    match mode {
        ServeMode::Identity => Response::Ok(req.payload.clone()),
        ServeMode::Builtin(kind) => match req.image().and_then(|img| match kind {
            PluginKind::Gaussian { sigma_px } => Ok(gaussian_blur(&img, *sigma_px)),
            other => pnpct::pnp::plugin::apply_builtin(&img, other),
        }) {
            Ok(img) => Response::from_image(&img),
            Err(e) => Response::Error(e.to_string()),
        },
        ServeMode::LoopMap(entries) => match entries.iter().find(|(i, _)| *i == req.loop_index) {
            Some((_, sub)) => answer(sub, req),
            None => Response::Error(format!("no denoiser mapped for loop {}", req.loop_index)),
        },
    }
}

fn plugin_serve(mode: &str, die_after: Option<usize>) -> Result<()> {
    let mode = parse_serve_mode(mode)?;
    let mut served = 0;
    let stdin = std::io::stdin().lock();
    let stdout = std::io::stdout().lock();
    let mut out = std::io::BufWriter::new(stdout);
    let res = serve(stdin, &mut out, |req| {
        if die_after.is_some_and(|n| served >= n) {
            std::process::abort();
        }
        served += 1;
        answer(&mode, req)
    });
    use std::io::Write;
    out.flush()?;
    res
}
