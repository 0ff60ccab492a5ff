//! The cascaded plug-and-play reconstruction.
//!
//! Loop `n` takes the previous loop's image `x`, runs that loop's denoiser
//! plugin to get `v` (the "DL n" image), then solves the CG x-update with
//! the loop's μσ² to get the next `x` (the "PnP n" image).

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::external::{ExternalPlugin, DEFAULT_PLUGIN_TIMEOUT};
use super::plugin::{apply_builtin, PluginKind, PluginSpec};
use crate::error::{Error, Result};
use crate::fbp::{fbp_reconstruct, FbpFilter};
use crate::grid::{Image, Sinogram};
use crate::iterative::{cg_x_update, tv_reconstruct_with, CgConfig, TvReconConfig};
use crate::metrics::nps_distance;

/// μσ² schedule used for the three-loop cascade.
pub const DEFAULT_SCHEDULE: [f64; 3] = [5e3, 7e3, 8e3];

/// Starting image for loop 1.
#[derive(Clone, Debug, PartialEq)]
pub enum Initializer {
    Fbp(FbpFilter),
    Tv(TvReconConfig),
    Provided(Image),
}

impl Default for Initializer {
    fn default() -> Self {
        Initializer::Tv(TvReconConfig::default())
    }
}

impl Initializer {
    pub fn run(&self, y: &Sinogram) -> Result<Image> {
        match self {
            Initializer::Fbp(filter) => fbp_reconstruct(y, *filter),
            Initializer::Tv(cfg) => tv_reconstruct_with(y, cfg),
            Initializer::Provided(img) => {
                if img.grid() != &y.geometry().grid {
                    return Err(Error::validation("provided initial image does not match the sinogram grid"));
                }
                Ok(img.clone())
            }
        }
    }
}

/// Lifetime of external plugin processes within one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExternalMode {
    /// A fresh process per invocation.
    #[default]
    PerCall,
    /// One process per distinct endpoint, kept for the whole run.
    Persistent,
}

#[derive(Clone, Debug)]
pub struct PnpConfig {
    pub loops: usize,
    pub mu_sigma2_schedule: Vec<f64>,
    pub plugins: Vec<PluginSpec>,
    pub cg: CgConfig,
    pub initializer: Initializer,
    pub external_mode: ExternalMode,
    pub plugin_timeout: Duration,
    /// Keep the per-loop "DL n" and "PnP n" images in the outcome.
    pub keep_intermediates: bool,
}

impl PnpConfig {
    /// A cascade with one plugin per schedule entry and default settings.
    pub fn new(mu_sigma2_schedule: Vec<f64>, plugins: Vec<PluginSpec>) -> Self {
        PnpConfig {
            loops: plugins.len(),
            mu_sigma2_schedule,
            plugins,
            cg: CgConfig::default(),
            initializer: Initializer::default(),
            external_mode: ExternalMode::default(),
            plugin_timeout: DEFAULT_PLUGIN_TIMEOUT,
            keep_intermediates: false,
        }
    }

    pub fn with_initializer(mut self, initializer: Initializer) -> Self {
        self.initializer = initializer;
        self
    }

    pub fn with_cg(mut self, cg: CgConfig) -> Self {
        self.cg = cg;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu_sigma2_schedule.len() != self.loops || self.plugins.len() != self.loops {
            return Err(Error::validation(format!(
                "{} loops need {} schedule entries and plugins, got {} and {}",
                self.loops,
                self.loops,
                self.mu_sigma2_schedule.len(),
                self.plugins.len()
            )));
        }
        if let Some(mu) = self.mu_sigma2_schedule.iter().find(|m| !(**m > 0.0) || !m.is_finite()) {
            return Err(Error::validation(format!("mu_sigma2 values must be positive, got {mu}")));
        }
        for p in &self.plugins {
            p.validate()?;
        }
        self.cg.validate()
    }
}

/// What happened in one loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopRecord {
    pub loop_index: usize,
    pub plugin_label: String,
    pub mu_sigma2: f64,
    pub cg_iterations: usize,
    pub cg_rel_residual: f64,
    /// SHA-256 of the plugin output ("DL n").
    pub dl_checksum: String,
    /// SHA-256 of the x-update output ("PnP n").
    pub pnp_checksum: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PnpTrace {
    pub records: Vec<LoopRecord>,
}

impl PnpTrace {
    pub fn labels(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.plugin_label.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Per-loop images, kept when `keep_intermediates` is set.
#[derive(Clone, Debug)]
pub struct LoopImages {
    pub dl: Image,
    pub pnp: Image,
}

#[derive(Clone, Debug)]
pub struct PnpOutcome {
    pub image: Image,
    pub trace: PnpTrace,
    pub intermediates: Vec<LoopImages>,
}

/// A failed run with the trace of the loops that completed.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct PnpFailure {
    #[source]
    pub error: Error,
    /// Loop that failed, if the failure happened inside the cascade.
    pub loop_index: Option<usize>,
    pub trace: PnpTrace,
}

impl From<PnpFailure> for Error {
    fn from(f: PnpFailure) -> Error {
        f.error
    }
}

/// Hex SHA-256 of an image's f64 values.
pub fn image_checksum(img: &Image) -> String {
    let mut hasher = Sha256::new();
    for v in img.values() {
        hasher.update(v.to_le_bytes());
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs plugins for one reconstruction, owning any persistent processes.
pub struct PluginRunner {
    mode: ExternalMode,
    timeout: Duration,
    hosts: HashMap<String, ExternalPlugin>,
}

impl PluginRunner {
    pub fn new(mode: ExternalMode, timeout: Duration) -> Self {
        PluginRunner { mode, timeout, hosts: HashMap::new() }
    }

    pub fn apply(&mut self, v_in: &Image, spec: &PluginSpec, loop_index: usize, strength_hint: f64) -> Result<Image> {
        let out = match &spec.kind {
            PluginKind::External { endpoint } => match self.mode {
                ExternalMode::PerCall => super::external::external_plugin_invoke_with_timeout(
                    endpoint,
                    v_in,
                    loop_index,
                    strength_hint,
                    self.timeout,
                )?,
                ExternalMode::Persistent => {
                    if !self.hosts.contains_key(endpoint) {
                        let host = ExternalPlugin::spawn(endpoint, self.timeout)?;
                        self.hosts.insert(endpoint.clone(), host);
                    }
                    let host = self.hosts.get_mut(endpoint).expect("host inserted above");
                    match host.invoke(v_in, loop_index, strength_hint) {
                        Ok(img) => img,
                        Err(e) => {
                            self.hosts.remove(endpoint);
                            return Err(e);
                        }
                    }
                }
            },
            kind => apply_builtin(v_in, kind)?,
        };
        if !out.same_shape(v_in) {
            return Err(Error::Protocol(format!(
                "plugin changed image shape from {}x{} to {}x{}",
                v_in.width(),
                v_in.height(),
                out.width(),
                out.height()
            )));
        }
        Ok(out)
    }

    /// Shuts down persistent processes, reporting protocol violations.
    pub fn finish(mut self) -> Result<()> {
        let mut first_err = None;
        for (_, host) in self.hosts.drain() {
            if let Err(e) = host.finish() {
                first_err.get_or_insert(e);
            }
        }
        first_err.map_or(Ok(()), Err)
    }
}

/// Applies a single plugin; external kinds get a one-shot process.
pub fn apply_plugin(v_in: &Image, spec: &PluginSpec, loop_index: usize) -> Result<Image> {
    spec.validate()?;
    PluginRunner::new(ExternalMode::PerCall, DEFAULT_PLUGIN_TIMEOUT).apply(v_in, spec, loop_index, 0.0)
}

/// Runs the cascade from the configured initializer.
pub fn pnp_reconstruct(y_low: &Sinogram, cfg: &PnpConfig) -> std::result::Result<PnpOutcome, PnpFailure> {
    let fail = |error: Error, loop_index: Option<usize>, trace: PnpTrace| PnpFailure { error, loop_index, trace };
    cfg.validate().map_err(|e| fail(e, None, PnpTrace::default()))?;
    let x0 = cfg.initializer.run(y_low).map_err(|e| fail(e, None, PnpTrace::default()))?;
    run_cascade(y_low, x0, cfg)
}

/// Runs the cascade from an explicit starting image.
pub fn run_cascade(y_low: &Sinogram, x0: Image, cfg: &PnpConfig) -> std::result::Result<PnpOutcome, PnpFailure> {
    let mut trace = PnpTrace::default();
    if let Err(e) = cfg.validate() {
        return Err(PnpFailure { error: e, loop_index: None, trace });
    }
    let mut runner = PluginRunner::new(cfg.external_mode, cfg.plugin_timeout);
    let mut intermediates = Vec::new();
    let mut x = x0;
    for n in 0..cfg.loops {
        let spec = &cfg.plugins[n];
        let mu = cfg.mu_sigma2_schedule[n];
        let step =
            runner.apply(&x, spec, n, mu).and_then(|v| cg_x_update(y_low, &v, mu, &x, &cfg.cg).map(|cg| (v, cg)));
        let (v, cg) = match step {
            Ok(s) => s,
            Err(error) => {
                drop(runner);
                return Err(PnpFailure { error, loop_index: Some(n), trace });
            }
        };
        log::debug!(
            "loop {n}: plugin {} mu_sigma2 {mu} cg {} iters residual {:e}",
            spec.label,
            cg.iterations,
            cg.rel_residual
        );
        trace.records.push(LoopRecord {
            loop_index: n,
            plugin_label: spec.label.clone(),
            mu_sigma2: mu,
            cg_iterations: cg.iterations,
            cg_rel_residual: cg.rel_residual,
            dl_checksum: image_checksum(&v),
            pnp_checksum: image_checksum(&cg.image),
        });
        x = cg.image;
        if cfg.keep_intermediates {
            intermediates.push(LoopImages { dl: v, pnp: x.clone() });
        }
    }
    if let Err(error) = runner.finish() {
        let last = cfg.loops.checked_sub(1);
        return Err(PnpFailure { error, loop_index: last, trace });
    }
    Ok(PnpOutcome { image: x, trace, intermediates })
}

/// Picks the coupling whose x-update has the NPS closest to `reference`.
///
/// Every candidate is solved from `v`; ties go to the larger candidate.
pub fn select_mu_sigma2(
    y_low: &Sinogram,
    v: &Image,
    reference_fulldose: &Image,
    candidates: &[f64],
    cfg: &CgConfig,
) -> Result<f64> {
    let scored = score_mu_sigma2(y_low, v, reference_fulldose, candidates, cfg)?;
    let mut best = scored[0];
    for &(mu, d) in &scored[1..] {
        if d < best.1 || (d == best.1 && mu > best.0) {
            best = (mu, d);
        }
    }
    Ok(best.0)
}

/// `(candidate, nps_distance)` for every candidate, in input order.
pub fn score_mu_sigma2(
    y_low: &Sinogram,
    v: &Image,
    reference_fulldose: &Image,
    candidates: &[f64],
    cfg: &CgConfig,
) -> Result<Vec<(f64, f64)>> {
    if candidates.is_empty() {
        return Err(Error::validation("mu_sigma2 selection needs at least one candidate"));
    }
    if let Some(c) = candidates.iter().find(|c| !(**c > 0.0) || !c.is_finite()) {
        return Err(Error::validation(format!("mu_sigma2 candidates must be positive, got {c}")));
    }
    candidates
        .iter()
        .map(|&mu| {
            let x = cg_x_update(y_low, v, mu, v, cfg)?.image;
            Ok((mu, nps_distance(&x, reference_fulldose)?))
        })
        .collect()
}

/// Proposed cascade next to one that reuses the first loop's plugin in
/// every loop.
#[derive(Clone, Debug)]
pub struct AblationOutcome {
    pub proposed: PnpOutcome,
    pub fixed_first: PnpOutcome,
}

pub fn run_plugin_ablation(y_low: &Sinogram, cfg: &PnpConfig) -> std::result::Result<AblationOutcome, PnpFailure> {
    let fail = |error: Error| PnpFailure { error, loop_index: None, trace: PnpTrace::default() };
    cfg.validate().map_err(fail)?;
    if cfg.loops < 2 {
        return Err(fail(Error::validation("plugin ablation needs at least two loops")));
    }
    let x0 = cfg.initializer.run(y_low).map_err(fail)?;
    let proposed = run_cascade(y_low, x0.clone(), cfg)?;
    let fixed = PnpConfig { plugins: vec![cfg.plugins[0].clone(); cfg.loops], ..cfg.clone() };
    let fixed_first = run_cascade(y_low, x0, &fixed)?;
    Ok(AblationOutcome { proposed, fixed_first })
}
