//! Plug-and-play reconstruction with loop-specific denoiser plugins.

pub mod engine;
pub mod external;
pub mod plugin;
pub mod protocol;

pub use engine::{
    apply_plugin, image_checksum, pnp_reconstruct, run_cascade, run_plugin_ablation, score_mu_sigma2, select_mu_sigma2,
    AblationOutcome, ExternalMode, Initializer, LoopImages, LoopRecord, PluginRunner, PnpConfig, PnpFailure,
    PnpOutcome, PnpTrace, DEFAULT_SCHEDULE,
};
pub use external::{external_plugin_invoke, ExternalPlugin, DEFAULT_PLUGIN_TIMEOUT};
pub use plugin::{PluginKind, PluginSpec};
