//! Denoiser plugins for the v-update slot.
//!
//! Built-in kinds run in-process. `external` hands the image to a separate
//! process over the wire protocol in [`super::protocol`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Image;
use crate::iterative::{tv_denoise, TvConfig};

/// Default TV iterations when a spec string omits them.
pub const DEFAULT_TV_PLUGIN_ITERS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub enum PluginKind {
    Identity,
    /// Separable Gaussian blur, `sigma` in pixels.
    Gaussian {
        sigma_px: f64,
    },
    /// ROF denoising with `weight` relative to the input's value range.
    Tv {
        weight: f64,
        iters: usize,
    },
    /// Median over a `(2r+1)²` window.
    Median {
        radius_px: usize,
    },
    /// Shell command launching a plugin process.
    External {
        endpoint: String,
    },
}

impl PluginKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            PluginKind::Identity => Ok(()),
            PluginKind::Gaussian { sigma_px } if !(*sigma_px > 0.0) || !sigma_px.is_finite() => {
                Err(Error::validation(format!("gaussian sigma must be positive, got {sigma_px}")))
            }
            PluginKind::Tv { weight, .. } if !(*weight >= 0.0) || !weight.is_finite() => {
                Err(Error::validation(format!("tv weight must be >= 0, got {weight}")))
            }
            PluginKind::Tv { iters: 0, .. } => Err(Error::validation("tv plugin needs at least one iteration")),
            PluginKind::Median { radius_px: 0 } => Err(Error::validation("median radius must be >= 1")),
            PluginKind::External { endpoint } if endpoint.trim().is_empty() => {
                Err(Error::validation("external plugin endpoint is empty"))
            }
            _ => Ok(()),
        }
    }

    pub fn is_external(&self) -> bool {
        matches!(self, PluginKind::External { .. })
    }
}

impl fmt::Display for PluginKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PluginKind::Identity => f.write_str("identity"),
            PluginKind::Gaussian { sigma_px } => write!(f, "gaussian:{sigma_px}"),
            PluginKind::Tv { weight, iters } if *iters == DEFAULT_TV_PLUGIN_ITERS => write!(f, "tv:{weight}"),
            PluginKind::Tv { weight, iters } => write!(f, "tv:{weight}:{iters}"),
            PluginKind::Median { radius_px } => write!(f, "median:{radius_px}"),
            PluginKind::External { endpoint } => write!(f, "external:{endpoint}"),
        }
    }
}

fn parse_num<T: FromStr>(text: &str, what: &str) -> Result<T> {
    text.trim().parse().map_err(|_| Error::validation(format!("invalid {what} '{text}'")))
}

impl FromStr for PluginKind {
    type Err = Error;

    /// Parses `identity`, `gaussian:SIGMA`, `tv:WEIGHT[:ITERS]`,
    /// `median:RADIUS` or `external:COMMAND`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let kind = match (name, arg) {
            ("identity", None) => PluginKind::Identity,
            ("gaussian", Some(a)) => PluginKind::Gaussian { sigma_px: parse_num(a, "gaussian sigma")? },
            ("tv", Some(a)) => match a.split_once(':') {
                Some((w, it)) => {
                    PluginKind::Tv { weight: parse_num(w, "tv weight")?, iters: parse_num(it, "tv iterations")? }
                }
                None => PluginKind::Tv { weight: parse_num(a, "tv weight")?, iters: DEFAULT_TV_PLUGIN_ITERS },
            },
            ("median", Some(a)) => PluginKind::Median { radius_px: parse_num(a, "median radius")? },
            ("external", Some(a)) => PluginKind::External { endpoint: a.to_string() },
            _ => return Err(Error::validation(format!("unrecognised plugin spec '{s}'"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// A plugin with a display label, one per loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PluginSpec {
    pub kind: PluginKind,
    pub label: String,
}

impl PluginSpec {
    pub fn new(kind: PluginKind) -> Self {
        let label = kind.to_string();
        PluginSpec { kind, label }
    }

    pub fn with_label(kind: PluginKind, label: impl Into<String>) -> Self {
        PluginSpec { kind, label: label.into() }
    }

    pub fn identity() -> Self {
        Self::new(PluginKind::Identity)
    }

    pub fn gaussian(sigma_px: f64) -> Self {
        Self::new(PluginKind::Gaussian { sigma_px })
    }

    pub fn tv(weight: f64) -> Self {
        Self::new(PluginKind::Tv { weight, iters: DEFAULT_TV_PLUGIN_ITERS })
    }

    pub fn median(radius_px: usize) -> Self {
        Self::new(PluginKind::Median { radius_px })
    }

    pub fn external(endpoint: impl Into<String>) -> Self {
        Self::new(PluginKind::External { endpoint: endpoint.into() })
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()
    }
}

impl FromStr for PluginSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(PluginSpec::new(s.parse()?))
    }
}

impl TryFrom<String> for PluginSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PluginSpec> for String {
    fn from(p: PluginSpec) -> String {
        p.kind.to_string()
    }
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    // Half-sample symmetric; folds repeatedly for kernels wider than the image.
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m - 1;
    }
    m as usize
}

/// Normalised 1D Gaussian taps for offsets `-radius..=radius`,
/// `radius = ceil(4σ)`.
pub fn gaussian_kernel(sigma_px: f64) -> Vec<f64> {
    let radius = (4.0 * sigma_px).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma_px * sigma_px)).exp()).collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable Gaussian blur with symmetric boundaries.
pub fn gaussian_blur(img: &Image, sigma_px: f64) -> Image {
    let kernel = gaussian_kernel(sigma_px);
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = (img.width(), img.height());
    let src = img.values();
    let mut tmp = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            tmp[r * w + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, t)| t * src[r * w + reflect(c as isize + k as isize - radius, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, t)| t * tmp[reflect(r as isize + k as isize - radius, h) * w + c])
                .sum();
        }
    }
    Image::from_raw(*img.grid(), out)
}

pub fn median_filter(img: &Image, radius: usize) -> Image {
    let (w, h) = (img.width(), img.height());
    let src = img.values();
    let r = radius as isize;
    let mut window = Vec::with_capacity((2 * radius + 1).pow(2));
    let mut out = vec![0.0; w * h];
    for row in 0..h {
        for col in 0..w {
            window.clear();
            for dr in -r..=r {
                let rr = reflect(row as isize + dr, h);
                for dc in -r..=r {
                    window.push(src[rr * w + reflect(col as isize + dc, w)]);
                }
            }
            let mid = window.len() / 2;
            let (_, m, _) = window.select_nth_unstable_by(mid, f64::total_cmp);
            out[row * w + col] = *m;
        }
    }
    Image::from_raw(*img.grid(), out)
}

/// TV denoising with the ROF weight scaled by the image's value range.
pub fn tv_relative(img: &Image, weight: f64, iters: usize) -> Result<Image> {
    let (lo, hi) = img.min_max();
    tv_denoise(img, &TvConfig::new(weight * (hi - lo), iters))
}

/// Runs an in-process plugin; `External` kinds are rejected here.
pub fn apply_builtin(v_in: &Image, kind: &PluginKind) -> Result<Image> {
    kind.validate()?;
    match kind {
        PluginKind::Identity => Ok(v_in.clone()),
        PluginKind::Gaussian { sigma_px } => Ok(gaussian_blur(v_in, *sigma_px)),
        PluginKind::Tv { weight, iters } => tv_relative(v_in, *weight, *iters),
        PluginKind::Median { radius_px } => Ok(median_filter(v_in, *radius_px)),
        PluginKind::External { .. } => Err(Error::validation("external plugin needs a process host")),
    }
}
