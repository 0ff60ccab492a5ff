//! Flat f32 payload files with a TOML sidecar descriptor.
//!
//! `name` holds the raw little-endian f32 values (row-major for images,
//! view-major for sinograms) and `name.toml` describes them:
//!
//! ```toml
//! format = "pnpct"
//! version = 1
//! kind = "sinogram"
//! width = 256
//! height = 256
//! pixel_size_mm = 1.0
//! n_views = 360
//! n_bins = 367
//! bin_width_mm = 1.0
//! angles = [0.0, 0.008726646259971648, ...]
//! content = "low-dose"
//! seed = 42
//! ```
//!
//! Values are narrowed to f32 on write, so a round trip is bitwise exact
//! for any image whose values are representable in f32.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Image, ImageGrid, ParallelGeometry, Sinogram};

pub const DESCRIPTOR_VERSION: u32 = 1;
const FORMAT_TAG: &str = "pnpct";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContentKind {
    Image,
    Sinogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub format: String,
    pub version: u32,
    pub kind: ContentKind,
    pub width: usize,
    pub height: usize,
    pub pixel_size_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_views: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_bins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_width_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles: Option<Vec<f64>>,
    /// Free-form description of what the file holds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Optional provenance stored in the descriptor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Provenance {
    pub content: Option<String>,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn content(text: impl Into<String>) -> Self {
        Provenance { content: Some(text.into()), seed: None }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

impl Descriptor {
    fn for_image(img: &Image, prov: &Provenance) -> Self {
        let g = img.grid();
        Descriptor {
            format: FORMAT_TAG.into(),
            version: DESCRIPTOR_VERSION,
            kind: ContentKind::Image,
            width: g.width,
            height: g.height,
            pixel_size_mm: g.pixel_size,
            n_views: None,
            n_bins: None,
            bin_width_mm: None,
            angles: None,
            content: prov.content.clone(),
            seed: prov.seed,
        }
    }

    fn for_sinogram(sino: &Sinogram, prov: &Provenance) -> Self {
        let geom = sino.geometry();
        Descriptor {
            kind: ContentKind::Sinogram,
            n_views: Some(geom.n_views()),
            n_bins: Some(geom.n_bins),
            bin_width_mm: Some(geom.bin_width),
            angles: Some(geom.angles.clone()),
            ..Descriptor::for_image(&Image::zeros(geom.grid), prov)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.format != FORMAT_TAG {
            return Err(Error::Format(format!("unknown descriptor format '{}'", self.format)));
        }
        if self.version != DESCRIPTOR_VERSION {
            return Err(Error::Format(format!("unknown descriptor version {}", self.version)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::validation(format!(
                "descriptor dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    fn grid(&self) -> Result<ImageGrid> {
        ImageGrid::new(self.width, self.height, self.pixel_size_mm)
    }

    fn payload_len(&self) -> Result<usize> {
        match self.kind {
            ContentKind::Image => Ok(self.width * self.height),
            ContentKind::Sinogram => {
                let views = self.n_views.ok_or_else(|| Error::Format("sinogram descriptor lacks n_views".into()))?;
                let bins = self.n_bins.ok_or_else(|| Error::Format("sinogram descriptor lacks n_bins".into()))?;
                if views == 0 || bins == 0 {
                    return Err(Error::validation("sinogram descriptor dimensions must be positive"));
                }
                Ok(views * bins)
            }
        }
    }
}

/// Path of the sidecar descriptor for a payload file.
pub fn descriptor_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".toml");
    PathBuf::from(name)
}

/// Writes `bytes` to `path` through a temporary file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn encode_f32(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

fn write_pair(path: &Path, desc: &Descriptor, values: &[f64]) -> Result<()> {
    let text = toml::to_string(desc).map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, &encode_f32(values))?;
    write_atomic(&descriptor_path(path), text.as_bytes())
}

fn read_pair(path: &Path, expected: ContentKind) -> Result<(Descriptor, Vec<f64>)> {
    let text = fs::read_to_string(descriptor_path(path))?;
    let desc: Descriptor = toml::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    desc.validate()?;
    if desc.kind != expected {
        return Err(Error::Format(format!("expected a {expected:?} file, found {:?}", desc.kind)));
    }
    let n = desc.payload_len()?;
    let bytes = fs::read(path)?;
    if bytes.len() < n * 4 {
        return Err(Error::Truncated { expected: n * 4, found: bytes.len() });
    }
    if bytes.len() > n * 4 {
        return Err(Error::validation(format!("payload has {} bytes but descriptor declares {}", bytes.len(), n * 4)));
    }
    let values = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    Ok((desc, values))
}

pub fn write_image(path: impl AsRef<Path>, img: &Image, prov: &Provenance) -> Result<()> {
    write_pair(path.as_ref(), &Descriptor::for_image(img, prov), img.values())
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    read_image_with_descriptor(path).map(|(img, _)| img)
}

pub fn read_image_with_descriptor(path: impl AsRef<Path>) -> Result<(Image, Descriptor)> {
    let (desc, values) = read_pair(path.as_ref(), ContentKind::Image)?;
    Ok((Image::new(desc.grid()?, values)?, desc))
}

pub fn write_sinogram(path: impl AsRef<Path>, sino: &Sinogram, prov: &Provenance) -> Result<()> {
    write_pair(path.as_ref(), &Descriptor::for_sinogram(sino, prov), sino.values())
}

pub fn read_sinogram(path: impl AsRef<Path>) -> Result<Sinogram> {
    read_sinogram_with_descriptor(path).map(|(s, _)| s)
}

pub fn read_sinogram_with_descriptor(path: impl AsRef<Path>) -> Result<(Sinogram, Descriptor)> {
    let (desc, values) = read_pair(path.as_ref(), ContentKind::Sinogram)?;
    let n_views = desc.n_views.unwrap_or(0);
    let angles = match &desc.angles {
        Some(a) if a.len() == n_views => a.clone(),
        Some(a) => return Err(Error::validation(format!("descriptor lists {} angles for {n_views} views", a.len()))),
        None => (0..n_views).map(|k| k as f64 * std::f64::consts::PI / n_views as f64).collect(),
    };
    let bin_width = desc.bin_width_mm.ok_or_else(|| Error::Format("sinogram descriptor lacks bin_width_mm".into()))?;
    let geom = ParallelGeometry::with_angles(angles, desc.n_bins.unwrap_or(0), bin_width, desc.grid()?)?;
    Ok((Sinogram::new(geom, values)?, desc))
}

/// Display window for PNG previews, in Hounsfield units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HuWindow {
    pub lower: f64,
    pub upper: f64,
    /// Attenuation of water in the image's units, the 0 HU point.
    pub mu_water: f64,
}

impl HuWindow {
    pub fn new(lower: f64, upper: f64, mu_water: f64) -> Result<Self> {
        if !(upper > lower) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::validation(format!("HU window [{lower}, {upper}] is empty")));
        }
        if !(mu_water > 0.0) || !mu_water.is_finite() {
            return Err(Error::validation(format!("mu_water must be positive, got {mu_water}")));
        }
        Ok(HuWindow { lower, upper, mu_water })
    }

    pub fn to_hu(&self, mu: f64) -> f64 {
        1000.0 * (mu - self.mu_water) / self.mu_water
    }

    /// Grey level for an attenuation value.
    pub fn grey(&self, mu: f64) -> u8 {
        let t = (self.to_hu(mu) - self.lower) / (self.upper - self.lower);
        (t.clamp(0.0, 1.0) * 255.0).round() as u8
    }
}

/// Writes an 8-bit greyscale PNG of `img` through `window`.
pub fn write_png_preview(path: impl AsRef<Path>, img: &Image, window: &HuWindow) -> Result<()> {
    let pixels: Vec<u8> = img.values().iter().map(|&v| window.grey(v)).collect();
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, pixels)
        .ok_or_else(|| Error::Format("preview buffer size mismatch".into()))?;
    let mut bytes = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut bytes, image::ImageFormat::Png).map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path.as_ref(), bytes.get_ref())
}
