//! Low-dose acquisition by Poisson statistics on transmitted photon counts.
//!
//! For a line integral `l`, the expected count at the reduced dose is
//! `λ = i0_full · dose_fraction · exp(−l)`. A Poisson draw `c ~ Poisson(λ)`
//! is clamped below by `count_floor` and log-transformed back to
//! `−ln(c / (i0_full · dose_fraction))`.
//!
//! Every detector bin draws from its own ChaCha stream keyed by
//! `(seed, view, bin)`, so the result does not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Sinogram;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Photons per detector bin at full dose.
    pub i0_full: f64,
    /// Fraction of the full dose, in (0, 1].
    pub dose_fraction: f64,
    pub seed: u64,
    /// Minimum count after sampling; keeps the log finite.
    #[serde(default = "default_count_floor")]
    pub count_floor: f64,
}

fn default_count_floor() -> f64 {
    1.0
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { i0_full: 1e5, dose_fraction: 0.1, seed: 0, count_floor: 1.0 }
    }
}

impl NoiseModel {
    pub fn new(i0_full: f64, dose_fraction: f64, seed: u64) -> Result<Self> {
        let m = NoiseModel { i0_full, dose_fraction, seed, count_floor: 1.0 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.i0_full > 0.0) || !self.i0_full.is_finite() {
            return Err(Error::validation(format!("i0 must be positive, got {}", self.i0_full)));
        }
        if !(self.dose_fraction > 0.0 && self.dose_fraction <= 1.0) {
            return Err(Error::validation(format!("dose fraction must lie in (0, 1], got {}", self.dose_fraction)));
        }
        if !(self.count_floor > 0.0) || !self.count_floor.is_finite() {
            return Err(Error::validation(format!("count floor must be positive, got {}", self.count_floor)));
        }
        Ok(())
    }

    /// Expected photons per bin at the simulated dose with no attenuation.
    pub fn blank_counts(&self) -> f64 {
        self.i0_full * self.dose_fraction
    }
}

/// Counters describing what happened during a simulation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoseStats {
    /// Bins whose clean integral was negative and clamped to zero.
    pub clamped_negative: usize,
    /// Bins whose sampled count fell below the count floor.
    pub photon_starved: usize,
}

#[derive(Clone, Debug)]
pub struct LowDose {
    pub sinogram: Sinogram,
    pub stats: DoseStats,
}

/// RNG for one detector bin.
fn bin_rng(seed: u64, view: usize, bin: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((view as u64) << 32) | bin as u64);
    rng
}

/// One noisy post-log sample; returns the value and (clamped, starved) flags.
fn sample_bin(l: f64, model: &NoiseModel, rng: &mut ChaCha8Rng) -> (f64, bool, bool) {
    let clamped = l < 0.0;
    let l = l.max(0.0);
    let blank = model.blank_counts();
    let lambda = blank * (-l).exp();
    let counts = if lambda > 0.0 {
        match Poisson::new(lambda) {
            Ok(p) => p.sample(rng),
            // λ beyond the sampler's range; the Poisson spread is negligible there.
            Err(_) => lambda.round(),
        }
    } else {
        0.0
    };
    let starved = counts < model.count_floor;
    let counts = counts.max(model.count_floor);
    (-(counts / blank).ln(), clamped, starved)
}

/// Simulates a reduced-dose acquisition of `clean`.
pub fn simulate_low_dose(clean: &Sinogram, model: &NoiseModel) -> Result<LowDose> {
    model.validate()?;
    let geom = clean.geometry();
    let n_bins = geom.n_bins;
    let samples: Vec<(f64, bool, bool)> = clean
        .values()
        .par_iter()
        .enumerate()
        .map(|(i, &l)| {
            let mut rng = bin_rng(model.seed, i / n_bins, i % n_bins);
            sample_bin(l, model, &mut rng)
        })
        .collect();
    let mut stats = DoseStats::default();
    let values = samples
        .into_iter()
        .map(|(v, clamped, starved)| {
            stats.clamped_negative += clamped as usize;
            stats.photon_starved += starved as usize;
            v
        })
        .collect();
    if stats.clamped_negative > 0 {
        log::warn!("{} negative line integrals clamped to zero", stats.clamped_negative);
    }
    Ok(LowDose { sinogram: Sinogram::new(geom.clone(), values)?, stats })
}
