//! Seeded synthetic field datasets with spatial pH autocorrelation.
//!
//! Field locations are uniform in a lon/lat box. pH is a smooth random
//! surface (a sum of 20 seeded sinusoidal basis functions over projected
//! meters, wavelengths tied to `correlation_length_m`, amplitude-normalized
//! to `ph_amplitude`) plus Gaussian noise, clipped to [5, 8.5]. Nearby
//! fields therefore carry similar pH, which is the structure the neighbor
//! features exploit; distant fields decorrelate.
//!
//! Each field's draws come from a ChaCha stream keyed by `(seed, index)`,
//! so generation is deterministic and independent of iteration order. The
//! auxiliary attributes (P/K/Mg indexes, soil texture) are seeded noise
//! with no spatial structure; texture triples always sum to 100.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{CropMap, FieldDataset, FieldRecord};
use crate::error::{Error, Result};
use crate::geo::METERS_PER_DEG_LAT;

pub const PH_CLIP_MIN: f64 = 5.0;
pub const PH_CLIP_MAX: f64 = 8.5;
const N_BASIS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_fields: usize,
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
    pub correlation_length_m: f64,
    pub ph_base: f64,
    pub ph_amplitude: f64,
    pub noise_sd: f64,
    pub crop_pool: Vec<String>,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// The default box (~20 x 22 km) holds 2,000 fields at a density that
    /// gives roughly 2.2 neighbors per field at 400 m, comparable to a
    /// mid-size survey region.
    fn default() -> Self {
        SynthConfig {
            n_fields: 2000,
            lon_min: -1.65,
            lon_max: -1.35,
            lat_min: 52.0,
            lat_max: 52.2,
            correlation_length_m: 800.0,
            ph_base: 6.5,
            ph_amplitude: 1.0,
            noise_sd: 0.25,
            crop_pool: default_crop_pool(),
            seed: 42,
        }
    }
}

fn default_crop_pool() -> Vec<String> {
    [
        "wheat", "barley", "oats", "maize", "oilseed rape", "potato", "sugar beet", "peas",
        "beans", "carrot", "onion", "cabbage", "apple", "strawberry", "grass", "ryegrass",
        "clover", "permanent pasture",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_fields == 0 {
            return Err(Error::InvalidConfig("n_fields must be >= 1".into()));
        }
        let finite_box = [self.lon_min, self.lon_max, self.lat_min, self.lat_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite_box || self.lon_max <= self.lon_min || self.lat_max <= self.lat_min {
            return Err(Error::InvalidConfig("bounding box is degenerate".into()));
        }
        if !self.correlation_length_m.is_finite() || self.correlation_length_m <= 0.0 {
            return Err(Error::InvalidConfig("correlation_length_m must be > 0".into()));
        }
        if self.noise_sd.is_nan() || self.noise_sd < 0.0 {
            return Err(Error::InvalidConfig("noise_sd must be >= 0".into()));
        }
        if self.ph_amplitude.is_nan() || self.ph_amplitude < 0.0 {
            return Err(Error::InvalidConfig("ph_amplitude must be >= 0".into()));
        }
        if self.crop_pool.is_empty() {
            return Err(Error::InvalidConfig("crop_pool must not be empty".into()));
        }
        Ok(())
    }
}

/// Smooth random surface over projected meters.
pub(crate) struct Surface {
    /// (wave vector kx, ky, phase) per basis function.
    basis: Vec<(f64, f64, f64)>,
    scale: f64,
}

impl Surface {
    pub(crate) fn seeded(rng: &mut ChaCha8Rng, correlation_length_m: f64, amplitude: f64) -> Self {
        let basis = (0..N_BASIS)
            .map(|_| {
                // Wavelengths of pi..4pi correlation lengths keep nearby
                // fields similar while the box spans several cycles.
                let wavelength = rng.random_range(
                    std::f64::consts::PI * correlation_length_m
                        ..4.0 * std::f64::consts::PI * correlation_length_m,
                );
                let direction = rng.random_range(0.0..std::f64::consts::TAU);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                let k = std::f64::consts::TAU / wavelength;
                (k * direction.cos(), k * direction.sin(), phase)
            })
            .collect();
        // Random-phase sinusoids carry variance 1/2 each.
        let scale = amplitude / (N_BASIS as f64 / 2.0).sqrt();
        Surface { basis, scale }
    }

    pub(crate) fn value(&self, x_m: f64, y_m: f64) -> f64 {
        self.scale
            * self
                .basis
                .iter()
                .map(|(kx, ky, phase)| (kx * x_m + ky * y_m + phase).sin())
                .sum::<f64>()
    }
}

/// Box-Muller standard normal from two uniform draws.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Generates a seeded synthetic dataset in the canonical schema.
pub fn generate_synthetic_fields(cfg: &SynthConfig) -> Result<FieldDataset> {
    cfg.validate()?;
    let crop_map = CropMap::bundled();

    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let surface = Surface::seeded(&mut master, cfg.correlation_length_m, cfg.ph_amplitude);

    let lon_mid = (cfg.lon_min + cfg.lon_max) / 2.0;
    let lat_mid = (cfg.lat_min + cfg.lat_max) / 2.0;
    let meters_per_deg_lon = METERS_PER_DEG_LAT * lat_mid.to_radians().cos();

    let id_width = cfg.n_fields.to_string().len().max(4);
    let records: Vec<FieldRecord> = (0..cfg.n_fields)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64 + 1);

            let longitude = rng.random_range(cfg.lon_min..cfg.lon_max);
            let latitude = rng.random_range(cfg.lat_min..cfg.lat_max);
            let x_m = (longitude - lon_mid) * meters_per_deg_lon;
            let y_m = (latitude - lat_mid) * METERS_PER_DEG_LAT;

            let noise = cfg.noise_sd * standard_normal(&mut rng);
            let ph = (cfg.ph_base + surface.value(x_m, y_m) + noise).clamp(PH_CLIP_MIN, PH_CLIP_MAX);

            let crop_name = cfg.crop_pool[rng.random_range(0..cfg.crop_pool.len())].clone();

            // Texture: two sorted cuts of [0, 100]; silt re-derived after
            // rounding so the triple sums to exactly 100.
            let c1: f64 = rng.random_range(0.0..100.0);
            let c2: f64 = rng.random_range(0.0..100.0);
            let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
            let sand = (lo * 10.0).round() / 10.0;
            let clay = ((hi - lo) * 10.0).round() / 10.0;
            let silt = ((100.0 - sand - clay) * 10.0).round() / 10.0;

            let round1 = |v: f64| (v * 10.0).round() / 10.0;
            FieldRecord {
                field_id: format!("S{i:0id_width$}"),
                longitude,
                latitude,
                crop_type: crop_map.map(&crop_name),
                crop_name,
                ph: Some(ph),
                p_index: Some(round1(rng.random_range(0.0..10.0))),
                k_index: Some(round1(rng.random_range(0.0..10.0))),
                mg_index: Some(round1(rng.random_range(0.0..10.0))),
                sand_pct: Some(sand),
                clay_pct: Some(clay),
                silt_pct: Some(silt),
            }
        })
        .collect();

    Ok(FieldDataset::new(records))
}
