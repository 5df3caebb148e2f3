//! Orbital geometry for a single circular orbital plane and one ground
//! station on a spherical Earth.
//!
//! The ring lies in the equatorial plane of the model frame. Satellite `i`
//! sits at phase `initial_phase + 2π (i - anchor) / N + 2π t / T_o`, so the
//! anchor satellite occupies the reference phase at `t = 0`. The ground
//! station is fixed at `(gs_latitude, gs_longitude)`; latitude is therefore
//! the cross-track offset from the ground track.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sidereal rotation rate of the Earth, rad/s.
pub const EARTH_ROTATION_RATE: f64 = 7.292_115_9e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Gravitational parameter G·M_E, m³/s².
    pub g_times_me: f64,
    pub earth_radius_m: f64,
    pub light_speed: f64,
}

pub const CONSTANTS: PhysicalConstants = PhysicalConstants {
    g_times_me: 3.986_004_418e14,
    earth_radius_m: 6.371e6,
    light_speed: 2.998e8,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("altitude must be non-negative, got {0} m")]
    NegativeAltitude(f64),
    #[error("no satellite is visible from the ground station at t = {time_s} s")]
    NoVisibleSatellite { time_s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstellationConfig {
    pub n_sats: usize,
    pub altitude_m: f64,
    pub min_elevation_rad: f64,
    pub gs_latitude_rad: f64,
    pub gs_longitude_rad: f64,
    /// Phase of the anchor satellite at `t = 0`, measured from the ground
    /// station longitude along the direction of motion.
    pub initial_phase_rad: f64,
    pub earth_rotation: bool,
}

impl Default for ConstellationConfig {
    /// Twenty satellites at 600 km. The ground station sits 12.6° off the
    /// ground track and the anchor satellite starts 4° before closest
    /// approach, which puts it at a 1650 km slant range: the edge of the
    /// 4.32 b/s/Hz coverage region under the default link budget.
    fn default() -> Self {
        Self {
            n_sats: 20,
            altitude_m: 600e3,
            min_elevation_rad: 0.0,
            gs_latitude_rad: 0.220_539_588_494_647_3,
            gs_longitude_rad: 0.0,
            initial_phase_rad: -4.0_f64.to_radians(),
            earth_rotation: false,
        }
    }
}

impl ConstellationConfig {
    /// Ground station directly under the ground track, anchor satellite at
    /// zenith at `t = 0`.
    pub fn zenith(n_sats: usize, altitude_m: f64) -> Self {
        Self {
            n_sats,
            altitude_m,
            gs_latitude_rad: 0.0,
            initial_phase_rad: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagingConfig {
    pub width_px: u32,
    pub height_px: u32,
    pub bits_per_px: u32,
    pub gsd_m: f64,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        Self {
            width_px: 1920,
            height_px: 1080,
            bits_per_px: 24,
            gsd_m: 0.5,
        }
    }
}

/// Size of one image in bits.
pub fn image_size_bits(img: &ImagingConfig) -> u64 {
    img.width_px as u64 * img.height_px as u64 * img.bits_per_px as u64
}

/// Period of a circular orbit at altitude `h` (Kepler's third law).
pub fn orbital_period(altitude_m: f64) -> Result<f64, OrbitError> {
    if altitude_m < 0.0 || altitude_m.is_nan() {
        return Err(OrbitError::NegativeAltitude(altitude_m));
    }
    let r = CONSTANTS.earth_radius_m + altitude_m;
    Ok((4.0 * PI * PI / CONSTANTS.g_times_me * r.powi(3)).sqrt())
}

/// Ground-track frame period: the time the sub-satellite point needs to
/// travel the along-track footprint `h_px · d_gsd` of one image.
pub fn gtfp(height_px: u32, gsd_m: f64, altitude_m: f64) -> Result<f64, OrbitError> {
    let period = orbital_period(altitude_m)?;
    Ok(height_px as f64 * gsd_m * period / (2.0 * PI * CONSTANTS.earth_radius_m))
}

pub type Vec3 = [f64; 3];

fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// A ring of uniformly spaced satellites plus a ground station.
#[derive(Debug, Clone)]
pub struct Constellation {
    cfg: ConstellationConfig,
    period_s: f64,
    anchor: usize,
}

impl Constellation {
    pub fn new(cfg: ConstellationConfig) -> Result<Self, OrbitError> {
        let period_s = orbital_period(cfg.altitude_m)?;
        Ok(Self {
            cfg,
            period_s,
            anchor: 0,
        })
    }

    /// Rotates the ring so that satellite `anchor` takes the reference phase.
    pub fn with_anchor(mut self, anchor: usize) -> Self {
        self.anchor = anchor % self.cfg.n_sats.max(1);
        self
    }

    pub fn config(&self) -> &ConstellationConfig {
        &self.cfg
    }

    pub fn n_sats(&self) -> usize {
        self.cfg.n_sats
    }

    pub fn period_s(&self) -> f64 {
        self.period_s
    }

    pub fn orbit_radius_m(&self) -> f64 {
        CONSTANTS.earth_radius_m + self.cfg.altitude_m
    }

    /// Phase angle of a satellite in the orbital plane.
    pub fn phase(&self, sat: usize, t: f64) -> f64 {
        let n = self.cfg.n_sats as f64;
        let offset = sat as f64 - self.anchor as f64;
        self.cfg.initial_phase_rad + self.cfg.gs_longitude_rad + 2.0 * PI * offset / n + 2.0 * PI * t / self.period_s
    }

    pub fn satellite_position(&self, sat: usize, t: f64) -> Vec3 {
        let r = self.orbit_radius_m();
        let theta = self.phase(sat, t);
        [r * theta.cos(), r * theta.sin(), 0.0]
    }

    pub fn ground_station_position(&self, t: f64) -> Vec3 {
        let lat = self.cfg.gs_latitude_rad;
        let mut lon = self.cfg.gs_longitude_rad;
        if self.cfg.earth_rotation {
            lon += EARTH_ROTATION_RATE * t;
        }
        let r = CONSTANTS.earth_radius_m;
        [r * lat.cos() * lon.cos(), r * lat.cos() * lon.sin(), r * lat.sin()]
    }

    pub fn slant_distance(&self, sat: usize, t: f64) -> f64 {
        norm(sub(self.satellite_position(sat, t), self.ground_station_position(t)))
    }

    /// Elevation of the satellite above the local horizon of the ground station.
    pub fn elevation(&self, sat: usize, t: f64) -> f64 {
        let gs = self.ground_station_position(t);
        let los = sub(self.satellite_position(sat, t), gs);
        let up = dot(los, gs) / (norm(los) * norm(gs));
        up.clamp(-1.0, 1.0).asin()
    }

    pub fn is_visible(&self, sat: usize, t: f64) -> bool {
        self.elevation(sat, t) >= self.cfg.min_elevation_rad
    }

    /// Visible satellite closest to the ground station; ties go to the
    /// lowest index.
    pub fn destination_satellite(&self, t: f64) -> Result<usize, OrbitError> {
        let mut best: Option<(usize, f64)> = None;
        for sat in 0..self.cfg.n_sats {
            if !self.is_visible(sat, t) {
                continue;
            }
            let d = self.slant_distance(sat, t);
            match best {
                Some((_, bd)) if d >= bd * (1.0 - 1e-12) => {}
                _ => best = Some((sat, d)),
            }
        }
        best.map(|(s, _)| s).ok_or(OrbitError::NoVisibleSatellite { time_s: t })
    }
}
