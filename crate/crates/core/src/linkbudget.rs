//! Downlink SNR, adaptive rate selection and transmission times.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orbital::{Constellation, CONSTANTS};

/// Interior samples used when searching the worst SNR inside a slot.
pub const SLOT_SAMPLES: usize = 8;

#[derive(Debug, Error)]
pub enum RateTableError {
    #[error("rate table {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("rate table is empty")]
    Empty,
    #[error("rate table row {row}: {reason}")]
    InvalidRow { row: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub tx_power_rf_w: f64,
    pub amp_inefficiency_rf: f64,
    pub gain_tx_dbi: f64,
    pub gain_rx_dbi: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_power_dbw: f64,
    pub isl_rate_bps: f64,
    pub isl_power_w: f64,
    pub isl_tx_fraction: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            tx_power_rf_w: 10.0,
            amp_inefficiency_rf: 1.0,
            gain_tx_dbi: 32.13,
            gain_rx_dbi: 34.20,
            carrier_hz: 20e9,
            bandwidth_hz: 500e6,
            noise_power_dbw: -119.32,
            isl_rate_bps: 10e9,
            isl_power_w: 60.0,
            isl_tx_fraction: 1.0,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Free-space path loss in dB.
pub fn fspl_db(distance_m: f64, carrier_hz: f64) -> f64 {
    20.0 * (4.0 * PI * distance_m * carrier_hz / CONSTANTS.light_speed).log10()
}

/// Linear SNR of the downlink over an AWGN channel.
pub fn snr(distance_m: f64, cfg: &LinkConfig) -> f64 {
    let g = db_to_linear(cfg.gain_tx_dbi + cfg.gain_rx_dbi - cfg.noise_power_dbw);
    let path = CONSTANTS.light_speed / (4.0 * PI * distance_m * cfg.carrier_hz);
    g * cfg.tx_power_rf_w * path * path
}

/// Largest slant range at which `snr(d) >= threshold`.
pub fn max_distance_for_snr(threshold: f64, cfg: &LinkConfig) -> f64 {
    let g = db_to_linear(cfg.gain_tx_dbi + cfg.gain_rx_dbi - cfg.noise_power_dbw);
    CONSTANTS.light_speed / (4.0 * PI * cfg.carrier_hz) * (g * cfg.tx_power_rf_w / threshold).sqrt()
}

/// Spectral efficiencies (b/s/Hz) of the DVB-S2X normal-frame MODCODs,
/// rounded to two decimals. 64APSK 11/15 is taken as 4.32.
const DVBS2X_EFFICIENCIES: &[f64] = &[
    0.43, 0.49, 0.57, 0.66, 0.79, 0.89, 0.99, 1.09, 1.19, 1.32, 1.49, 1.59, 1.65, 1.66, 1.71, 1.77, 1.78, 1.79, 1.90,
    1.97, 1.98, 2.05, 2.10, 2.15, 2.19, 2.23, 2.29, 2.37, 2.46, 2.48, 2.52, 2.63, 2.65, 2.68, 2.70, 2.81, 2.97, 3.09,
    3.17, 3.23, 3.30, 3.40, 3.51, 3.52, 3.57, 3.62, 3.70, 3.84, 3.95, 4.12, 4.21, 4.32, 4.40, 4.45, 4.64, 4.73, 4.94,
    5.00, 5.16, 5.17, 5.33, 5.36, 5.49, 5.53, 5.90,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEntry {
    pub spectral_efficiency: f64,
    /// Minimum linear SNR.
    pub snr_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    entries: Vec<RateEntry>,
}

#[derive(Debug, Deserialize, Serialize)]
struct RateRow {
    spectral_efficiency: f64,
    snr_min_db: f64,
}

impl RateTable {
    pub fn new(entries: Vec<RateEntry>) -> Result<Self, RateTableError> {
        if entries.is_empty() {
            return Err(RateTableError::Empty);
        }
        for (i, e) in entries.iter().enumerate() {
            let row = i + 1;
            if e.spectral_efficiency.is_nan()
                || e.spectral_efficiency <= 0.0
                || !e.snr_min.is_finite()
                || e.snr_min <= 0.0
            {
                return Err(RateTableError::InvalidRow {
                    row,
                    reason: "values must be positive and finite".into(),
                });
            }
            let shannon = 2f64.powf(e.spectral_efficiency) - 1.0;
            if e.snr_min < shannon * (1.0 - 1e-6) {
                return Err(RateTableError::InvalidRow {
                    row,
                    reason: format!(
                        "threshold {:.4} dB is below the Shannon bound {:.4} dB",
                        linear_to_db(e.snr_min),
                        linear_to_db(shannon)
                    ),
                });
            }
            if i > 0 {
                let p = entries[i - 1];
                if e.spectral_efficiency <= p.spectral_efficiency || e.snr_min <= p.snr_min {
                    return Err(RateTableError::InvalidRow {
                        row,
                        reason: "rows must be strictly increasing".into(),
                    });
                }
            }
        }
        Ok(Self { entries })
    }

    /// Shannon thresholds `2^R' - 1` over the given efficiencies.
    pub fn shannon(efficiencies: &[f64]) -> Result<Self, RateTableError> {
        Self::new(
            efficiencies
                .iter()
                .map(|&r| RateEntry {
                    spectral_efficiency: r,
                    snr_min: 2f64.powf(r) - 1.0,
                })
                .collect(),
        )
    }

    pub fn dvbs2x_shannon() -> Self {
        Self::shannon(DVBS2X_EFFICIENCIES).expect("built-in table is valid")
    }

    pub fn from_csv_reader<R: std::io::Read>(rdr: R, name: &str) -> Result<Self, RateTableError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(rdr);
        let mut entries = Vec::new();
        for row in reader.deserialize::<RateRow>() {
            let row = row.map_err(|source| RateTableError::Csv {
                path: name.to_string(),
                source,
            })?;
            entries.push(RateEntry {
                spectral_efficiency: row.spectral_efficiency,
                snr_min: db_to_linear(row.snr_min_db),
            });
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, RateTableError> {
        let name = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| RateTableError::Csv {
            path: name.clone(),
            source: csv::Error::from(e),
        })?;
        Self::from_csv_reader(file, &name)
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.entries {
            w.serialize(RateRow {
                spectral_efficiency: e.spectral_efficiency,
                snr_min_db: linear_to_db(e.snr_min),
            })
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
    }

    pub fn entries(&self) -> &[RateEntry] {
        &self.entries
    }

    /// Highest spectral efficiency whose threshold is met; 0 when none is.
    pub fn best_efficiency(&self, snr_linear: f64) -> f64 {
        self.entries
            .iter()
            .rev()
            .find(|e| snr_linear >= e.snr_min)
            .map_or(0.0, |e| e.spectral_efficiency)
    }

    /// Position of `efficiency` in the table, if present.
    pub fn index_of(&self, efficiency: f64) -> Option<usize> {
        self.entries.iter().position(|e| e.spectral_efficiency == efficiency)
    }
}

impl Default for RateTable {
    fn default() -> Self {
        Self::dvbs2x_shannon()
    }
}

/// Rate for a fixed worst-case SNR.
pub fn rate_for_snr(snr_linear: f64, link: &LinkConfig, table: &RateTable) -> f64 {
    link.bandwidth_hz * table.best_efficiency(snr_linear)
}

/// Worst SNR towards satellite `sat` over `[start, start + len]`, sampled at
/// both endpoints and `SLOT_SAMPLES` interior points. `None` if the satellite
/// drops below the elevation mask at any sample.
pub fn worst_slot_snr(
    constellation: &Constellation,
    sat: usize,
    slot_start: f64,
    slot_len: f64,
    link: &LinkConfig,
) -> Option<f64> {
    let mut worst = f64::INFINITY;
    for i in 0..=SLOT_SAMPLES + 1 {
        let t = slot_start + slot_len * i as f64 / (SLOT_SAMPLES + 1) as f64;
        if !constellation.is_visible(sat, t) {
            return None;
        }
        worst = worst.min(snr(constellation.slant_distance(sat, t), link));
    }
    Some(worst)
}

/// Downlink rate of satellite `sat` for the slot: bandwidth times the best
/// spectral efficiency sustained over the whole slot, 0 if there is no link.
pub fn select_rate(
    constellation: &Constellation,
    sat: usize,
    slot_start: f64,
    slot_len: f64,
    link: &LinkConfig,
    table: &RateTable,
) -> f64 {
    worst_slot_snr(constellation, sat, slot_start, slot_len, link).map_or(0.0, |s| rate_for_snr(s, link, table))
}

/// Time to push `bits` through a link of `rate` bps. Infinite when the link
/// is down and there is something to send.
pub fn transmission_time(bits: f64, rate_bps: f64) -> f64 {
    if bits == 0.0 {
        0.0
    } else if rate_bps <= 0.0 {
        f64::INFINITY
    } else {
        bits / rate_bps
    }
}
