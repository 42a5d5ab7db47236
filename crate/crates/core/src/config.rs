//! Scenario constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// All constants describing one simulated network.
///
/// Field names double as the keys of the TOML configuration file; every
/// field has a default so a config file only needs to list overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Side of the square simulation area, meters.
    pub area_side_m: f64,
    pub num_aps: usize,
    pub antennas_per_ap: usize,
    pub num_ues: usize,
    pub pilot_len: usize,
    pub coherence_len: usize,
    /// Fraction of the data samples spent on the downlink.
    pub dl_fraction: f64,
    pub shadow_std_db: f64,
    /// Weight of the AP-side shadowing term (0 = UE-side only, 1 = AP-side only).
    pub shadow_weight: f64,
    pub shadow_decorr_m: f64,
    pub ap_height_m: f64,
    pub ue_height_m: f64,
    pub ap_power_mw: f64,
    pub ue_power_mw: f64,
    pub noise_dbm: f64,
    /// Fraction of the channel gain an AP's strong set must cover.
    pub grouping_threshold: f64,
    /// Fraction of the channel gain a UE's AP cluster must cover.
    pub clustering_threshold: f64,
    pub rng_seed: u64,
    pub mc_realizations: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            area_side_m: 500.0,
            num_aps: 30,
            antennas_per_ap: 8,
            num_ues: 10,
            pilot_len: 5,
            coherence_len: 200,
            dl_fraction: 0.5,
            shadow_std_db: 4.0,
            shadow_weight: 0.5,
            shadow_decorr_m: 9.0,
            ap_height_m: 10.0,
            ue_height_m: 1.5,
            ap_power_mw: 200.0,
            ue_power_mw: 100.0,
            noise_dbm: -92.0,
            grouping_threshold: 0.95,
            clustering_threshold: 1.0,
            rng_seed: 0,
            mc_realizations: 20_000,
        }
    }
}

/// Converts a power in mW to a noise-normalized linear power.
pub fn normalized_power(power_mw: f64, noise_dbm: f64) -> f64 {
    let dbm = 10.0 * power_mw.log10();
    10f64.powf((dbm - noise_dbm) / 10.0)
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.area_side_m > 0.0) {
            return bad(format!("area_side_m must be positive, got {}", self.area_side_m));
        }
        if self.num_aps == 0 || self.num_ues == 0 || self.antennas_per_ap == 0 {
            return bad("num_aps, num_ues and antennas_per_ap must be at least 1".into());
        }
        if self.pilot_len == 0 || self.pilot_len > self.num_ues {
            return bad(format!(
                "pilot_len must satisfy 1 <= pilot_len <= num_ues, got {} with {} UEs",
                self.pilot_len, self.num_ues
            ));
        }
        if self.pilot_len >= self.coherence_len {
            return bad(format!(
                "pilot_len ({}) must be shorter than coherence_len ({})",
                self.pilot_len, self.coherence_len
            ));
        }
        if self.num_aps * self.antennas_per_ap <= self.num_ues {
            return bad(format!(
                "total antennas ({}) must exceed the number of UEs ({})",
                self.num_aps * self.antennas_per_ap,
                self.num_ues
            ));
        }
        if !(self.dl_fraction > 0.0 && self.dl_fraction < 1.0) {
            return bad(format!("dl_fraction must lie in (0, 1), got {}", self.dl_fraction));
        }
        if !(0.0..=1.0).contains(&self.shadow_weight) {
            return bad(format!("shadow_weight must lie in [0, 1], got {}", self.shadow_weight));
        }
        if !(0.0..=1.0).contains(&self.grouping_threshold)
            || !(0.0..=1.0).contains(&self.clustering_threshold)
        {
            return bad("grouping_threshold and clustering_threshold must lie in [0, 1]".into());
        }
        if !(self.ap_power_mw > 0.0 && self.ue_power_mw > 0.0) {
            return bad("ap_power_mw and ue_power_mw must be positive".into());
        }
        if !(self.shadow_std_db >= 0.0) || !(self.shadow_decorr_m > 0.0) {
            return bad("shadow_std_db must be >= 0 and shadow_decorr_m > 0".into());
        }
        if self.ap_height_m < 0.0 || self.ue_height_m < 0.0 {
            return bad("heights must be non-negative".into());
        }
        if !self.noise_dbm.is_finite() {
            return bad("noise_dbm must be finite".into());
        }
        Ok(())
    }

    /// Noise-normalized maximum AP transmit power.
    pub fn ap_power_normalized(&self) -> f64 {
        normalized_power(self.ap_power_mw, self.noise_dbm)
    }

    /// Noise-normalized UE pilot power.
    pub fn ue_power_normalized(&self) -> f64 {
        normalized_power(self.ue_power_mw, self.noise_dbm)
    }

    pub fn height_difference_m(&self) -> f64 {
        (self.ap_height_m - self.ue_height_m).abs()
    }

    /// Pre-log factor of the downlink spectral efficiency.
    pub fn prelog(&self) -> f64 {
        self.dl_fraction * (1.0 - self.pilot_len as f64 / self.coherence_len as f64)
    }

    pub fn data_len(&self) -> usize {
        self.coherence_len - self.pilot_len
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
