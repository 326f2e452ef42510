//! Scenario files. A run is described by a small TOML document; every key
//! is optional except `algorithm`, and unknown keys are rejected so typos
//! fail loudly instead of silently running the defaults.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::algorithms::{AlgorithmId, ControllerParams};
use crate::phy::ChannelModel;
use crate::{Error, Result};

use super::ScenarioConfig;

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ChannelSection {
    noise_floor_dbm: f64,
    frequency_mhz: f64,
    power_loss_coefficient: f64,
    floor_penetration_db: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let c = ChannelModel::default();
        ChannelSection {
            noise_floor_dbm: c.noise_floor_dbm,
            frequency_mhz: c.frequency_mhz,
            power_loss_coefficient: c.power_loss_coefficient,
            floor_penetration_db: c.floor_penetration_db,
        }
    }
}

fn base() -> ScenarioConfig {
    ScenarioConfig::new(AlgorithmId::Parf)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    algorithm: String,
    #[serde(default = "d_seed")]
    seed: u64,
    #[serde(default = "d_speed")]
    speed_mps: f64,
    #[serde(default)]
    start_distance_m: Option<f64>,
    #[serde(default = "d_end")]
    end_distance_m: f64,
    #[serde(default = "d_payload")]
    payload_octets: u32,
    #[serde(default = "d_n_max")]
    n_max: usize,
    #[serde(default)]
    shadowing_sigma_db: f64,
    #[serde(default)]
    channel: ChannelSection,
    #[serde(default)]
    params: ControllerParams,
}

fn d_seed() -> u64 {
    base().seed
}
fn d_speed() -> f64 {
    base().speed_mps
}
fn d_end() -> f64 {
    base().end_distance_m
}
fn d_payload() -> u32 {
    base().payload_octets
}
fn d_n_max() -> usize {
    base().n_max
}

/// Parse a scenario document. The result is validated, so a returned
/// config is always runnable.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let algorithm: AlgorithmId = file
        .algorithm
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("unknown algorithm {:?}", file.algorithm)))?;
    let mut channel = ChannelModel::default();
    channel.noise_floor_dbm = file.channel.noise_floor_dbm;
    channel.frequency_mhz = file.channel.frequency_mhz;
    channel.power_loss_coefficient = file.channel.power_loss_coefficient;
    channel.floor_penetration_db = file.channel.floor_penetration_db;
    let cfg = ScenarioConfig {
        algorithm,
        seed: file.seed,
        speed_mps: file.speed_mps,
        start_distance_m: file.start_distance_m,
        end_distance_m: file.end_distance_m,
        payload_octets: file.payload_octets,
        n_max: file.n_max,
        channel,
        shadowing_sigma_db: file.shadowing_sigma_db,
        params: file.params,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Read and parse a scenario file from disk.
pub fn load_scenario<P: AsRef<Path>>(path: P) -> Result<ScenarioConfig> {
    parse_scenario(&fs::read_to_string(path)?)
}
