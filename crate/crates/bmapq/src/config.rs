//! Experiment configuration: a human-editable TOML file with built-in
//! defaults for every field.
//!
//! An empty file is a complete configuration: a two-phase batch arrival
//! process (batches of up to two packets, phase event rates 2 and 1 per
//! unit time), a 150-packet buffer, 150 packets per frame of bandwidth at
//! the base rate, certain per-packet success, the IEEE 802.16 rate table,
//! a fixed channel at rate ID 0, and a single-point sweep at traffic
//! intensity 1. The same configuration is exposed to the CLI as the
//! `paper-7.1` preset. See the README for an annotated example.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::amc::{ChannelModel, RateRow, RateTable, TransmissionModel, TransmitMode};
use crate::bmap::BmapSpec;
use crate::sim::ArrivalMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field `{field}`: {message}")]
    Semantic { field: String, message: String },
}

fn semantic(field: &str, message: impl fmt::Display) -> ConfigError {
    ConfigError::Semantic {
        field: field.to_string(),
        message: message.to_string(),
    }
}

/// Which quantity a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Scale every batch rate matrix by the value.
    TrafficIntensity,
    /// Fix the channel at the value's rate ID.
    RateId,
    /// Set the allocated bandwidth `b` to the value.
    BandwidthB,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::TrafficIntensity => "traffic_intensity",
            SweepAxis::RateId => "rate_id",
            SweepAxis::BandwidthB => "bandwidth_b",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// Monte Carlo settings; all fields have defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationSettings {
    pub frames: u64,
    pub warmup: u64,
    pub seed: u64,
    pub replications: usize,
    pub arrival_mode: ArrivalMode,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            frames: 200_000,
            warmup: 20_000,
            seed: 1729,
            replications: 4,
            arrival_mode: ArrivalMode::PoissonPerPhase,
        }
    }
}

/// A fully validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub bmap: BmapSpec,
    pub rate_table: RateTable,
    pub transmission: TransmissionModel,
    pub channel: ChannelModel,
    /// Queue capacity `X` in packets.
    pub buffer: usize,
    /// Arrival truncation tolerance.
    pub er: f64,
    pub sweep: Sweep,
    pub simulation: Option<SimulationSettings>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// The built-in default configuration (also the `paper-7.1` preset):
    /// 150-packet buffer, 150 packets per frame at the base rate, two-phase
    /// batch arrivals.
    pub fn reference() -> Self {
        Self::from_toml_str("").expect("built-in defaults are valid")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        raw.validate()
    }

    /// Simulation settings, filling in the defaults when the config had no
    /// `[simulation]` block.
    pub fn simulation_or_default(&self) -> SimulationSettings {
        self.simulation.unwrap_or_default()
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    bmap: Option<RawBmap>,
    rate_table: Option<Vec<RateRow>>,
    transmission: Option<RawTransmission>,
    queue: Option<RawQueue>,
    channel: Option<RawChannel>,
    sweep: Option<RawSweep>,
    simulation: Option<RawSimulation>,
    output: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBmap {
    matrices: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQueue {
    #[serde(rename = "X")]
    x: Option<i64>,
    er: Option<f64>,
    #[serde(rename = "T")]
    t: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransmission {
    b: Option<i64>,
    p_success: Option<f64>,
    mode: Option<TransmitMode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    rate_id: Option<i64>,
    snr_db: Option<f64>,
    mix: Option<Vec<(i64, f64)>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    traffic_intensity: Option<Vec<f64>>,
    rate_id: Option<Vec<i64>>,
    bandwidth_b: Option<Vec<i64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    frames: Option<i64>,
    warmup: Option<i64>,
    seed: Option<i64>,
    replications: Option<i64>,
    arrival_mode: Option<ArrivalMode>,
}

/// The two-phase reference arrival process: batches of up to two packets,
/// event rates 2 and 1 per unit time.
fn default_matrices() -> Vec<Vec<Vec<f64>>> {
    vec![
        vec![vec![-2.0, 0.5], vec![0.125, -1.0]],
        vec![vec![0.5, 0.25], vec![0.25, 0.25]],
        vec![vec![0.25, 0.5], vec![0.25, 0.125]],
    ]
}

impl RawConfig {
    fn validate(self) -> Result<ExperimentConfig, ConfigError> {
        let queue = self.queue.unwrap_or_default();
        let buffer = match queue.x {
            None => 150usize,
            Some(x) if x >= 1 => x as usize,
            Some(x) => return Err(semantic("queue.X", format!("must be >= 1, got {x}"))),
        };
        let er = queue.er.unwrap_or(1e-9);
        if !(er > 0.0 && er < 1.0) {
            return Err(semantic("queue.er", format!("must lie in (0, 1), got {er}")));
        }
        let frame_duration = queue.t.unwrap_or(1.0);
        if !(frame_duration > 0.0 && frame_duration.is_finite()) {
            return Err(semantic(
                "queue.T",
                format!("must be positive and finite, got {frame_duration}"),
            ));
        }

        let matrices = self
            .bmap
            .map(|b| b.matrices)
            .unwrap_or_else(default_matrices);
        let bmap = BmapSpec::from_rows(&matrices, frame_duration)
            .map_err(|e| semantic("bmap.matrices", e))?;
        bmap.require_valid()
            .map_err(|e| semantic("bmap.matrices", e))?;

        let rate_table = match self.rate_table {
            None => RateTable::ieee802_16(),
            Some(rows) => RateTable::new(rows).map_err(|e| semantic("rate_table", e))?,
        };

        let raw_tx = self.transmission.unwrap_or_default();
        let bandwidth = match raw_tx.b {
            None => 150usize,
            Some(b) if b >= 1 => b as usize,
            Some(b) => {
                return Err(semantic("transmission.b", format!("must be >= 1, got {b}")))
            }
        };
        let p_success = raw_tx.p_success.unwrap_or(1.0);
        let mode = raw_tx.mode.unwrap_or(TransmitMode::AllQueued);
        let transmission = TransmissionModel::new(bandwidth, p_success, mode)
            .map_err(|e| semantic("transmission.p_success", e))?;

        let raw_channel = self.channel.unwrap_or_default();
        let channel_options = usize::from(raw_channel.rate_id.is_some())
            + usize::from(raw_channel.snr_db.is_some())
            + usize::from(raw_channel.mix.is_some());
        let channel = match channel_options {
            0 => ChannelModel::FixedRateId(0),
            1 => {
                if let Some(id) = raw_channel.rate_id {
                    if id < 0 || id as usize >= rate_table.len() {
                        return Err(semantic(
                            "channel.rate_id",
                            format!("must lie in 0..{}, got {id}", rate_table.len()),
                        ));
                    }
                    ChannelModel::FixedRateId(id as usize)
                } else if let Some(snr) = raw_channel.snr_db {
                    ChannelModel::FixedSnrDb(snr)
                } else {
                    let mix = raw_channel.mix.unwrap();
                    let mut entries = Vec::with_capacity(mix.len());
                    for (id, weight) in mix {
                        if id < 0 || id as usize >= rate_table.len() {
                            return Err(semantic(
                                "channel.mix",
                                format!("rate ID must lie in 0..{}, got {id}", rate_table.len()),
                            ));
                        }
                        entries.push((id as usize, weight));
                    }
                    ChannelModel::RateIdMix(entries)
                }
            }
            _ => {
                return Err(semantic(
                    "channel",
                    "set exactly one of rate_id, snr_db, or mix",
                ))
            }
        };
        // Dry-run so weight and range problems surface at load time.
        channel
            .capacity_distribution(&transmission, &rate_table)
            .map_err(|e| semantic("channel", e))?;

        let raw_sweep = self.sweep.unwrap_or_default();
        let axes = usize::from(raw_sweep.traffic_intensity.is_some())
            + usize::from(raw_sweep.rate_id.is_some())
            + usize::from(raw_sweep.bandwidth_b.is_some());
        let sweep = match axes {
            0 => Sweep {
                axis: SweepAxis::TrafficIntensity,
                values: vec![1.0],
            },
            1 => {
                if let Some(values) = raw_sweep.traffic_intensity {
                    if values.is_empty() {
                        return Err(semantic("sweep.traffic_intensity", "must not be empty"));
                    }
                    if let Some(bad) = values.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
                        return Err(semantic(
                            "sweep.traffic_intensity",
                            format!("values must be positive, got {bad}"),
                        ));
                    }
                    Sweep {
                        axis: SweepAxis::TrafficIntensity,
                        values,
                    }
                } else if let Some(ids) = raw_sweep.rate_id {
                    if ids.is_empty() {
                        return Err(semantic("sweep.rate_id", "must not be empty"));
                    }
                    if let Some(bad) = ids
                        .iter()
                        .find(|&&id| id < 0 || id as usize >= rate_table.len())
                    {
                        return Err(semantic(
                            "sweep.rate_id",
                            format!("IDs must lie in 0..{}, got {bad}", rate_table.len()),
                        ));
                    }
                    Sweep {
                        axis: SweepAxis::RateId,
                        values: ids.into_iter().map(|id| id as f64).collect(),
                    }
                } else {
                    let widths = raw_sweep.bandwidth_b.unwrap();
                    if widths.is_empty() {
                        return Err(semantic("sweep.bandwidth_b", "must not be empty"));
                    }
                    if let Some(bad) = widths.iter().find(|&&b| b < 1) {
                        return Err(semantic(
                            "sweep.bandwidth_b",
                            format!("bandwidths must be >= 1, got {bad}"),
                        ));
                    }
                    Sweep {
                        axis: SweepAxis::BandwidthB,
                        values: widths.into_iter().map(|b| b as f64).collect(),
                    }
                }
            }
            _ => {
                return Err(semantic(
                    "sweep",
                    "set exactly one of traffic_intensity, rate_id, or bandwidth_b",
                ))
            }
        };

        let simulation = match self.simulation {
            None => None,
            Some(raw) => {
                let defaults = SimulationSettings::default();
                let frames = match raw.frames {
                    None => defaults.frames,
                    Some(f) if f >= 1 => f as u64,
                    Some(f) => {
                        return Err(semantic("simulation.frames", format!("must be >= 1, got {f}")))
                    }
                };
                let warmup = match raw.warmup {
                    None => frames / 10,
                    Some(w) if w >= 0 => w as u64,
                    Some(w) => {
                        return Err(semantic(
                            "simulation.warmup",
                            format!("must be >= 0, got {w}"),
                        ))
                    }
                };
                if warmup >= frames {
                    return Err(semantic(
                        "simulation.warmup",
                        format!("must be below frames = {frames}, got {warmup}"),
                    ));
                }
                let seed = match raw.seed {
                    None => defaults.seed,
                    Some(s) if s >= 0 => s as u64,
                    Some(s) => {
                        return Err(semantic("simulation.seed", format!("must be >= 0, got {s}")))
                    }
                };
                let replications = match raw.replications {
                    None => defaults.replications,
                    Some(r) if r >= 1 => r as usize,
                    Some(r) => {
                        return Err(semantic(
                            "simulation.replications",
                            format!("must be >= 1, got {r}"),
                        ))
                    }
                };
                Some(SimulationSettings {
                    frames,
                    warmup,
                    seed,
                    replications,
                    arrival_mode: raw.arrival_mode.unwrap_or(ArrivalMode::PoissonPerPhase),
                })
            }
        };

        Ok(ExperimentConfig {
            bmap,
            rate_table,
            transmission,
            channel,
            buffer,
            er,
            sweep,
            simulation,
            output: self.output,
        })
    }
}
