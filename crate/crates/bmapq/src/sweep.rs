//! Parameter sweeps over an experiment configuration and their CSV form.
//!
//! One row per sweep point, ordered by axis value as configured. A point
//! that fails numerically is emitted with `nan` metric columns and a
//! preceding `#` comment carrying the error, and the sweep keeps going.
//! All numbers are serialized with 17 significant digits, so re-running a
//! configuration reproduces the analytic columns byte for byte (and the
//! simulated columns too, given the same seed).

use std::fmt::Write as _;

use thiserror::Error;

use crate::amc::{AmcError, ChannelModel};
use crate::bmap::BmapError;
use crate::chain::{ChainError, QueueChainSpec, TransitionMatrix};
use crate::config::{ExperimentConfig, SimulationSettings, Sweep, SweepAxis};
use crate::metrics::{self, MetricsError, MetricsReport};
use crate::sim::{self, ComparisonReport, SimConfig, SimResult};

#[derive(Debug, Error)]
pub enum PointError {
    #[error(transparent)]
    Bmap(#[from] BmapError),
    #[error(transparent)]
    Amc(#[from] AmcError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
    #[error("verification requires a [simulation] block in the config")]
    SimulationSettingsMissing,
}

/// Analytic metrics (and optionally simulated ones) at one sweep value.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub metrics: MetricsReport,
    pub sim: Option<SimResult>,
}

#[derive(Debug)]
pub struct SweepRow {
    pub value: f64,
    pub outcome: Result<PointResult, PointError>,
}

#[derive(Debug)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub simulated: bool,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.outcome.is_ok())
    }

    /// Renders the report as CSV with a `#` metadata preamble.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# bmapq sweep over {}", self.axis);
        let definition = match self.axis {
            SweepAxis::TrafficIntensity => {
                "# value: rho, multiplying every batch rate matrix; offered load/frame = rho * lambda_bmap_frame"
            }
            SweepAxis::RateId => "# value: fixed channel rate ID",
            SweepAxis::BandwidthB => "# value: allocated bandwidth b, packets/frame at rate ID 0",
        };
        let _ = writeln!(out, "{definition}");
        let mut header = String::from(
            "axis,value,avg_queue_len,drop_prob,throughput,avg_delay_frames,lambda_frame",
        );
        if self.simulated {
            header.push_str(
                ",sim_avg_queue_len,se_avg_queue_len,sim_drop_prob,se_drop_prob,\
                 sim_throughput,se_throughput,sim_avg_delay_frames,se_avg_delay_frames,\
                 sim_lambda_frame,se_lambda_frame,replications",
            );
        }
        let _ = writeln!(out, "{header}");
        for row in &self.rows {
            match &row.outcome {
                Ok(point) => {
                    let m = &point.metrics;
                    let _ = write!(
                        out,
                        "{},{},{},{},{},{},{}",
                        self.axis,
                        sig17(row.value),
                        sig17(m.avg_queue_len),
                        sig17(m.drop_probability),
                        sig17(m.throughput),
                        sig17(m.avg_delay_frames),
                        sig17(m.lambda_frame),
                    );
                    if self.simulated {
                        match &point.sim {
                            Some(s) => {
                                let _ = write!(
                                    out,
                                    ",{},{},{},{},{},{},{},{},{},{},{}",
                                    sig17(s.avg_queue_len.mean),
                                    sig17(s.avg_queue_len.se),
                                    sig17(s.drop_prob.mean),
                                    sig17(s.drop_prob.se),
                                    sig17(s.throughput_frame.mean),
                                    sig17(s.throughput_frame.se),
                                    sig17(s.avg_delay_frames.mean),
                                    sig17(s.avg_delay_frames.se),
                                    sig17(s.arrival_rate_frame.mean),
                                    sig17(s.arrival_rate_frame.se),
                                    s.replications,
                                );
                            }
                            None => {
                                let _ = write!(out, "{}", ",nan".repeat(10) + ",0");
                            }
                        }
                    }
                    out.push('\n');
                }
                Err(error) => {
                    let _ = writeln!(out, "# error at value {}: {error}", sig17(row.value));
                    let blanks = if self.simulated { 5 + 11 } else { 5 };
                    let _ = writeln!(
                        out,
                        "{},{}{}",
                        self.axis,
                        sig17(row.value),
                        ",nan".repeat(blanks)
                    );
                }
            }
        }
        out
    }
}

/// One analytic/simulated comparison per sweep value.
#[derive(Debug)]
pub struct VerifyReport {
    pub axis: SweepAxis,
    pub rows: Vec<(f64, ComparisonReport)>,
}

impl VerifyReport {
    pub fn any_flagged(&self) -> bool {
        self.rows.iter().any(|(_, c)| !c.flagged().is_empty())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("axis,value,metric,analytic,simulated,se,z\n");
        for (value, comparison) in &self.rows {
            for row in &comparison.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    self.axis,
                    sig17(*value),
                    row.metric,
                    sig17(row.analytic),
                    sig17(row.simulated),
                    sig17(row.se),
                    sig17(row.z),
                );
            }
        }
        out
    }
}

fn sig17(v: f64) -> String {
    format!("{v:.16e}")
}

/// The configuration with one sweep value applied.
fn point_config(config: &ExperimentConfig, value: f64) -> Result<ExperimentConfig, PointError> {
    let mut point = config.clone();
    match config.sweep.axis {
        SweepAxis::TrafficIntensity => {
            point.bmap = config.bmap.scale_intensity(value)?;
        }
        SweepAxis::RateId => {
            point.channel = ChannelModel::FixedRateId(value as usize);
        }
        SweepAxis::BandwidthB => {
            point.transmission.bandwidth = value as usize;
        }
    }
    Ok(point)
}

/// Builds and solves the chain for a single already-applied configuration.
pub fn solve_point(config: &ExperimentConfig) -> Result<(MetricsReport, TransitionMatrix), PointError> {
    let kernel = config.bmap.frame_kernel(config.er)?;
    let spec = QueueChainSpec::new(
        config.buffer,
        kernel,
        &config.channel,
        &config.rate_table,
        config.transmission,
    )?;
    let chain = spec.build()?;
    let dist = chain.solve_stationary()?;
    let lambda_bmap_frame =
        config.bmap.mean_arrival_rate()? * config.bmap.frame_duration();
    let report = metrics::report(&dist, &chain, &spec, lambda_bmap_frame)?;
    Ok((report, chain))
}

/// Evaluates one sweep value: analytic metrics, plus a simulation when
/// `settings` is given. The per-point seed is the configured seed plus the
/// point's index, so points are independent yet reproducible.
pub fn evaluate_point(
    config: &ExperimentConfig,
    value: f64,
    index: usize,
    settings: Option<&SimulationSettings>,
) -> Result<PointResult, PointError> {
    let point = point_config(config, value)?;
    let (metrics, _) = solve_point(&point)?;
    let sim = match settings {
        None => None,
        Some(s) => {
            let sim_config = SimConfig {
                bmap: point.bmap.clone(),
                channel: point.channel.clone(),
                transmission: point.transmission,
                rate_table: point.rate_table.clone(),
                buffer: point.buffer,
                arrival_mode: s.arrival_mode,
                frames: s.frames,
                warmup: s.warmup,
                seed: s.seed.wrapping_add(index as u64),
                replications: s.replications,
            };
            Some(sim::run(&sim_config)?)
        }
    };
    Ok(PointResult { metrics, sim })
}

/// Builds the transition matrix at one sweep value and renders it as
/// sparse `row col value` triplets. No stationary solve is involved.
pub fn dump_point_matrix(config: &ExperimentConfig, value: f64) -> Result<String, PointError> {
    let point = point_config(config, value)?;
    let kernel = point.bmap.frame_kernel(point.er)?;
    let spec = QueueChainSpec::new(
        point.buffer,
        kernel,
        &point.channel,
        &point.rate_table,
        point.transmission,
    )?;
    let chain = spec.build()?;
    let mut buf = Vec::new();
    chain
        .dump_sparse(&mut buf)
        .expect("writing to memory cannot fail");
    Ok(String::from_utf8(buf).expect("triplet dump is ascii"))
}

/// Runs the configured sweep. With `simulate` the config's simulation
/// settings (or their defaults) feed Monte Carlo columns.
pub fn run_sweep(config: &ExperimentConfig, simulate: bool) -> SweepReport {
    let settings = simulate.then(|| config.simulation_or_default());
    let Sweep { axis, ref values } = config.sweep;
    let rows = values
        .iter()
        .enumerate()
        .map(|(index, &value)| SweepRow {
            value,
            outcome: evaluate_point(config, value, index, settings.as_ref()),
        })
        .collect();
    SweepReport {
        axis,
        simulated: simulate,
        rows,
    }
}

/// Cross-validates the analytic metrics against simulation at every sweep
/// value. Requires a `[simulation]` block.
pub fn verify(config: &ExperimentConfig) -> Result<VerifyReport, PointError> {
    let settings = config
        .simulation
        .ok_or(PointError::SimulationSettingsMissing)?;
    let mut rows = Vec::with_capacity(config.sweep.values.len());
    for (index, &value) in config.sweep.values.iter().enumerate() {
        let point = evaluate_point(config, value, index, Some(&settings))?;
        let sim = point.sim.expect("simulation requested");
        let comparison = sim::compare(&point.metrics, &sim)?;
        rows.push((value, comparison));
    }
    Ok(VerifyReport {
        axis: config.sweep.axis,
        rows,
    })
}
