//! Packet-level queueing analysis for a finite-buffer wireless transmission
//! queue fed by a batch Markovian arrival process (BMAP) and drained by an
//! adaptive-modulation-and-coding (AMC) rate-limited server.
//!
//! The toolkit has two routes to every number:
//!
//! * an **analytical** route — a discrete-time Markov chain over
//!   (queue occupancy, arrival phase) built frame by frame from the BMAP's
//!   per-frame kernel and the server's transmission pmf, solved for its
//!   stationary distribution ([`chain`], [`metrics`]);
//! * a **Monte Carlo** route — a frame-level simulator of the same system
//!   that cross-validates every analytical metric ([`sim`]).
//!
//! The crate-level modules map onto the moving parts:
//!
//! * [`bmap`] — the arrival process: batch rate matrices, validation,
//!   stationary phase vector, mean rate, and the per-frame kernel
//!   (phase-transition matrix and arrival-count probabilities).
//! * [`amc`] — the IEEE 802.16 rate table, SNR-to-rate mapping, per-frame
//!   packet capacity, and the transmission-count pmf.
//! * [`chain`] — assembly of the block transition matrix with overflow
//!   folding at the buffer boundary, plus the stationary solve.
//! * [`metrics`] — average queue length, drop probability, throughput,
//!   and delay from the stationary distribution.
//! * [`sim`] — the frame-level simulator and analytic-vs-simulated
//!   comparison with z-scores.
//! * [`config`] / [`sweep`] — TOML experiment configuration, parameter
//!   sweeps, and CSV emission.
//! * [`solve`] — stationary-vector solvers shared by [`bmap`] and
//!   [`chain`].

pub mod amc;
pub mod bmap;
pub mod chain;
pub mod config;
pub mod metrics;
pub mod sim;
pub mod solve;
pub mod sweep;

pub use amc::{ChannelModel, RateTable, TransmissionModel, TransmitMode};
pub use bmap::{BmapSpec, FrameArrivalKernel, ValidationReport};
pub use chain::{QueueChainSpec, StationaryDistribution, TransitionMatrix};
pub use config::ExperimentConfig;
pub use metrics::MetricsReport;
pub use sim::{ArrivalMode, ComparisonReport, SimConfig, SimResult};
