//! QoS metrics from a solved chain: average queue length, expected drops
//! per frame, drop probability, throughput, and Little's-law delay.
//!
//! Two arrival rates appear in the report. `lambda_frame` is the rate the
//! chain itself realises per frame, `sum_s p(s) * E[capped arrivals | s]`
//! with `p` the solved phase marginal; all derived metrics use it, which is
//! what makes the flow-balance identity `throughput = sum_x q(x) E[k | x]`
//! hold to solver precision. `lambda_bmap_frame` is the exact process rate
//! per frame (mean batch rate times `T`); it is recorded alongside because
//! the per-phase Poisson reduction undercounts batchy processes, and the
//! gap between the two is worth seeing.

use thiserror::Error;

use crate::bmap::FrameArrivalKernel;
use crate::chain::{QueueChainSpec, StationaryDistribution, TransitionMatrix};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("arrival rate per frame must be positive to define a drop probability, got {0}")]
    NonPositiveArrivalRate(f64),
    #[error(
        "drop probability {0} falls outside [0, 1]: expected drops exceed expected arrivals, \
         which signals an inconsistency upstream"
    )]
    DropProbabilityOutOfRange(f64),
    #[error("delay is undefined: throughput is zero while the queue is nonempty")]
    UndefinedDelay,
    #[error("distribution has {dist} levels but the transition matrix has {chain}")]
    ShapeMismatch { dist: usize, chain: usize },
}

/// The four QoS metrics plus the arrival rates they were derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Mean packets in the queue at frame boundaries.
    pub avg_queue_len: f64,
    /// Expected packets dropped per frame.
    pub avg_dropped_per_frame: f64,
    /// Fraction of arriving packets dropped.
    pub drop_probability: f64,
    /// Packets delivered per frame.
    pub throughput: f64,
    /// Mean packet delay in frames.
    pub avg_delay_frames: f64,
    /// Arrival rate per frame realised by the chain's arrival model.
    pub lambda_frame: f64,
    /// Exact process arrival rate per frame (mean batch rate times `T`).
    pub lambda_bmap_frame: f64,
}

/// `E(x) = sum_x x q(x)`.
pub fn average_queue_length(dist: &StationaryDistribution) -> f64 {
    dist.queue_marginal()
        .iter()
        .enumerate()
        .map(|(x, &q)| x as f64 * q)
        .sum()
}

/// Expected packets dropped per frame: for every level, phase, and net
/// increase `n` past the free space, the retained pre-fold mass times the
/// overshoot `n - (X - x)`.
pub fn average_dropped_per_frame(
    dist: &StationaryDistribution,
    chain: &TransitionMatrix,
) -> Result<f64, MetricsError> {
    if dist.levels() != chain.levels() {
        return Err(MetricsError::ShapeMismatch {
            dist: dist.levels(),
            chain: chain.levels(),
        });
    }
    let buffer = chain.levels() - 1;
    let mut expected = 0.0;
    for x in 0..=buffer {
        let free = buffer - x;
        for n in (free + 1)..=chain.a_max() {
            let mass = chain.prefold_increase_mass(x, n);
            let overshoot = (n - free) as f64;
            for s in 0..chain.phases() {
                expected += mass[s] * overshoot * dist.probability(x, s);
            }
        }
    }
    Ok(expected)
}

/// Arrival rate per frame realised by the chain: the solved phase marginal
/// weighted by each phase's capped mean arrival count.
pub fn arrival_rate_frame(dist: &StationaryDistribution, kernel: &FrameArrivalKernel) -> f64 {
    dist.phase_marginal()
        .iter()
        .enumerate()
        .map(|(phase, &p)| p * kernel.capped_mean_arrivals(phase))
        .sum()
}

/// `p_drop = E[drops per frame] / lambda_frame`, which must land in [0, 1].
pub fn drop_probability(
    avg_dropped_per_frame: f64,
    lambda_frame: f64,
) -> Result<f64, MetricsError> {
    if lambda_frame <= 0.0 {
        return Err(MetricsError::NonPositiveArrivalRate(lambda_frame));
    }
    let p = avg_dropped_per_frame / lambda_frame;
    if !(-1e-9..=1.0 + 1e-9).contains(&p) {
        return Err(MetricsError::DropProbabilityOutOfRange(p));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// `throughput = lambda_frame (1 - p_drop)`, packets per frame.
pub fn throughput(lambda_frame: f64, drop_probability: f64) -> f64 {
    lambda_frame * (1.0 - drop_probability)
}

/// Little's law: `delay = E(x) / throughput`, in frames. An empty system
/// has zero delay; zero throughput with a nonempty queue is an error
/// rather than a silent infinity.
pub fn average_delay(avg_queue_len: f64, throughput: f64) -> Result<f64, MetricsError> {
    if throughput > 0.0 {
        Ok(avg_queue_len / throughput)
    } else if avg_queue_len == 0.0 {
        Ok(0.0)
    } else {
        Err(MetricsError::UndefinedDelay)
    }
}

/// Departure-side throughput `sum_x q(x) E[k | x]`: an independent route to
/// the same number as [`throughput`], used as a flow-balance check.
pub fn departure_throughput(dist: &StationaryDistribution, spec: &QueueChainSpec) -> f64 {
    dist.queue_marginal()
        .iter()
        .enumerate()
        .map(|(x, &q)| q * spec.expected_departures(x))
        .sum()
}

/// Assembles the full report from a solved chain.
pub fn report(
    dist: &StationaryDistribution,
    chain: &TransitionMatrix,
    spec: &QueueChainSpec,
    lambda_bmap_frame: f64,
) -> Result<MetricsReport, MetricsError> {
    let avg_queue_len = average_queue_length(dist);
    let avg_dropped = average_dropped_per_frame(dist, chain)?;
    let lambda_frame = arrival_rate_frame(dist, spec.kernel());
    let p_drop = drop_probability(avg_dropped, lambda_frame)?;
    let phi = throughput(lambda_frame, p_drop);
    let delay = average_delay(avg_queue_len, phi)?;
    Ok(MetricsReport {
        avg_queue_len,
        avg_dropped_per_frame: avg_dropped,
        drop_probability: p_drop,
        throughput: phi,
        avg_delay_frames: delay,
        lambda_frame,
        lambda_bmap_frame,
    })
}
