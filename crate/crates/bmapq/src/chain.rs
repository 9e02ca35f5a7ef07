//! The discrete-time Markov chain of (queue occupancy, arrival phase).
//!
//! One frame takes the joint state `(x, s)` to `(x', l)`:
//!
//! * the phase moves `s -> l` with probability `Phi[s, l]`;
//! * `a` packets arrive with the end-of-frame phase's count pmf (arrival
//!   counts beyond the kernel's truncation bound `A` are folded into `A`);
//! * `k` of the packets present at the start of the frame leave, with the
//!   transmission pmf at occupancy `x` (so `k <= D' = min(x, D)`; packets
//!   arriving within the frame wait for the next one);
//! * the net position `x + a - k` is folded at the buffer size `X`: the
//!   overshoot is dropped and the state lands on `X`.
//!
//! Blocks are `m[x, x'] = Phi * diag(w)` with `w[l] = sum xi_a[l] T_k(x)`
//! over the `(a, k)` pairs reaching `x'`. The pre-fold per-phase masses of
//! every queue-increase block are retained because the expected drop count
//! needs them.

use std::io::{self, Write};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use thiserror::Error;

use crate::amc::{self, AmcError, ChannelModel, RateTable, TransmissionModel};
use crate::bmap::FrameArrivalKernel;
use crate::solve::{self, SolveError};

/// A built row must sum to 1 within this bound or construction fails.
pub const ROW_SUM_BUILD_TOL: f64 = 1e-8;
/// A solved stationary vector must reproduce itself within this bound.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("queue capacity must be at least 1")]
    InvalidBuffer,
    #[error("arrival kernel must cover at least one arrival (A >= 1)")]
    DegenerateKernel,
    #[error("channel produced no capacity states")]
    NoCapacityStates,
    #[error(transparent)]
    Amc(#[from] AmcError),
    #[error(
        "row {state} of the transition matrix sums to {sum} \
         (deficit {deficit:e} exceeds {ROW_SUM_BUILD_TOL:e})"
    )]
    RowSum { state: usize, sum: f64, deficit: f64 },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("stationary residual {residual:e} exceeds {RESIDUAL_TOL:e}")]
    ResidualTooLarge { residual: f64 },
}

/// Everything needed to assemble the chain: buffer size, arrival kernel,
/// the per-frame capacity distribution, and the transmission model.
#[derive(Debug, Clone)]
pub struct QueueChainSpec {
    buffer: usize,
    kernel: FrameArrivalKernel,
    capacities: Vec<(usize, f64)>,
    transmission: TransmissionModel,
}

impl QueueChainSpec {
    /// Derives the capacity distribution from a channel model and table.
    pub fn new(
        buffer: usize,
        kernel: FrameArrivalKernel,
        channel: &ChannelModel,
        table: &RateTable,
        transmission: TransmissionModel,
    ) -> Result<Self, ChainError> {
        let capacities = channel.capacity_distribution(&transmission, table)?;
        Self::with_capacities(buffer, kernel, capacities, transmission)
    }

    /// Uses a fixed per-frame capacity.
    pub fn with_capacity(
        buffer: usize,
        kernel: FrameArrivalKernel,
        capacity: usize,
        transmission: TransmissionModel,
    ) -> Result<Self, ChainError> {
        Self::with_capacities(buffer, kernel, vec![(capacity, 1.0)], transmission)
    }

    pub fn with_capacities(
        buffer: usize,
        kernel: FrameArrivalKernel,
        capacities: Vec<(usize, f64)>,
        transmission: TransmissionModel,
    ) -> Result<Self, ChainError> {
        if buffer == 0 {
            return Err(ChainError::InvalidBuffer);
        }
        if kernel.a_max() == 0 {
            return Err(ChainError::DegenerateKernel);
        }
        if capacities.is_empty() {
            return Err(ChainError::NoCapacityStates);
        }
        Ok(Self {
            buffer,
            kernel,
            capacities,
            transmission,
        })
    }

    pub fn buffer(&self) -> usize {
        self.buffer
    }

    pub fn kernel(&self) -> &FrameArrivalKernel {
        &self.kernel
    }

    pub fn capacities(&self) -> &[(usize, f64)] {
        &self.capacities
    }

    pub fn transmission(&self) -> &TransmissionModel {
        &self.transmission
    }

    pub fn max_capacity(&self) -> usize {
        self.capacities.iter().map(|&(d, _)| d).max().unwrap_or(0)
    }

    /// Transmission pmf at occupancy `x`, mixed over the capacity
    /// distribution.
    pub fn transmit_pmf(&self, occupancy: usize) -> Vec<f64> {
        let len = occupancy.min(self.max_capacity()) + 1;
        let mut mixed = vec![0.0; len];
        for &(capacity, weight) in &self.capacities {
            let pmf = amc::transmit_count_pmf(occupancy, capacity, &self.transmission);
            for (k, &p) in pmf.iter().enumerate() {
                mixed[k] += weight * p;
            }
        }
        mixed
    }

    /// Expected departures in one frame from occupancy `x`.
    pub fn expected_departures(&self, occupancy: usize) -> f64 {
        self.transmit_pmf(occupancy)
            .iter()
            .enumerate()
            .map(|(k, &p)| k as f64 * p)
            .sum()
    }

    /// Assembles the transition matrix.
    pub fn build(&self) -> Result<TransitionMatrix, ChainError> {
        let phases = self.kernel.phases();
        let levels = self.buffer + 1;
        let a_max = self.kernel.a_max();
        let n = levels * phases;
        let phi = self.kernel.phi();

        // Arrival weights per count with the tail folded into a = A, per
        // end-of-frame phase.
        let arrival: Vec<Vec<f64>> = (0..phases)
            .map(|l| self.kernel.capped_arrival_pmf(l))
            .collect();

        let mut matrix = Array2::zeros((n, n));
        let mut increase_mass = Vec::with_capacity(levels);

        for x in 0..levels {
            let pmf = self.transmit_pmf(x);

            // Column weights per landing level, before applying Phi.
            let mut weights = vec![Array1::<f64>::zeros(phases); levels];
            // Pre-fold weights per net increase v = a - k >= 1.
            let mut increase = Array2::<f64>::zeros((a_max, phases));
            for a in 0..=a_max {
                for (k, &t_k) in pmf.iter().enumerate() {
                    let landing = (x + a - k).min(self.buffer);
                    for l in 0..phases {
                        weights[landing][l] += arrival[l][a] * t_k;
                    }
                    if a > k {
                        let v = a - k;
                        for l in 0..phases {
                            increase[[v - 1, l]] += arrival[l][a] * t_k;
                        }
                    }
                }
            }

            for (landing, w) in weights.iter().enumerate() {
                if w.iter().all(|&v| v == 0.0) {
                    continue;
                }
                for s in 0..phases {
                    for l in 0..phases {
                        matrix[[x * phases + s, landing * phases + l]] = phi[[s, l]] * w[l];
                    }
                }
            }

            // Per-origin-phase total mass of each pre-fold increase block:
            // row s of Phi dotted with the increase weights for v.
            increase_mass.push(increase.dot(&phi.t()));

            for s in 0..phases {
                let state = x * phases + s;
                let sum = matrix.row(state).sum();
                let deficit = (sum - 1.0).abs();
                if deficit > ROW_SUM_BUILD_TOL {
                    return Err(ChainError::RowSum { state, sum, deficit });
                }
            }
        }

        Ok(TransitionMatrix {
            matrix,
            increase_mass,
            levels,
            phases,
            a_max,
            max_capacity: self.max_capacity(),
        })
    }
}

/// The folded transition matrix plus the pre-fold queue-increase masses.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    matrix: Array2<f64>,
    /// `increase_mass[x][[v - 1, s]]` is the total pre-fold probability
    /// that a frame starting at `(x, s)` grows the queue by `v`.
    increase_mass: Vec<Array2<f64>>,
    levels: usize,
    phases: usize,
    a_max: usize,
    max_capacity: usize,
}

impl TransitionMatrix {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// Number of queue levels, `X + 1`.
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn phases(&self) -> usize {
        self.phases
    }

    pub fn a_max(&self) -> usize {
        self.a_max
    }

    pub fn max_capacity(&self) -> usize {
        self.max_capacity
    }

    pub fn dimension(&self) -> usize {
        self.levels * self.phases
    }

    /// The `S x S` block for the transition `x -> x'`.
    pub fn block(&self, x: usize, x_to: usize) -> ArrayView2<'_, f64> {
        let s = self.phases;
        self.matrix
            .slice(ndarray::s![x * s..(x + 1) * s, x_to * s..(x_to + 1) * s])
    }

    /// Per-origin-phase total mass of the pre-fold block `m'_{x, x+v}`,
    /// `v >= 1`.
    pub fn prefold_increase_mass(&self, x: usize, v: usize) -> ArrayView1<'_, f64> {
        self.increase_mass[x].row(v - 1)
    }

    /// Solves `pi M = pi`, `pi 1 = 1`.
    pub fn solve_stationary(&self) -> Result<StationaryDistribution, ChainError> {
        let (pi, residual) = solve::stationary(&self.matrix)?;
        if residual > RESIDUAL_TOL {
            return Err(ChainError::ResidualTooLarge { residual });
        }
        let pi = pi
            .into_shape_with_order((self.levels, self.phases))
            .expect("dimension preserved");
        Ok(StationaryDistribution { pi, residual })
    }

    /// Writes nonzero entries as `row col value` triplets, one per line,
    /// with 17 significant digits.
    pub fn dump_sparse<W: Write>(&self, out: &mut W) -> io::Result<()> {
        for ((row, col), &value) in self.matrix.indexed_iter() {
            if value != 0.0 {
                writeln!(out, "{row} {col} {value:.16e}")?;
            }
        }
        Ok(())
    }
}

/// Stationary probabilities `pi(x, s)` plus the achieved residual.
#[derive(Debug, Clone)]
pub struct StationaryDistribution {
    pi: Array2<f64>,
    residual: f64,
}

impl StationaryDistribution {
    pub fn probabilities(&self) -> &Array2<f64> {
        &self.pi
    }

    pub fn levels(&self) -> usize {
        self.pi.nrows()
    }

    pub fn phases(&self) -> usize {
        self.pi.ncols()
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn probability(&self, occupancy: usize, phase: usize) -> f64 {
        self.pi[[occupancy, phase]]
    }

    /// Queue-length pmf `q(x) = sum_s pi(x, s)`.
    pub fn queue_marginal(&self) -> Array1<f64> {
        self.pi.sum_axis(Axis(1))
    }

    /// Phase pmf `p(s) = sum_x pi(x, s)`.
    pub fn phase_marginal(&self) -> Array1<f64> {
        self.pi.sum_axis(Axis(0))
    }
}
