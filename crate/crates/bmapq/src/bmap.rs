//! Batch Markovian arrival process: rate matrices, validation, stationary
//! analysis, and the per-frame probability kernel the queue chain consumes.
//!
//! A BMAP is driven by an irreducible continuous-time Markov chain over `S`
//! phases. Sojourn in phase `s` is exponential with rate `lambda_s`; at each
//! event the chain jumps to phase `s'` generating a batch of `k` packets,
//! `0 <= k <= K`. The process is specified by `K + 1` square rate matrices:
//!
//! * `D_0` — phase changes without arrivals: strictly negative diagonal
//!   (`-lambda_s`), nonnegative off-diagonal entries;
//! * `D_k`, `k >= 1` — transitions generating a batch of `k` packets,
//!   elementwise nonnegative (diagonal entries allowed: a batch may arrive
//!   while the phase stays put).
//!
//! The sum `D = sum_k D_k` is a conservative generator (zero row sums).
//!
//! For the frame-by-frame queue model the process is reduced to a
//! [`FrameArrivalKernel`]: the phase-transition matrix over one frame
//! `Phi = exp(D * T)` and, per arrival count `a`, a diagonal matrix `xi_a`
//! of per-phase probabilities of seeing `a` packets in a frame. The arrival
//! counts follow the per-phase Poisson reduction `P(a | s) = exp(-lambda_s
//! T) (lambda_s T)^a / a!`, truncated at the smallest bound `A` whose tail
//! mass stays below the configured `er` in every phase. Note that this
//! reduction deliberately drops the batch-size structure: its mean per
//! frame is `sum_s pi_s lambda_s T`, which for batchy processes is below
//! the exact rate from [`BmapSpec::mean_arrival_rate`]. The simulator's
//! exact arrival mode exists to make that gap measurable.

use std::fmt;

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::solve;

/// Tolerance on the generator's row sums during validation.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BmapError {
    #[error("need at least two batch matrices (D0 and D1), got {0}")]
    TooFewMatrices(usize),
    #[error("batch matrix {index} is {rows}x{cols}, expected {expected}x{expected}")]
    DimensionMismatch {
        index: usize,
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("batch matrix {index} contains a non-finite entry at ({row}, {col})")]
    NonFiniteEntry { index: usize, row: usize, col: usize },
    #[error("frame duration must be positive and finite, got {0}")]
    InvalidFrameDuration(f64),
    #[error("invalid BMAP:\n{0}")]
    Invalid(ValidationReport),
    #[error("intensity scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("arrival truncation tolerance must lie in (0, 1), got {0}")]
    InvalidTruncationTolerance(f64),
    #[error(
        "arrival truncation bound would exceed the cap of {cap} matrices \
         (tolerance {er:e}); raise the tolerance or the cap"
    )]
    TruncationCap { cap: usize, er: f64 },
    #[error("kernel part check failed: {0}")]
    MalformedKernel(String),
}

/// One violated invariant, with the offending entry and its magnitude.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// `D0[s, s]` must be strictly negative.
    DiagonalSign { phase: usize, value: f64 },
    /// Off-diagonal `D0` entries and all `D_k` (`k >= 1`) entries must be
    /// nonnegative.
    NegativeEntry {
        matrix: usize,
        row: usize,
        col: usize,
        value: f64,
    },
    /// Row `phase` of `D = sum_k D_k` must sum to zero within [`ROW_SUM_TOL`].
    RowSum { phase: usize, residual: f64 },
    /// `sum_{k>=1} D_k` is identically zero: the process never generates
    /// arrivals.
    NoArrivals,
    /// The phase chain is not a single communicating class.
    Reducible { unreachable: Vec<usize> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DiagonalSign { phase, value } => write!(
                f,
                "D0[{phase}, {phase}] = {value} but the diagonal must be strictly negative"
            ),
            Violation::NegativeEntry {
                matrix,
                row,
                col,
                value,
            } => write!(
                f,
                "D{matrix}[{row}, {col}] = {value} but must be nonnegative"
            ),
            Violation::RowSum { phase, residual } => write!(
                f,
                "row {phase} of the generator D sums to {residual:e} (tolerance {ROW_SUM_TOL:e})"
            ),
            Violation::NoArrivals => {
                write!(f, "sum of D_k for k >= 1 is zero: arrivals can never occur")
            }
            Violation::Reducible { unreachable } => write!(
                f,
                "phase chain is reducible; phases {unreachable:?} do not communicate with phase 0"
            ),
        }
    }
}

/// Outcome of checking every structural invariant of a [`BmapSpec`].
///
/// Violations are collected rather than thrown so the caller can decide
/// what to do with a partially broken specification.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "all invariants hold");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "- {v}")?;
        }
        Ok(())
    }
}

/// A batch Markovian arrival process plus the frame duration `T` used to
/// discretise it.
///
/// Rates are per unit time; every frame-level quantity multiplies by `T`
/// exactly once, at kernel construction.
#[derive(Debug, Clone, PartialEq)]
pub struct BmapSpec {
    d: Vec<Array2<f64>>,
    frame_duration: f64,
}

impl BmapSpec {
    /// Builds a spec from the batch matrices `[D0, D1, ..., DK]`.
    ///
    /// Only structural problems (shape, finiteness, missing matrices) are
    /// errors here; semantic invariants are reported by [`Self::validate`].
    pub fn new(d: Vec<Array2<f64>>, frame_duration: f64) -> Result<Self, BmapError> {
        if d.len() < 2 {
            return Err(BmapError::TooFewMatrices(d.len()));
        }
        let s = d[0].nrows();
        for (index, m) in d.iter().enumerate() {
            if m.nrows() != s || m.ncols() != s || s == 0 {
                return Err(BmapError::DimensionMismatch {
                    index,
                    rows: m.nrows(),
                    cols: m.ncols(),
                    expected: s,
                });
            }
            for ((row, col), &v) in m.indexed_iter() {
                if !v.is_finite() {
                    return Err(BmapError::NonFiniteEntry { index, row, col });
                }
            }
        }
        if !(frame_duration > 0.0 && frame_duration.is_finite()) {
            return Err(BmapError::InvalidFrameDuration(frame_duration));
        }
        Ok(Self { d, frame_duration })
    }

    /// Convenience constructor from row-major nested vectors, as found in
    /// config files.
    pub fn from_rows(matrices: &[Vec<Vec<f64>>], frame_duration: f64) -> Result<Self, BmapError> {
        let mut d = Vec::with_capacity(matrices.len());
        for (index, rows) in matrices.iter().enumerate() {
            let n = rows.len();
            let mut m = Array2::zeros((n, n));
            for (i, row) in rows.iter().enumerate() {
                if row.len() != n {
                    return Err(BmapError::DimensionMismatch {
                        index,
                        rows: n,
                        cols: row.len(),
                        expected: n,
                    });
                }
                for (j, &v) in row.iter().enumerate() {
                    m[[i, j]] = v;
                }
            }
            d.push(m);
        }
        Self::new(d, frame_duration)
    }

    /// Number of phases `S`.
    pub fn phases(&self) -> usize {
        self.d[0].nrows()
    }

    /// Maximum batch size `K`.
    pub fn max_batch(&self) -> usize {
        self.d.len() - 1
    }

    pub fn frame_duration(&self) -> f64 {
        self.frame_duration
    }

    /// The batch matrix `D_k`.
    pub fn batch_matrix(&self, k: usize) -> &Array2<f64> {
        &self.d[k]
    }

    pub fn batch_matrices(&self) -> &[Array2<f64>] {
        &self.d
    }

    /// The generator `D = sum_k D_k`.
    pub fn generator(&self) -> Array2<f64> {
        let mut g = self.d[0].clone();
        for m in &self.d[1..] {
            g += m;
        }
        g
    }

    /// Per-phase event rates `lambda_s = -D0[s, s]`.
    pub fn event_rates(&self) -> Array1<f64> {
        Array1::from_iter(self.d[0].diag().iter().map(|&v| -v))
    }

    /// Checks every invariant and reports all violations.
    pub fn validate(&self) -> ValidationReport {
        let s = self.phases();
        let mut violations = Vec::new();

        for phase in 0..s {
            let value = self.d[0][[phase, phase]];
            if value >= 0.0 {
                violations.push(Violation::DiagonalSign { phase, value });
            }
        }
        for ((row, col), &value) in self.d[0].indexed_iter() {
            if row != col && value < 0.0 {
                violations.push(Violation::NegativeEntry {
                    matrix: 0,
                    row,
                    col,
                    value,
                });
            }
        }
        for (k, m) in self.d.iter().enumerate().skip(1) {
            for ((row, col), &value) in m.indexed_iter() {
                if value < 0.0 {
                    violations.push(Violation::NegativeEntry {
                        matrix: k,
                        row,
                        col,
                        value,
                    });
                }
            }
        }

        let generator = self.generator();
        for phase in 0..s {
            let residual: f64 = generator.row(phase).sum();
            if residual.abs() > ROW_SUM_TOL {
                violations.push(Violation::RowSum { phase, residual });
            }
        }

        let any_arrival = self.d[1..]
            .iter()
            .any(|m| m.iter().any(|&v| v > 0.0));
        if !any_arrival {
            violations.push(Violation::NoArrivals);
        }

        let unreachable = phases_outside_class_of_zero(&generator);
        if !unreachable.is_empty() {
            violations.push(Violation::Reducible { unreachable });
        }

        ValidationReport { violations }
    }

    /// Errors with the full report when any invariant is violated.
    pub fn require_valid(&self) -> Result<(), BmapError> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(BmapError::Invalid(report))
        }
    }

    /// Stationary probability vector of the phase chain: `pi D = 0`,
    /// `pi e = 1`.
    pub fn stationary_phase_vector(&self) -> Result<Array1<f64>, BmapError> {
        self.require_valid()?;
        let generator = self.generator();
        let rate = self.uniformization_rate();
        let n = self.phases();
        let mut p = generator / rate;
        for i in 0..n {
            p[[i, i]] += 1.0;
        }
        Ok(solve::gth(&p))
    }

    /// Mean steady-state arrival rate in packets per unit time:
    /// `pi (sum_k k D_k) e`.
    pub fn mean_arrival_rate(&self) -> Result<f64, BmapError> {
        let pi = self.stationary_phase_vector()?;
        let mut weighted = Array2::zeros((self.phases(), self.phases()));
        for (k, m) in self.d.iter().enumerate().skip(1) {
            weighted.scaled_add(k as f64, m);
        }
        let per_phase = weighted.sum_axis(ndarray::Axis(1));
        Ok(pi.dot(&per_phase))
    }

    /// Row-stochastic phase-transition matrix over one frame,
    /// `Phi = exp(D * T)`, computed by uniformization.
    pub fn phase_transition_matrix(&self) -> Result<Array2<f64>, BmapError> {
        self.require_valid()?;
        Ok(self.phase_transition_over(self.frame_duration))
    }

    /// `exp(D * t)` for an arbitrary horizon `t`; used for semigroup checks
    /// and by [`Self::phase_transition_matrix`] with `t = T`.
    pub(crate) fn phase_transition_over(&self, t: f64) -> Array2<f64> {
        expm_uniformized(&self.generator(), t, self.uniformization_rate())
    }

    fn uniformization_rate(&self) -> f64 {
        let max_rate = self.event_rates().iter().cloned().fold(0.0, f64::max);
        max_rate * 1.001
    }

    /// Builds the per-frame kernel with the default truncation cap.
    pub fn frame_kernel(&self, er: f64) -> Result<FrameArrivalKernel, BmapError> {
        let mean_counts: Vec<f64> = self
            .event_rates()
            .iter()
            .map(|&r| r * self.frame_duration)
            .collect();
        let max_mean = mean_counts.iter().cloned().fold(0.0, f64::max);
        let cap = (10.0 * max_mean).ceil() as usize + 50;
        self.frame_kernel_with_cap(er, cap)
    }

    /// Builds the per-frame kernel with an explicit cap on the truncation
    /// bound `A`.
    pub fn frame_kernel_with_cap(
        &self,
        er: f64,
        cap: usize,
    ) -> Result<FrameArrivalKernel, BmapError> {
        self.require_valid()?;
        if !(er > 0.0 && er < 1.0) {
            return Err(BmapError::InvalidTruncationTolerance(er));
        }
        let mean_counts: Vec<f64> = self
            .event_rates()
            .iter()
            .map(|&r| r * self.frame_duration)
            .collect();
        let xi = poisson_count_pmfs(&mean_counts, er, self.max_batch(), cap)?;
        let phi = self.phase_transition_over(self.frame_duration);
        FrameArrivalKernel::from_parts(phi, xi, er)
    }

    /// Returns a spec with every `D_k` multiplied by `rho`.
    ///
    /// The mean arrival rate scales by exactly `rho`; the stationary phase
    /// vector is unchanged.
    pub fn scale_intensity(&self, rho: f64) -> Result<BmapSpec, BmapError> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(BmapError::InvalidScale(rho));
        }
        Ok(BmapSpec {
            d: self.d.iter().map(|m| m * rho).collect(),
            frame_duration: self.frame_duration,
        })
    }
}

/// Per-frame arrival pmf columns: for each phase (column index), the
/// probability of `a` arrivals in one frame, `a = 0..=A`, truncated at the
/// smallest `A >= a_floor` whose tail mass is below `er` for every phase.
///
/// Values are built by the multiplicative Poisson recurrence
/// `f_a = f_{a-1} * mu / a` starting from `f_0 = exp(-mu)`, which keeps all
/// arithmetic nonnegative. A zero mean count degenerates cleanly to a unit
/// mass at `a = 0`.
pub fn poisson_count_pmfs(
    mean_counts: &[f64],
    er: f64,
    a_floor: usize,
    cap: usize,
) -> Result<Vec<Array1<f64>>, BmapError> {
    let s = mean_counts.len();
    let mut current: Vec<f64> = mean_counts.iter().map(|&m| (-m).exp()).collect();
    let mut cumulative = current.clone();
    let mut rows: Vec<Array1<f64>> = vec![Array1::from_vec(current.clone())];
    let mut a = 0usize;
    loop {
        let tails_ok = cumulative.iter().all(|&c| 1.0 - c < er);
        if a >= a_floor && tails_ok {
            break;
        }
        a += 1;
        if a > cap {
            return Err(BmapError::TruncationCap { cap, er });
        }
        for phase in 0..s {
            current[phase] *= mean_counts[phase] / a as f64;
            cumulative[phase] += current[phase];
        }
        rows.push(Array1::from_vec(current.clone()));
    }
    Ok(rows)
}

/// The per-frame probability building blocks consumed by the queue chain:
/// the phase-transition matrix `Phi`, the diagonal arrival-count matrices
/// `xi_0..xi_A` (stored as their diagonals), and the per-phase truncation
/// tail.
#[derive(Debug, Clone)]
pub struct FrameArrivalKernel {
    phi: Array2<f64>,
    xi: Vec<Array1<f64>>,
    tail: Array1<f64>,
    er: f64,
}

impl FrameArrivalKernel {
    /// Assembles a kernel from explicit parts, checking the stochastic
    /// invariants: `Phi` rows sum to 1 within 1e-10 with entries in [0, 1];
    /// each `xi_a` diagonal lies in [0, 1]; and per phase the captured mass
    /// `sum_a xi_a` leaves a tail below `er`.
    pub fn from_parts(
        phi: Array2<f64>,
        xi: Vec<Array1<f64>>,
        er: f64,
    ) -> Result<Self, BmapError> {
        let s = phi.nrows();
        if phi.ncols() != s || s == 0 {
            return Err(BmapError::MalformedKernel(format!(
                "phase-transition matrix is {}x{}",
                phi.nrows(),
                phi.ncols()
            )));
        }
        if xi.is_empty() {
            return Err(BmapError::MalformedKernel(
                "no arrival-count vectors".into(),
            ));
        }
        for (row, r) in phi.rows().into_iter().enumerate() {
            let sum = r.sum();
            if (sum - 1.0).abs() > 1e-10 {
                return Err(BmapError::MalformedKernel(format!(
                    "phase-transition row {row} sums to {sum}"
                )));
            }
            if r.iter().any(|&v| !(0.0..=1.0 + 1e-12).contains(&v)) {
                return Err(BmapError::MalformedKernel(format!(
                    "phase-transition row {row} has an entry outside [0, 1]"
                )));
            }
        }
        let mut tail = Array1::zeros(s);
        for phase in 0..s {
            let mut captured = 0.0;
            for (a, v) in xi.iter().enumerate() {
                if v.len() != s {
                    return Err(BmapError::MalformedKernel(format!(
                        "arrival vector {a} has length {}, expected {s}",
                        v.len()
                    )));
                }
                let p = v[phase];
                if !(0.0..=1.0 + 1e-12).contains(&p) {
                    return Err(BmapError::MalformedKernel(format!(
                        "xi_{a}[{phase}] = {p} outside [0, 1]"
                    )));
                }
                captured += p;
            }
            let t = (1.0 - captured).max(0.0);
            if t >= er {
                return Err(BmapError::MalformedKernel(format!(
                    "phase {phase} tail mass {t:e} is not below er = {er:e}"
                )));
            }
            tail[phase] = t;
        }
        Ok(Self { phi, xi, tail, er })
    }

    pub fn phases(&self) -> usize {
        self.phi.nrows()
    }

    /// Truncation bound `A`.
    pub fn a_max(&self) -> usize {
        self.xi.len() - 1
    }

    pub fn phi(&self) -> &Array2<f64> {
        &self.phi
    }

    /// Diagonal of `xi_a`.
    pub fn xi(&self, a: usize) -> &Array1<f64> {
        &self.xi[a]
    }

    /// Per-phase truncated tail mass.
    pub fn tail(&self) -> &Array1<f64> {
        &self.tail
    }

    /// Largest per-phase tail mass.
    pub fn tail_mass(&self) -> f64 {
        self.tail.iter().cloned().fold(0.0, f64::max)
    }

    /// Requested truncation tolerance.
    pub fn truncation_tolerance(&self) -> f64 {
        self.er
    }

    /// Arrival-count pmf for one phase with the truncated tail folded into
    /// the last bucket, so it sums to exactly 1. This is the distribution
    /// the queue chain uses: counts beyond `A` are treated as `A`.
    pub fn capped_arrival_pmf(&self, phase: usize) -> Vec<f64> {
        let mut pmf: Vec<f64> = self.xi.iter().map(|v| v[phase]).collect();
        let last = pmf.len() - 1;
        pmf[last] += self.tail[phase];
        pmf
    }

    /// Mean of [`Self::capped_arrival_pmf`].
    pub fn capped_mean_arrivals(&self, phase: usize) -> f64 {
        self.capped_arrival_pmf(phase)
            .iter()
            .enumerate()
            .map(|(a, &p)| a as f64 * p)
            .sum()
    }
}

/// `exp(Q * t)` for a conservative generator `Q` via uniformization:
/// the Poisson-weighted sum of powers of `P = I + Q / rate`, truncated once
/// the cumulative Poisson weight exceeds `1 - 1e-14`. Horizons with
/// `rate * t > 32` are halved recursively and squared, which keeps the
/// series short and the arithmetic nonnegative at any load.
fn expm_uniformized(q: &Array2<f64>, t: f64, rate: f64) -> Array2<f64> {
    let n = q.nrows();
    if t == 0.0 || rate == 0.0 {
        return Array2::eye(n);
    }
    let mu = rate * t;
    if mu > 32.0 {
        let half = expm_uniformized(q, t / 2.0, rate);
        return half.dot(&half);
    }
    let mut p = q / rate;
    for i in 0..n {
        p[[i, i]] += 1.0;
    }
    let mut weight = (-mu).exp();
    let mut cumulative = weight;
    let mut term = Array2::<f64>::eye(n);
    let mut result = &term * weight;
    let mut k = 0usize;
    while cumulative < 1.0 - 1e-14 {
        k += 1;
        weight *= mu / k as f64;
        term = term.dot(&p);
        result.scaled_add(weight, &term);
        cumulative += weight;
    }
    result
}

/// Phases that do not communicate with phase 0 under the off-diagonal
/// sparsity pattern of the generator.
fn phases_outside_class_of_zero(generator: &Array2<f64>) -> Vec<usize> {
    let n = generator.nrows();
    let forward = reachable(generator, false);
    let backward = reachable(generator, true);
    (0..n)
        .filter(|&s| !(forward[s] && backward[s]))
        .collect()
}

fn reachable(generator: &Array2<f64>, transpose: bool) -> Vec<bool> {
    let n = generator.nrows();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            let v = if transpose {
                generator[[j, i]]
            } else {
                generator[[i, j]]
            };
            if i != j && v > 0.0 && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen
}
