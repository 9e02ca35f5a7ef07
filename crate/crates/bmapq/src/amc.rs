//! Adaptive modulation and coding: the IEEE 802.16 rate table, SNR-to-rate
//! mapping, per-frame packet capacity, and the transmission-count pmf.
//!
//! The receiver SNR axis is divided into nonoverlapping intervals by the
//! thresholds `Gamma_n`; the link runs at rate ID `n` when
//! `Gamma_n <= gamma < Gamma_{n+1}`, and transmits nothing below `Gamma_0`.
//! Capacity in packets per frame scales from the allocated bandwidth `b`
//! (defined as packets per frame at rate ID 0) by the ratio of information
//! bits per symbol.

use serde::Deserialize;
use statrs::distribution::{Binomial, Discrete, DiscreteCDF};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AmcError {
    #[error("rate table must not be empty")]
    EmptyTable,
    #[error("rate table row {index} has rate_id {found}, expected {expected}")]
    NonContiguousIds {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("rate table thresholds must be strictly increasing (row {index})")]
    ThresholdOrder { index: usize },
    #[error("rate table bits/symbol must be strictly increasing and positive (row {index})")]
    BitsOrder { index: usize },
    #[error("rate_id {0} is outside the table (0..{1})")]
    RateIdOutOfRange(usize, usize),
    #[error("bandwidth must be at least 1 packet per frame")]
    InvalidBandwidth,
    #[error("success probability must lie in (0, 1], got {0}")]
    InvalidSuccessProbability(f64),
    #[error("channel rate-id mix must have positive weights summing to 1 (sum {0})")]
    InvalidMix(f64),
}

/// One modulation/coding profile.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RateRow {
    pub rate_id: usize,
    pub modulation: String,
    pub bits_per_symbol: f64,
    pub snr_threshold_db: f64,
}

/// Ordered list of modulation/coding profiles with strictly increasing SNR
/// thresholds and bits per symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    rows: Vec<RateRow>,
}

impl RateTable {
    pub fn new(rows: Vec<RateRow>) -> Result<Self, AmcError> {
        if rows.is_empty() {
            return Err(AmcError::EmptyTable);
        }
        for (index, row) in rows.iter().enumerate() {
            if row.rate_id != index {
                return Err(AmcError::NonContiguousIds {
                    index,
                    found: row.rate_id,
                    expected: index,
                });
            }
            if index > 0 {
                if row.snr_threshold_db <= rows[index - 1].snr_threshold_db {
                    return Err(AmcError::ThresholdOrder { index });
                }
                if row.bits_per_symbol <= rows[index - 1].bits_per_symbol {
                    return Err(AmcError::BitsOrder { index });
                }
            }
            if row.bits_per_symbol <= 0.0 {
                return Err(AmcError::BitsOrder { index });
            }
        }
        Ok(Self { rows })
    }

    /// The seven IEEE 802.16 profiles, BPSK 1/2 through 64QAM 3/4.
    pub fn ieee802_16() -> Self {
        let rows = [
            ("BPSK (1/2)", 0.5, 6.4),
            ("QPSK (1/2)", 1.0, 9.4),
            ("QPSK (3/4)", 1.5, 11.2),
            ("16QAM (1/2)", 2.0, 16.4),
            ("16QAM (3/4)", 3.0, 18.2),
            ("64QAM (2/3)", 4.0, 22.7),
            ("64QAM (3/4)", 4.5, 24.4),
        ]
        .into_iter()
        .enumerate()
        .map(|(rate_id, (modulation, bits_per_symbol, snr_threshold_db))| RateRow {
            rate_id,
            modulation: modulation.to_string(),
            bits_per_symbol,
            snr_threshold_db,
        })
        .collect();
        Self::new(rows).expect("built-in table is valid")
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[RateRow] {
        &self.rows
    }

    pub fn bits_per_symbol(&self, rate_id: usize) -> Result<f64, AmcError> {
        self.rows
            .get(rate_id)
            .map(|r| r.bits_per_symbol)
            .ok_or(AmcError::RateIdOutOfRange(rate_id, self.rows.len()))
    }

    /// Rate ID for a received SNR: `None` below the first threshold,
    /// otherwise the largest `n` with `Gamma_n <= gamma` (the top interval
    /// is unbounded).
    pub fn rate_id_for_snr(&self, gamma_db: f64) -> Option<usize> {
        let mut selected = None;
        for row in &self.rows {
            if gamma_db >= row.snr_threshold_db {
                selected = Some(row.rate_id);
            }
        }
        selected
    }
}

impl Default for RateTable {
    fn default() -> Self {
        Self::ieee802_16()
    }
}

/// Which packets take part in the per-frame transmission draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransmitMode {
    /// Every queued packet draws a success independently; at most
    /// `D' = min(x, D)` successes leave the queue, the rest stay. This is
    /// the default and the form the analytic chain uses.
    AllQueued,
    /// Only the `min(x, D)` packets that fit the frame draw; no truncation
    /// term is needed.
    AttemptedOnly,
}

/// Per-frame transmission parameters: allocated bandwidth `b` (packets per
/// frame at rate ID 0), per-packet success probability, and the draw mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionModel {
    pub bandwidth: usize,
    pub p_success: f64,
    pub mode: TransmitMode,
}

impl TransmissionModel {
    pub fn new(bandwidth: usize, p_success: f64, mode: TransmitMode) -> Result<Self, AmcError> {
        if bandwidth == 0 {
            return Err(AmcError::InvalidBandwidth);
        }
        if !(p_success > 0.0 && p_success <= 1.0) {
            return Err(AmcError::InvalidSuccessProbability(p_success));
        }
        Ok(Self {
            bandwidth,
            p_success,
            mode,
        })
    }
}

/// Packets per frame the link can carry: zero below the first threshold,
/// otherwise `floor(b * bits(n) / bits(0))`.
pub fn capacity_packets(
    rate_id: Option<usize>,
    model: &TransmissionModel,
    table: &RateTable,
) -> Result<usize, AmcError> {
    match rate_id {
        None => Ok(0),
        Some(n) => {
            let bits = table.bits_per_symbol(n)?;
            let base = table.bits_per_symbol(0)?;
            Ok((model.bandwidth as f64 * bits / base).floor() as usize)
        }
    }
}

/// Probability that exactly `k` packets leave a queue of `x` packets in one
/// frame with capacity `D`, for `k = 0..=min(x, D)`.
///
/// In [`TransmitMode::AllQueued`] every queued packet draws success with
/// probability `p`; counts beyond the effective capacity `D' = min(x, D)`
/// are truncated into `k = D'`. In [`TransmitMode::AttemptedOnly`] only
/// `min(x, D)` packets draw, so the pmf is plain binomial.
pub fn transmit_count_pmf(occupancy: usize, capacity: usize, model: &TransmissionModel) -> Vec<f64> {
    let effective = occupancy.min(capacity);
    let p = model.p_success;
    if occupancy == 0 || effective == 0 {
        return vec![1.0];
    }
    let trials = match model.mode {
        TransmitMode::AllQueued => occupancy,
        TransmitMode::AttemptedOnly => effective,
    };
    if p == 1.0 {
        let mut pmf = vec![0.0; effective + 1];
        pmf[effective] = 1.0;
        return pmf;
    }
    let binomial = Binomial::new(p, trials as u64).expect("validated p and trials");
    let mut pmf = Vec::with_capacity(effective + 1);
    for k in 0..effective {
        pmf.push(binomial.pmf(k as u64));
    }
    if effective == trials {
        pmf.push(binomial.pmf(effective as u64));
    } else {
        // Truncation bucket: P(successes >= D').
        pmf.push(binomial.sf(effective as u64 - 1));
    }
    pmf
}

/// How the per-frame rate ID is chosen.
///
/// The analytic chain treats the mix case as an i.i.d. draw per frame and
/// mixes the transmission pmfs with the given weights; the simulator draws
/// a rate ID each frame.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    /// The link always runs at this rate ID.
    FixedRateId(usize),
    /// The link runs at whatever rate the given SNR selects (possibly no
    /// transmission at all).
    FixedSnrDb(f64),
    /// I.i.d. per-frame draw over rate IDs with the given weights.
    RateIdMix(Vec<(usize, f64)>),
}

impl ChannelModel {
    /// The per-frame capacity distribution `(packets, weight)` this channel
    /// induces, with weights summing to 1.
    pub fn capacity_distribution(
        &self,
        model: &TransmissionModel,
        table: &RateTable,
    ) -> Result<Vec<(usize, f64)>, AmcError> {
        match self {
            ChannelModel::FixedRateId(id) => {
                if *id >= table.len() {
                    return Err(AmcError::RateIdOutOfRange(*id, table.len()));
                }
                Ok(vec![(capacity_packets(Some(*id), model, table)?, 1.0)])
            }
            ChannelModel::FixedSnrDb(gamma) => {
                let id = table.rate_id_for_snr(*gamma);
                Ok(vec![(capacity_packets(id, model, table)?, 1.0)])
            }
            ChannelModel::RateIdMix(mix) => {
                let total: f64 = mix.iter().map(|(_, w)| w).sum();
                if mix.is_empty()
                    || mix.iter().any(|(_, w)| *w <= 0.0)
                    || (total - 1.0).abs() > 1e-9
                {
                    return Err(AmcError::InvalidMix(total));
                }
                let mut dist = Vec::with_capacity(mix.len());
                for (id, weight) in mix {
                    if *id >= table.len() {
                        return Err(AmcError::RateIdOutOfRange(*id, table.len()));
                    }
                    dist.push((capacity_packets(Some(*id), model, table)?, weight / total));
                }
                Ok(dist)
            }
        }
    }
}
