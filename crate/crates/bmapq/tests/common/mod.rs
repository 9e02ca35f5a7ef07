//! Shared fixtures for the integration suites: the 12-point validation
//! grid and a brute-force oracle that rebuilds the chain and its metrics
//! from first principles, independent of every library code path.

// Each integration test compiles this module separately and uses a
// different slice of it.
#![allow(dead_code)]

use bmapq::amc::{TransmissionModel, TransmitMode};
use bmapq::bmap::BmapSpec;
use ndarray::{array, Array2};

/// The two-phase batch process used throughout the numerical study:
/// batches of up to two packets, event rates 2 and 1.
pub fn two_phase_spec(frame_duration: f64) -> BmapSpec {
    BmapSpec::new(
        vec![
            array![[-2.0, 0.5], [0.125, -1.0]],
            array![[0.5, 0.25], [0.25, 0.25]],
            array![[0.25, 0.5], [0.25, 0.125]],
        ],
        frame_duration,
    )
    .unwrap()
}

/// A single-phase process with batches of one or two packets.
pub fn single_phase_batch_spec(frame_duration: f64) -> BmapSpec {
    BmapSpec::new(
        vec![array![[-1.0]], array![[0.6]], array![[0.4]]],
        frame_duration,
    )
    .unwrap()
}

pub struct GridPoint {
    pub label: String,
    pub bmap: BmapSpec,
    pub buffer: usize,
    pub rate_id: usize,
    pub rho: f64,
}

/// The validation grid: 3 loads x 2 rate IDs x 2 buffer sizes, with the
/// single-phase process on the small buffer and the two-phase process on
/// the large one.
pub fn grid() -> Vec<GridPoint> {
    let mut points = Vec::with_capacity(12);
    for &rho in &[0.5, 1.0, 2.0] {
        for &rate_id in &[0usize, 6] {
            for &(buffer, phases) in &[(10usize, 1usize), (50, 2)] {
                let base = if phases == 1 {
                    single_phase_batch_spec(1.0)
                } else {
                    two_phase_spec(1.0)
                };
                points.push(GridPoint {
                    label: format!("S={phases} X={buffer} rate={rate_id} rho={rho}"),
                    bmap: base.scale_intensity(rho).unwrap(),
                    buffer,
                    rate_id,
                    rho,
                });
            }
        }
    }
    points
}

/// Transmission parameters shared by the grid: 2 packets per frame at the
/// base rate, 0.9 per-packet success.
pub fn grid_transmission() -> TransmissionModel {
    TransmissionModel::new(2, 0.9, TransmitMode::AllQueued).unwrap()
}

/// Brute-force reconstruction of the chain and its metrics. Every
/// ingredient is recomputed here with elementary methods: Taylor-series
/// matrix exponential, factorial Poisson terms, Pascal's-triangle
/// binomials, direct enumeration of all (arrivals, departures) outcome
/// pairs, and plain power iteration.
pub struct Oracle {
    pub a_max: usize,
    pub matrix: Array2<f64>,
    pub pi: Vec<f64>,
    pub avg_queue_len: f64,
    pub avg_dropped_per_frame: f64,
    pub drop_probability: f64,
    pub throughput: f64,
    pub avg_delay_frames: f64,
    pub lambda_frame: f64,
}

pub fn oracle(
    spec: &BmapSpec,
    er: f64,
    buffer: usize,
    capacity: usize,
    p_success: f64,
) -> Oracle {
    let phases = spec.phases();
    let t = spec.frame_duration();

    // Phase-transition matrix by Taylor series.
    let phi = taylor_expm(&spec.generator(), t);

    // Truncation bound: smallest A >= K with every phase's Poisson tail
    // below er; arrival weights with the tail folded into A.
    let rates: Vec<f64> = spec.event_rates().to_vec();
    let mut a_max = spec.max_batch();
    loop {
        let worst_tail = rates
            .iter()
            .map(|&r| poisson_tail_beyond(r * t, a_max))
            .fold(0.0, f64::max);
        if worst_tail < er {
            break;
        }
        a_max += 1;
        assert!(a_max < 500, "oracle truncation ran away");
    }
    let mut w = vec![vec![0.0; phases]; a_max + 1];
    for (l, &r) in rates.iter().enumerate() {
        let mut captured = 0.0;
        for (a, row) in w.iter_mut().enumerate().take(a_max) {
            let f = poisson_term(r * t, a);
            row[l] = f;
            captured += f;
        }
        w[a_max][l] = 1.0 - captured;
    }

    // Transmission pmfs per occupancy: binomial over all queued packets,
    // truncated at min(x, capacity).
    let transmit: Vec<Vec<f64>> = (0..=buffer)
        .map(|x| truncated_binomial(x, capacity, p_success))
        .collect();

    // Direct outcome enumeration.
    let n = (buffer + 1) * phases;
    let mut matrix = Array2::<f64>::zeros((n, n));
    for x in 0..=buffer {
        for s in 0..phases {
            for l in 0..phases {
                for (a, w_row) in w.iter().enumerate() {
                    for (k, &t_k) in transmit[x].iter().enumerate() {
                        let landing = (x + a - k).min(buffer);
                        matrix[[x * phases + s, landing * phases + l]] +=
                            phi[[s, l]] * w_row[l] * t_k;
                    }
                }
            }
        }
    }

    // Stationary vector by long power iteration.
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..5_000_000 {
        let mut next = vec![0.0; n];
        for (i, &p) in pi.iter().enumerate() {
            if p > 0.0 {
                for j in 0..n {
                    next[j] += p * matrix[[i, j]];
                }
            }
        }
        let diff = pi
            .iter()
            .zip(next.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        pi = next;
        if diff < 1e-15 {
            break;
        }
    }
    let total: f64 = pi.iter().sum();
    for p in &mut pi {
        *p /= total;
    }

    // Metrics straight from the enumeration.
    let mut avg_queue_len = 0.0;
    let mut lambda_frame = 0.0;
    let mut avg_dropped = 0.0;
    let mut departures = 0.0;
    for x in 0..=buffer {
        for s in 0..phases {
            let p_state = pi[x * phases + s];
            avg_queue_len += x as f64 * p_state;
            for l in 0..phases {
                for (a, w_row) in w.iter().enumerate() {
                    let joint = p_state * phi[[s, l]] * w_row[l];
                    lambda_frame += joint * a as f64;
                    for (k, &t_k) in transmit[x].iter().enumerate() {
                        if x + a > buffer + k {
                            avg_dropped += joint * t_k * (x + a - k - buffer) as f64;
                        }
                        departures += joint * t_k * k as f64;
                    }
                }
            }
        }
    }
    let drop_probability = avg_dropped / lambda_frame;
    let throughput = lambda_frame - avg_dropped;
    let avg_delay_frames = avg_queue_len / throughput;
    let _ = departures;

    Oracle {
        a_max,
        matrix,
        pi,
        avg_queue_len,
        avg_dropped_per_frame: avg_dropped,
        drop_probability,
        throughput,
        avg_delay_frames,
        lambda_frame,
    }
}

fn taylor_expm(q: &Array2<f64>, t: f64) -> Array2<f64> {
    let n = q.nrows();
    let qt = q * t;
    let mut term = Array2::<f64>::eye(n);
    let mut sum = term.clone();
    for k in 1..500 {
        term = term.dot(&qt) / k as f64;
        sum += &term;
        if term.iter().fold(0.0f64, |m, v| m.max(v.abs())) < 1e-16 {
            break;
        }
    }
    sum
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn poisson_term(mean: f64, a: usize) -> f64 {
    (-mean).exp() * mean.powi(a as i32) / factorial(a)
}

fn poisson_tail_beyond(mean: f64, a_max: usize) -> f64 {
    1.0 - (0..=a_max).map(|a| poisson_term(mean, a)).sum::<f64>()
}

fn pascal_row(n: usize) -> Vec<f64> {
    let mut row = vec![1.0f64];
    for _ in 0..n {
        let mut next = vec![1.0];
        for pair in row.windows(2) {
            next.push(pair[0] + pair[1]);
        }
        next.push(1.0);
        row = next;
    }
    row
}

fn truncated_binomial(occupancy: usize, capacity: usize, p: f64) -> Vec<f64> {
    let effective = occupancy.min(capacity);
    if occupancy == 0 || effective == 0 {
        return vec![1.0];
    }
    let coeff = pascal_row(occupancy);
    let full: Vec<f64> = (0..=occupancy)
        .map(|k| coeff[k] * p.powi(k as i32) * (1.0 - p).powi((occupancy - k) as i32))
        .collect();
    let mut pmf: Vec<f64> = full[..effective].to_vec();
    pmf.push(full[effective..].iter().sum());
    pmf
}
