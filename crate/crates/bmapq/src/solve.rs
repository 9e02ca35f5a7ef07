//! Stationary-vector solvers for finite discrete-time Markov chains.
//!
//! Small chains go through Grassmann–Taksar–Heyman (GTH) state elimination,
//! which involves no subtractions and is numerically exact to rounding.
//! Chains above [`GTH_STATE_LIMIT`] states fall back to power iteration.
//!
//! A chain with transient states but a single closed communicating class is
//! accepted: the stationary vector is computed on the closed class and is
//! zero elsewhere. Chains with more than one closed class are rejected.

use ndarray::{Array1, Array2};
use petgraph::graph::DiGraph;
use thiserror::Error;

/// Largest dimension solved by GTH elimination; larger chains use power
/// iteration.
pub const GTH_STATE_LIMIT: usize = 2000;
/// Convergence threshold on the successive max-norm difference in power
/// iteration.
pub const POWER_ITERATION_TOL: f64 = 1e-12;
/// Iteration cap for power iteration.
pub const POWER_ITERATION_MAX: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("transition matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("row {row} of the transition matrix sums to {sum} (expected 1 within {tol:e})")]
    NotStochastic { row: usize, sum: f64, tol: f64 },
    #[error("chain is reducible: state {state} lies outside the recurrent class")]
    Reducible { state: usize },
    #[error(
        "power iteration did not converge within {iterations} iterations \
         (last residual {residual:e})"
    )]
    NonConvergence { iterations: usize, residual: f64 },
}

/// Stationary row vector of a row-stochastic matrix, plus the achieved
/// residual `max |pi P - pi|`.
///
/// Dispatches on dimension: GTH elimination up to [`GTH_STATE_LIMIT`]
/// states, power iteration beyond. Transient states receive probability
/// zero; more than one closed class is an error.
pub fn stationary(p: &Array2<f64>) -> Result<(Array1<f64>, f64), SolveError> {
    check_stochastic(p, 1e-8)?;
    let classes = closed_classes(p);
    if classes.len() != 1 {
        // Name a state from a second closed class so the caller can see
        // where the chain falls apart.
        let mut witness: Vec<usize> = classes.iter().map(|c| c[0]).collect();
        witness.sort_unstable();
        return Err(SolveError::Reducible { state: witness[1] });
    }
    let mut class = classes.into_iter().next().unwrap();
    class.sort_unstable();

    let pi_class = if class.len() == p.nrows() {
        solve_irreducible(p)?
    } else {
        let sub = restrict(p, &class);
        solve_irreducible(&sub)?
    };

    let mut pi = Array1::zeros(p.nrows());
    for (local, &global) in class.iter().enumerate() {
        pi[global] = pi_class[local];
    }
    let residual = residual_max_norm(&pi, p);
    Ok((pi, residual))
}

fn solve_irreducible(p: &Array2<f64>) -> Result<Array1<f64>, SolveError> {
    if p.nrows() <= GTH_STATE_LIMIT {
        Ok(gth(p))
    } else {
        power_iteration(p, POWER_ITERATION_TOL, POWER_ITERATION_MAX)
    }
}

/// GTH state elimination for an irreducible row-stochastic matrix.
///
/// Uses only additions, multiplications and divisions of nonnegative
/// quantities, so there is no cancellation anywhere in the elimination.
pub fn gth(p: &Array2<f64>) -> Array1<f64> {
    let n = p.nrows();
    let mut a = p.clone();
    for k in (1..n).rev() {
        let s: f64 = (0..k).map(|j| a[[k, j]]).sum();
        for i in 0..k {
            a[[i, k]] /= s;
        }
        for i in 0..k {
            let f = a[[i, k]];
            if f != 0.0 {
                for j in 0..k {
                    a[[i, j]] += f * a[[k, j]];
                }
            }
        }
    }
    let mut pi = Array1::zeros(n);
    pi[0] = 1.0;
    for k in 1..n {
        pi[k] = (0..k).map(|i| pi[i] * a[[i, k]]).sum();
    }
    let total = pi.sum();
    pi / total
}

/// Power iteration `pi <- pi P` until the successive max-norm difference
/// drops below `tol`.
pub fn power_iteration(
    p: &Array2<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<Array1<f64>, SolveError> {
    let n = p.nrows();
    let mut pi = Array1::from_elem(n, 1.0 / n as f64);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = pi.dot(p);
        residual = pi
            .iter()
            .zip(next.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        pi = next;
        if residual < tol {
            let total = pi.sum();
            return Ok(pi / total);
        }
    }
    Err(SolveError::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

/// `max |pi P - pi|` over all states.
pub fn residual_max_norm(pi: &Array1<f64>, p: &Array2<f64>) -> f64 {
    let step = pi.dot(p);
    step.iter()
        .zip(pi.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn check_stochastic(p: &Array2<f64>, tol: f64) -> Result<(), SolveError> {
    if p.nrows() != p.ncols() {
        return Err(SolveError::NotSquare {
            rows: p.nrows(),
            cols: p.ncols(),
        });
    }
    for (row, r) in p.rows().into_iter().enumerate() {
        let sum = r.sum();
        if (sum - 1.0).abs() > tol {
            return Err(SolveError::NotStochastic { row, sum, tol });
        }
    }
    Ok(())
}

/// Strongly connected components of the sparsity pattern that have no edge
/// leaving them (the closed communicating classes).
fn closed_classes(p: &Array2<f64>) -> Vec<Vec<usize>> {
    let n = p.nrows();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, n);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if i != j && p[[i, j]] > 0.0 {
                graph.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let sccs = petgraph::algo::tarjan_scc(&graph);
    let mut component = vec![0usize; n];
    for (idx, scc) in sccs.iter().enumerate() {
        for node in scc {
            component[node.index()] = idx;
        }
    }
    sccs.iter()
        .enumerate()
        .filter(|(idx, scc)| {
            scc.iter().all(|node| {
                let i = node.index();
                (0..n).all(|j| i == j || p[[i, j]] == 0.0 || component[j] == *idx)
            })
        })
        .map(|(_, scc)| scc.iter().map(|node| node.index()).collect())
        .collect()
}

fn restrict(p: &Array2<f64>, states: &[usize]) -> Array2<f64> {
    let m = states.len();
    let mut sub = Array2::zeros((m, m));
    for (i, &gi) in states.iter().enumerate() {
        for (j, &gj) in states.iter().enumerate() {
            sub[[i, j]] = p[[gi, gj]];
        }
    }
    sub
}
