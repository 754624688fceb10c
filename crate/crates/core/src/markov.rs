//! Finite-state Markov chain for the regime process.
//!
//! The regime process is a time-homogeneous chain on states `0..n` with a
//! row-stochastic transition matrix `p`, where `p[from][to]` is the
//! probability of moving from `from` to `to` in one step. This module
//! validates candidate matrices, records whether the chain is irreducible
//! (the positive-entry digraph is strongly connected), and computes the
//! stationary distribution `pi` solving `pi^T p = pi^T`.
//!
//! Irreducibility is recorded rather than required: the solver downstream
//! works on reducible chains too, but long-run statements about the regime
//! marginals only make sense when the stationary distribution is unique.

use crate::error::{Error, Result};

/// Validated finite-state Markov chain.
///
/// Immutable after construction and safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeChain {
    n_states: usize,
    /// Row-major `n x n`, rows normalized to unit mass.
    transition: Vec<f64>,
    irreducible: bool,
}

impl RegimeChain {
    /// Number of regimes.
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Transition probability from `from` to `to`.
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.transition[from * self.n_states + to]
    }

    /// The full outgoing row of state `from`.
    pub fn row(&self, from: usize) -> &[f64] {
        &self.transition[from * self.n_states..(from + 1) * self.n_states]
    }

    /// Whether every state can reach every other through positive-probability
    /// paths.
    pub fn is_irreducible(&self) -> bool {
        self.irreducible
    }
}

/// Validates a candidate transition matrix and classifies its communication
/// structure.
///
/// Rows may carry the rounding noise of decimal config literals: a row sum
/// within `1e-9` of 1 is accepted and renormalized. Rows already within
/// `1e-13` of unit mass are kept verbatim so that validating an accepted
/// matrix a second time reproduces it exactly.
///
/// Reducible matrices are accepted but flagged; only
/// [`stationary_distribution`] insists on irreducibility.
///
/// # Errors
///
/// [`Error::NonStochasticRow`] if the matrix is not square, a row has a
/// negative entry, or a row sum deviates from 1 by more than `1e-9`.
pub fn validate_chain(transition: &[Vec<f64>]) -> Result<RegimeChain> {
    let n = transition.len();
    if n == 0 {
        return Err(Error::NonStochasticRow { row: 0, sum: 0.0 });
    }
    let mut flat = Vec::with_capacity(n * n);
    for (i, row) in transition.iter().enumerate() {
        if row.len() != n {
            return Err(Error::NonStochasticRow {
                row: i,
                sum: f64::NAN,
            });
        }
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&p| p < 0.0 || !p.is_finite()) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::NonStochasticRow { row: i, sum });
        }
        if (sum - 1.0).abs() <= 1e-13 {
            flat.extend_from_slice(row);
        } else {
            flat.extend(row.iter().map(|&p| p / sum));
        }
    }
    let irreducible = strongly_connected(&flat, n);
    Ok(RegimeChain {
        n_states: n,
        transition: flat,
        irreducible,
    })
}

/// Strong connectivity of the positive-entry digraph via Boolean closure.
///
/// `n` is at most a few dozen in this domain, so the cubic closure is both
/// the simplest and an entirely adequate choice.
fn strongly_connected(flat: &[f64], n: usize) -> bool {
    let mut reach = vec![false; n * n];
    for i in 0..n {
        reach[i * n + i] = true;
        for j in 0..n {
            if flat[i * n + j] > 0.0 {
                reach[i * n + j] = true;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i * n + k] {
                for j in 0..n {
                    if reach[k * n + j] {
                        reach[i * n + j] = true;
                    }
                }
            }
        }
    }
    reach.iter().all(|&r| r)
}

/// Computes the unique stationary distribution of an irreducible chain.
///
/// Solves `(p^T - I) pi = 0` with the last equation replaced by the
/// normalization `sum(pi) = 1`, by Gaussian elimination with partial
/// pivoting. The rows of `p^T - I` sum to the zero vector, so dropping one
/// loses no information, and the normalization row is independent of the
/// rest; the replaced system is nonsingular exactly when the stationary
/// distribution is unique.
///
/// # Errors
///
/// [`Error::ReducibleChain`] if the chain was flagged reducible.
pub fn stationary_distribution(chain: &RegimeChain) -> Result<Vec<f64>> {
    if !chain.irreducible {
        return Err(Error::ReducibleChain);
    }
    let n = chain.n_states;
    // Augmented matrix [A | b]: A = p^T - I with last row = ones, b = e_n.
    let mut a = vec![0.0f64; n * (n + 1)];
    for i in 0..n {
        for j in 0..n {
            a[i * (n + 1) + j] = chain.prob(j, i) - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1) * (n + 1) + j] = 1.0;
    }
    a[(n - 1) * (n + 1) + n] = 1.0;

    let m = n + 1;
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| {
                a[r * m + col]
                    .abs()
                    .partial_cmp(&a[s * m + col].abs())
                    .unwrap()
            })
            .unwrap();
        if a[pivot_row * m + col].abs() < 1e-14 {
            return Err(Error::ReducibleChain);
        }
        if pivot_row != col {
            for k in 0..m {
                a.swap(col * m + k, pivot_row * m + k);
            }
        }
        for row in (col + 1)..n {
            let factor = a[row * m + col] / a[col * m + col];
            if factor != 0.0 {
                for k in col..m {
                    a[row * m + k] -= factor * a[col * m + k];
                }
            }
        }
    }
    let mut pi = vec![0.0f64; n];
    for row in (0..n).rev() {
        let mut acc = a[row * m + n];
        for k in (row + 1)..n {
            acc -= a[row * m + k] * pi[k];
        }
        pi[row] = acc / a[row * m + row];
    }
    // Elimination can leave componentwise noise at the last-ulp scale; clamp
    // and renormalize so the returned vector is a probability vector.
    for p in pi.iter_mut() {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    for p in pi.iter_mut() {
        *p /= total;
    }
    Ok(pi)
}
