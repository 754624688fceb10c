//! Crate-wide error type.
//!
//! Every fallible operation in this crate returns [`Error`]. Variants are
//! grouped by the layer that raises them: chain validation, quadrature and
//! certainty-equivalent evaluation, grid plumbing, and the verification
//! passes. The CLI maps these onto process exit codes; the library itself
//! never exits or panics on bad numeric input.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A transition-matrix row has a negative entry or does not sum to 1
    /// within tolerance.
    #[error("transition row {row} is not a probability vector (sum {sum})")]
    NonStochasticRow { row: usize, sum: f64 },

    /// The stationary distribution is not unique because the chain has more
    /// than one closed communicating class.
    #[error("chain is reducible; stationary distribution is not unique")]
    ReducibleChain,

    /// A scalar argument fell outside its mathematical domain.
    #[error("{context}: argument {value} outside domain")]
    DomainError { context: &'static str, value: f64 },

    /// The integrand produced a non-finite value at a quadrature node.
    #[error("integrand not finite at shock value {z}")]
    NonFiniteIntegrand { z: f64 },

    /// The inner exponential average of the certainty equivalent underflowed
    /// to zero; returning +inf is forbidden, so the condition is signalled.
    #[error("certainty-equivalent inner average underflowed to zero")]
    NumericUnderflow,

    /// A required shock moment (mean or reciprocal mean) is infinite.
    #[error("shock moment {moment} is infinite")]
    InfiniteMoment { moment: &'static str },

    /// Two gridded functions do not share the same income grid or regime
    /// count.
    #[error("gridded functions disagree on grid or regime count")]
    GridMismatch,

    /// A function tagged as a value function violates the membership
    /// conditions (finite, non-negative, non-decreasing, discretely concave)
    /// beyond tolerance.
    #[error("invalid value function: {detail}")]
    InvalidValueTag { detail: String },

    /// A policy field violates feasibility 0 <= phi(x) <= x at a grid node.
    #[error("policy infeasible at node {node}, regime {regime}")]
    InfeasiblePolicy { node: usize, regime: usize },

    /// The Euler equation was requested at a point where the policy sits on
    /// the boundary of [0, x] (directly, or through a next-period consumption
    /// that vanishes at a quadrature node), where it does not hold.
    #[error("policy at income {x}, regime {regime} is at the boundary; Euler equation undefined")]
    BoundaryPolicy { x: f64, regime: usize },

    /// The distorted-measure normalizer underflowed to zero.
    #[error("distorted measure has degenerate (zero) total mass")]
    DegenerateMass,

    /// A sample-based estimate was requested from an empty sample.
    #[error("empty sample after burn-in")]
    EmptySample,
}
