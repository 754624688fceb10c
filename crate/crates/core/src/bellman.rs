//! The risk-sensitive Bellman operator and value iteration.
//!
//! For a candidate value function `v` on an income grid, one operator
//! application computes, at every node `(x, theta)`,
//!
//! ```text
//! (Lv)(x, theta) = max_{y in Y(x)} u(x - y)
//!                  + beta * rho_theta( v_hat(f(theta, y, xi), theta') )
//! ```
//!
//! where `Y(x)` is the equi-spaced investment menu
//! `{0, x/(y_count-1), ..., x}`, `rho_theta` is the entropic certainty
//! equivalent over the joint draw of next regime and shock, and `v_hat`
//! evaluates `v` off-grid by piecewise-linear interpolation with
//! final-slope extension. Ties in the maximum break toward the smallest
//! investment. Iterating `L` from the zero function climbs monotonically
//! to the fixed point; [`solve_value_function`] records the per-sweep
//! contraction diagnostics in a [`SolveReport`].
//!
//! Discrete concavity deserves a note: the exact fixed point is concave
//! in income, but a finite investment menu quantizes the argmax, leaving
//! sawtooth kinks of order `u(x_max) / (y_count - 1)^2` in the computed
//! iterates. [`concavity_tolerance`] sizes the value-tag check to that
//! quantization scale instead of demanding exact concavity.
//!
//! The per-node maximizations are independent; they run in parallel and
//! are collected in grid order, so results are bit-identical to a
//! sequential sweep.

use rayon::prelude::*;

use crate::error::{Error, Result};
pub use crate::grid::{GridSpacing, GriddedFunction, IncomeGrid};
use crate::model::{utility, weight, ModelSpec};
use crate::shock::{certainty_equivalent_over, QuadratureRule};

/// Stopping rule for value iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    /// Hard cap on operator applications, at least 1.
    pub max_iters: usize,
    /// Stop once the weighted sup-norm step falls to this level or below.
    pub tol_w: f64,
}

impl Default for StopRule {
    /// Three sweeps, no early exit: the reference pipeline's rule.
    fn default() -> Self {
        StopRule {
            max_iters: 3,
            tol_w: 0.0,
        }
    }
}

/// Diagnostics from a value-iteration run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// Operator applications performed.
    pub iterations: usize,
    /// `||V_{k+1} - V_k||_w` after each application.
    pub sup_w_deltas: Vec<f64>,
    /// Consecutive delta ratios (empirical contraction moduli).
    pub contraction_ratios: Vec<f64>,
    /// Whether the run stopped by reaching `tol_w` rather than the cap.
    pub converged: bool,
}

/// Weighted sup-norm distance `max |a - b| / w(x, theta)` over all grid
/// nodes and regimes.
///
/// # Errors
///
/// [`Error::GridMismatch`] if the operands or the spec disagree on grid
/// or regime count.
pub fn w_norm_distance(a: &GriddedFunction, b: &GriddedFunction, spec: &ModelSpec) -> Result<f64> {
    if a.grid() != b.grid() || a.n_regimes() != b.n_regimes() || a.n_regimes() != spec.n_regimes() {
        return Err(Error::GridMismatch);
    }
    let nodes = a.grid().nodes();
    let mut worst = 0.0f64;
    for theta in 0..a.n_regimes() {
        for (i, &x) in nodes.iter().enumerate() {
            let gap = (a.get(i, theta) - b.get(i, theta)).abs() / weight(spec, x, theta);
            worst = worst.max(gap);
        }
    }
    Ok(worst)
}

/// Concavity tolerance for tagging computed value iterates: the sawtooth
/// amplitude a `y_count`-point investment menu can imprint, floored at
/// 1e-9 for quadrature noise.
///
/// The objective's curvature in the investment fraction is bounded on the
/// scale of `u(x_max)`, and quantizing the argmax to steps of
/// `1/(y_count - 1)` leaves kinks of curvature times step squared.
pub fn concavity_tolerance(spec: &ModelSpec, grid: &IncomeGrid, y_count: usize) -> f64 {
    let steps = (y_count - 1) as f64;
    (utility(spec, grid.x_max()) / (steps * steps)).max(1e-9)
}

/// Free-function form of [`GriddedFunction::evaluate_value`]: linear
/// interpolation, exact at nodes, final-slope extension past `x_max`.
pub fn evaluate_value(v: &GriddedFunction, x: f64, theta: usize) -> f64 {
    v.evaluate_value(x, theta)
}

/// The continuation term `rho_theta(v_hat(f(theta, y, xi), theta'))` for
/// one investment choice, over precomputed quadrature nodes.
fn continuation(
    v: &GriddedFunction,
    spec: &ModelSpec,
    quad: &[(f64, f64)],
    theta: usize,
    y: f64,
) -> Result<f64> {
    let scale = y.powf(spec.omega[theta]);
    certainty_equivalent_over(
        quad,
        |next, z| v.evaluate_value(scale * z, next),
        spec.chain.row(theta),
        spec.gamma,
    )
}

/// One node's maximization: returns (value, argmax investment).
fn bellman_cell(
    v: &GriddedFunction,
    spec: &ModelSpec,
    quad: &[(f64, f64)],
    y_count: usize,
    x: f64,
    theta: usize,
) -> Result<(f64, f64)> {
    if x == 0.0 {
        // The investment menu degenerates to {0}.
        let ce = continuation(v, spec, quad, theta, 0.0)?;
        return Ok((utility(spec, 0.0) + spec.beta * ce, 0.0));
    }
    let steps = (y_count - 1) as f64;
    let mut best_val = f64::NEG_INFINITY;
    let mut best_y = 0.0;
    for j in 0..y_count {
        let y = x * (j as f64 / steps);
        let ce = continuation(v, spec, quad, theta, y)?;
        let val = utility(spec, x - y) + spec.beta * ce;
        // Strict improvement only: ties stay with the smallest y.
        if val > best_val {
            best_val = val;
            best_y = y;
        }
    }
    Ok((best_val, best_y))
}

/// Runs one parallel sweep over all (node, regime) cells; `cell` maps a
/// node (given by index and coordinate) to (value, policy) and the
/// collection order is the storage order, so the result is independent of
/// thread scheduling.
fn parallel_sweep<F>(grid: &IncomeGrid, n_regimes: usize, cell: F) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(usize, f64, usize) -> Result<(f64, f64)> + Sync,
{
    let n = grid.count();
    let cells: Vec<Result<(f64, f64)>> = (0..n_regimes * n)
        .into_par_iter()
        .map(|flat| cell(flat % n, grid.nodes()[flat % n], flat / n))
        .collect();
    let mut values = Vec::with_capacity(cells.len());
    let mut policies = Vec::with_capacity(cells.len());
    for c in cells {
        let (val, pol) = c?;
        values.push(val);
        policies.push(pol);
    }
    Ok((values, policies))
}

/// Applies the Bellman operator once, returning the updated value field
/// and the argmax investment policy.
///
/// # Errors
///
/// - [`Error::DomainError`] if `y_count < 2`;
/// - [`Error::GridMismatch`] if `v`'s regime count disagrees with the spec;
/// - [`Error::InvalidValueTag`] if `v` fails the value-function invariants
///   beyond [`concavity_tolerance`];
/// - quadrature and certainty-equivalent errors propagate.
pub fn apply_bellman_operator(
    v: &GriddedFunction,
    spec: &ModelSpec,
    y_count: usize,
    rule: &QuadratureRule,
) -> Result<(GriddedFunction, GriddedFunction)> {
    if y_count < 2 {
        return Err(Error::DomainError {
            context: "investment menu count",
            value: y_count as f64,
        });
    }
    if v.n_regimes() != spec.n_regimes() {
        return Err(Error::GridMismatch);
    }
    v.validate_value_tag(concavity_tolerance(spec, v.grid(), y_count))?;
    let quad = spec.shock.quadrature_nodes(rule)?;
    let grid = v.grid().clone();
    let (values, policies) = parallel_sweep(&grid, spec.n_regimes(), |_, x, theta| {
        bellman_cell(v, spec, &quad, y_count, x, theta)
    })?;
    let v_next = GriddedFunction::from_values(grid.clone(), spec.n_regimes(), values)?;
    let policy = GriddedFunction::from_values(grid, spec.n_regimes(), policies)?;
    Ok((v_next, policy))
}

/// Value iteration from the zero function.
///
/// Applies the operator until the weighted step size reaches
/// `stop.tol_w` or `stop.max_iters` sweeps have run; the final value
/// field is re-checked against the value-function invariants before it is
/// returned. Non-convergence within the cap is reported, not an error.
///
/// # Errors
///
/// [`Error::DomainError`] if `stop.max_iters < 1` or `stop.tol_w` is
/// negative or non-finite; otherwise as [`apply_bellman_operator`].
pub fn solve_value_function(
    spec: &ModelSpec,
    grid: &IncomeGrid,
    y_count: usize,
    rule: &QuadratureRule,
    stop: &StopRule,
) -> Result<(GriddedFunction, GriddedFunction, SolveReport)> {
    if stop.max_iters < 1 {
        return Err(Error::DomainError {
            context: "max_iters",
            value: stop.max_iters as f64,
        });
    }
    if !(stop.tol_w >= 0.0) || !stop.tol_w.is_finite() {
        return Err(Error::DomainError {
            context: "tol_w",
            value: stop.tol_w,
        });
    }
    let mut v = GriddedFunction::zeros(grid.clone(), spec.n_regimes());
    let mut policy = GriddedFunction::zeros(grid.clone(), spec.n_regimes());
    let mut deltas = Vec::new();
    let mut converged = false;
    for _ in 0..stop.max_iters {
        let (v_next, pol) = apply_bellman_operator(&v, spec, y_count, rule)?;
        let delta = w_norm_distance(&v_next, &v, spec)?;
        v = v_next;
        policy = pol;
        deltas.push(delta);
        if delta <= stop.tol_w {
            converged = true;
            break;
        }
    }
    v.validate_value_tag(concavity_tolerance(spec, grid, y_count))?;
    let contraction_ratios = deltas
        .windows(2)
        .map(|pair| {
            if pair[0] > 0.0 {
                pair[1] / pair[0]
            } else {
                0.0
            }
        })
        .collect();
    let report = SolveReport {
        iterations: deltas.len(),
        sup_w_deltas: deltas,
        contraction_ratios,
        converged,
    };
    Ok((v, policy, report))
}

/// Finite-horizon worth of following a fixed stationary investment policy
/// for `t` stages: the recursion
/// `J_{k+1}(x, theta) = u(x - phi(x, theta)) + beta * rho_theta(J_k_hat(f))`
/// from `J_1 = u(x - phi)`.
///
/// # Errors
///
/// - [`Error::DomainError`] if `t < 1`;
/// - [`Error::GridMismatch`] if `phi` does not live on `grid` with the
///   spec's regime count;
/// - [`Error::InfeasiblePolicy`] naming the first node where
///   `phi(x, theta)` leaves `[0, x]`.
pub fn evaluate_policy(
    phi: &GriddedFunction,
    spec: &ModelSpec,
    grid: &IncomeGrid,
    rule: &QuadratureRule,
    t: usize,
) -> Result<GriddedFunction> {
    if t < 1 {
        return Err(Error::DomainError {
            context: "policy horizon",
            value: t as f64,
        });
    }
    if phi.grid() != grid || phi.n_regimes() != spec.n_regimes() {
        return Err(Error::GridMismatch);
    }
    for theta in 0..spec.n_regimes() {
        for (node, &x) in grid.nodes().iter().enumerate() {
            let y = phi.get(node, theta);
            if !(y >= 0.0 && y <= x) {
                return Err(Error::InfeasiblePolicy {
                    node,
                    regime: theta,
                });
            }
        }
    }
    let quad = spec.shock.quadrature_nodes(rule)?;

    // J_1 = u(x - phi).
    let mut stage_values = Vec::with_capacity(grid.count() * spec.n_regimes());
    for theta in 0..spec.n_regimes() {
        for (node, &x) in grid.nodes().iter().enumerate() {
            stage_values.push(utility(spec, x - phi.get(node, theta)));
        }
    }
    let mut j = GriddedFunction::from_values(grid.clone(), spec.n_regimes(), stage_values)?;

    for _ in 1..t {
        let (values, _) = parallel_sweep(grid, spec.n_regimes(), |node, x, theta| {
            let y = phi.get(node, theta);
            let ce = continuation(&j, spec, &quad, theta, y)?;
            Ok((utility(spec, x - y) + spec.beta * ce, y))
        })?;
        j = GriddedFunction::from_values(grid.clone(), spec.n_regimes(), values)?;
    }
    Ok(j)
}
