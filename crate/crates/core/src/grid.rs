//! Income grids and piecewise-linear gridded functions.
//!
//! The solver discretizes the income axis into a finite grid whose first
//! node is always 0 (the absorbing no-capital state) and stores candidate
//! value functions and policies as one row of samples per regime.
//! Off-grid queries interpolate linearly; queries beyond the last node
//! extrapolate along the final segment's slope, which is the natural
//! continuation for the concave, asymptotically linear-in-weight value
//! functions this family produces.
//!
//! [`GriddedFunction::validate_value_tag`] is the gatekeeper for treating
//! a table as a value function: finite everywhere, nonnegative, monotone
//! in income, and concave up to an explicit tolerance. Discretized maxima
//! of concave programs develop small convex kinks (the feasible-investment
//! set changes with the income node), so exact concavity is the wrong
//! check; the tolerance bounds the kink size instead.

use crate::error::{Error, Result};

/// How an [`IncomeGrid`]'s interior nodes are spaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridSpacing {
    /// Equally spaced nodes from 0 to `x_max`.
    Linear,
    /// Node 0, then geometrically spaced nodes from `x_min` to `x_max`.
    LogLinear,
}

/// A finite, strictly increasing set of income nodes starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct IncomeGrid {
    nodes: Vec<f64>,
    spacing: GridSpacing,
}

impl IncomeGrid {
    /// Equally spaced grid `0, h, 2h, ..., x_max` with `count` nodes.
    ///
    /// # Errors
    ///
    /// [`Error::DomainError`] if `x_max` is not positive and finite or
    /// `count < 2`.
    pub fn linear(x_max: f64, count: usize) -> Result<Self> {
        if !(x_max > 0.0) || !x_max.is_finite() {
            return Err(Error::DomainError {
                context: "grid x_max",
                value: x_max,
            });
        }
        if count < 2 {
            return Err(Error::DomainError {
                context: "grid node count",
                value: count as f64,
            });
        }
        let nodes = (0..count)
            .map(|i| x_max * i as f64 / (count - 1) as f64)
            .collect();
        Ok(IncomeGrid {
            nodes,
            spacing: GridSpacing::Linear,
        })
    }

    /// Grid with node 0 followed by `count - 1` geometrically spaced nodes
    /// from `x_min` to `x_max`, concentrating resolution near the origin
    /// where marginal utility is steep.
    ///
    /// # Errors
    ///
    /// [`Error::DomainError`] if the bounds are not `0 < x_min < x_max`
    /// (finite) or `count < 2`.
    pub fn log_linear(x_max: f64, count: usize, x_min: f64) -> Result<Self> {
        if !(x_max > 0.0) || !x_max.is_finite() {
            return Err(Error::DomainError {
                context: "grid x_max",
                value: x_max,
            });
        }
        if !(x_min > 0.0 && x_min < x_max) {
            return Err(Error::DomainError {
                context: "grid x_min",
                value: x_min,
            });
        }
        if count < 2 {
            return Err(Error::DomainError {
                context: "grid node count",
                value: count as f64,
            });
        }
        let mut nodes = Vec::with_capacity(count);
        nodes.push(0.0);
        if count == 2 {
            nodes.push(x_max);
        } else {
            let steps = count - 2;
            let ratio = x_max / x_min;
            for k in 0..=steps {
                nodes.push(x_min * ratio.powf(k as f64 / steps as f64));
            }
            // Pin the endpoint exactly despite powf rounding.
            nodes[count - 1] = x_max;
        }
        Ok(IncomeGrid {
            nodes,
            spacing: GridSpacing::LogLinear,
        })
    }

    /// The node coordinates, strictly increasing with `nodes()[0] == 0`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of nodes.
    pub fn count(&self) -> usize {
        self.nodes.len()
    }

    /// The largest node.
    pub fn x_max(&self) -> f64 {
        *self.nodes.last().expect("grid has at least two nodes")
    }

    /// The spacing rule this grid was built with.
    pub fn spacing(&self) -> GridSpacing {
        self.spacing
    }
}

/// Samples of a function of (income, regime) on an [`IncomeGrid`], stored
/// row-per-regime, with linear interpolation between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedFunction {
    grid: IncomeGrid,
    n_regimes: usize,
    /// `values[regime * grid.count() + node]`.
    values: Vec<f64>,
}

impl GriddedFunction {
    /// The zero function on `grid` for `n_regimes` regimes.
    pub fn zeros(grid: IncomeGrid, n_regimes: usize) -> Self {
        let n = grid.count() * n_regimes;
        GriddedFunction {
            grid,
            n_regimes,
            values: vec![0.0; n],
        }
    }

    /// Wraps precomputed samples, `values[regime * count + node]`.
    ///
    /// # Errors
    ///
    /// [`Error::GridMismatch`] if the length is not
    /// `grid.count() * n_regimes`; [`Error::DomainError`] if any sample is
    /// non-finite.
    pub fn from_values(grid: IncomeGrid, n_regimes: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.count() * n_regimes || n_regimes == 0 {
            return Err(Error::GridMismatch);
        }
        for &v in &values {
            if !v.is_finite() {
                return Err(Error::DomainError {
                    context: "gridded sample",
                    value: v,
                });
            }
        }
        Ok(GriddedFunction {
            grid,
            n_regimes,
            values,
        })
    }

    /// The underlying grid.
    pub fn grid(&self) -> &IncomeGrid {
        &self.grid
    }

    /// Number of regime rows.
    pub fn n_regimes(&self) -> usize {
        self.n_regimes
    }

    /// Sample at a node.
    pub fn get(&self, node: usize, regime: usize) -> f64 {
        self.values[regime * self.grid.count() + node]
    }

    /// Overwrites the sample at a node.
    pub fn set(&mut self, node: usize, regime: usize, value: f64) {
        self.values[regime * self.grid.count() + node] = value;
    }

    /// One regime's samples, aligned with `grid().nodes()`.
    pub fn regime_values(&self, regime: usize) -> &[f64] {
        let n = self.grid.count();
        &self.values[regime * n..(regime + 1) * n]
    }

    /// Evaluates at arbitrary income by linear interpolation, extending
    /// past the last node along the final segment's slope. Exact at grid
    /// nodes.
    pub fn evaluate_value(&self, x: f64, regime: usize) -> f64 {
        debug_assert!(x >= 0.0 && regime < self.n_regimes);
        let nodes = self.grid.nodes();
        let row = self.regime_values(regime);
        let n = nodes.len();
        if x >= nodes[n - 1] {
            if x == nodes[n - 1] {
                return row[n - 1];
            }
            let slope = (row[n - 1] - row[n - 2]) / (nodes[n - 1] - nodes[n - 2]);
            return row[n - 1] + slope * (x - nodes[n - 1]);
        }
        // First index with node > x; x < last node guarantees hi <= n - 1,
        // and x >= 0 == nodes[0] guarantees hi >= 1.
        let hi = nodes.partition_point(|&node| node <= x);
        if nodes[hi - 1] == x {
            return row[hi - 1];
        }
        let t = (x - nodes[hi - 1]) / (nodes[hi] - nodes[hi - 1]);
        row[hi - 1] + t * (row[hi] - row[hi - 1])
    }

    /// Checks that the table qualifies as a value function: finite,
    /// nonnegative, monotone nondecreasing in income, and concave up to
    /// `tol`.
    ///
    /// Concavity is measured per interior node as the convex-kink size
    /// `(s_i - s_{i-1}) * (x_{i+1} - x_{i-1}) / 2`, where `s` are segment
    /// slopes: the amount by which the piecewise-linear graph rises above
    /// the chord through its neighbors. Concave data make it nonpositive;
    /// discretized maxima produce small positive values that `tol` must
    /// cover.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidValueTag`] naming the first failing node and check.
    pub fn validate_value_tag(&self, tol: f64) -> Result<()> {
        let nodes = self.grid.nodes();
        for regime in 0..self.n_regimes {
            let row = self.regime_values(regime);
            for (i, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidValueTag {
                        detail: format!("non-finite value {v} at node {i}, regime {regime}"),
                    });
                }
                if v < -1e-12 {
                    return Err(Error::InvalidValueTag {
                        detail: format!("negative value {v} at node {i}, regime {regime}"),
                    });
                }
            }
            for i in 1..row.len() {
                if row[i] < row[i - 1] - 1e-12 {
                    return Err(Error::InvalidValueTag {
                        detail: format!(
                            "decreasing values {} -> {} at node {i}, regime {regime}",
                            row[i - 1],
                            row[i]
                        ),
                    });
                }
            }
            for i in 1..row.len() - 1 {
                let s_prev = (row[i] - row[i - 1]) / (nodes[i] - nodes[i - 1]);
                let s_next = (row[i + 1] - row[i]) / (nodes[i + 1] - nodes[i]);
                let kink = (s_next - s_prev) * (nodes[i + 1] - nodes[i - 1]) / 2.0;
                if kink > tol {
                    return Err(Error::InvalidValueTag {
                        detail: format!(
                            "convex kink {kink} above tolerance {tol} at node {i}, \
                             regime {regime}"
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    /// Largest convex-kink measure over all interior nodes and regimes
    /// (negative when the table is strictly concave); the diagnostic
    /// counterpart of [`Self::validate_value_tag`].
    pub fn max_second_difference(&self) -> f64 {
        let nodes = self.grid.nodes();
        let mut worst = f64::NEG_INFINITY;
        for regime in 0..self.n_regimes {
            let row = self.regime_values(regime);
            for i in 1..row.len() - 1 {
                let s_prev = (row[i] - row[i - 1]) / (nodes[i] - nodes[i - 1]);
                let s_next = (row[i + 1] - row[i]) / (nodes[i + 1] - nodes[i]);
                worst = worst.max((s_next - s_prev) * (nodes[i + 1] - nodes[i - 1]) / 2.0);
            }
        }
        worst
    }
}
