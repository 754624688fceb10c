//! Shock distribution, quantile quadrature, and the entropic certainty
//! equivalent.
//!
//! The production shock `xi` is i.i.d. with distribution `nu`, either
//! lognormal or finitely supported. Expectations against `nu` are computed
//! by a change of variables to the unit interval,
//! `E[g(xi)] = int_0^1 g(F^{-1}(t)) dt`, discretized with the composite
//! trapezoid rule on an equi-spaced `t`-grid. Because `F^{-1}(t)` diverges
//! at `t = 1` for the lognormal, the grid is clamped to
//! `[eps_q, 1 - eps_q]`; the missing `2 eps_q` of probability mass is a
//! documented bias of [`expect_shock`], as is the substantial trapezoid
//! error for unbounded integrands at coarse node counts (see the module
//! tests, which measure it).
//!
//! The certainty equivalent aggregates a joint outcome over (next regime,
//! shock):
//!
//! `rho(v) = -(1/gamma) ln sum_j p_j E[exp(-gamma v(j, xi))]`,
//!
//! with the risk-neutral expectation as the explicit `gamma = 0` branch.
//! Two numerical safeguards apply. The exponentials are shifted by the
//! minimum of `gamma * v` before summation so the average cannot underflow
//! for outcomes of any magnitude. And the quadrature mass is normalized
//! inside `rho`: the clamped trapezoid weights sum to `1 - 2 eps_q`, which
//! would otherwise contaminate `rho` by a constant offset of order
//! `2 eps_q / gamma`; dividing the inner average by the total mass restores
//! the defining identities `rho(0) = 0` and `rho(c) = c` to machine
//! precision. [`expect_shock`] itself stays unnormalized because its
//! contract documents the raw clamp defect.

use crate::error::{Error, Result};
use statrs::function::erf::erf_inv;

/// Distribution family of the i.i.d. production shock.
#[derive(Debug, Clone, PartialEq)]
pub enum ShockKind {
    /// `ln xi ~ Normal(mu, sigma_z^2)`.
    LogNormal { mu: f64, sigma_z: f64 },
    /// Finite support with matching probability weights.
    Discrete { points: Vec<f64>, weights: Vec<f64> },
}

/// Shock distribution with cached moments.
///
/// `mean` is `E[xi]` and `reciprocal_mean` is `E[1/xi]`, both from closed
/// forms (lognormal) or exact sums (discrete). `reciprocal_mean` is `+inf`
/// when the support touches zero; downstream assumption checks reject that
/// case explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockModel {
    kind: ShockKind,
    mean: f64,
    reciprocal_mean: f64,
    /// For discrete shocks: support sorted ascending with cumulative
    /// weights, backing the generalized inverse CDF.
    quantile_table: Vec<(f64, f64)>,
}

impl ShockModel {
    /// Lognormal shock `exp(Normal(mu, sigma_z^2))`.
    ///
    /// # Errors
    ///
    /// [`Error::DomainError`] unless `sigma_z > 0` and `mu` is finite.
    pub fn lognormal(mu: f64, sigma_z: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::DomainError {
                context: "lognormal mu",
                value: mu,
            });
        }
        if !(sigma_z > 0.0) || !sigma_z.is_finite() {
            return Err(Error::DomainError {
                context: "lognormal sigma_z",
                value: sigma_z,
            });
        }
        Ok(ShockModel {
            kind: ShockKind::LogNormal { mu, sigma_z },
            mean: (mu + 0.5 * sigma_z * sigma_z).exp(),
            reciprocal_mean: (-mu + 0.5 * sigma_z * sigma_z).exp(),
            quantile_table: Vec::new(),
        })
    }

    /// The standard lognormal shock, `mu = 0`, `sigma_z = 1`.
    pub fn standard_lognormal() -> Self {
        Self::lognormal(0.0, 1.0).expect("standard parameters are valid")
    }

    /// Finitely supported shock on non-negative points.
    ///
    /// # Errors
    ///
    /// [`Error::DomainError`] if the lengths differ, a point is negative or
    /// non-finite, a weight is negative, or the weights do not sum to 1
    /// within `1e-12`.
    pub fn discrete(points: &[f64], weights: &[f64]) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::DomainError {
                context: "discrete shock support size",
                value: points.len() as f64,
            });
        }
        for &z in points {
            if !(z >= 0.0) || !z.is_finite() {
                return Err(Error::DomainError {
                    context: "discrete shock point",
                    value: z,
                });
            }
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::DomainError {
                context: "discrete shock weight mass",
                value: total,
            });
        }
        let mean = points.iter().zip(weights).map(|(z, w)| z * w).sum();
        let reciprocal_mean = points
            .iter()
            .zip(weights)
            .map(|(&z, &w)| if w == 0.0 { 0.0 } else { w / z })
            .sum();
        let mut table: Vec<(f64, f64)> = points
            .iter()
            .copied()
            .zip(weights.iter().copied())
            .collect();
        table.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut acc = 0.0;
        for entry in table.iter_mut() {
            acc += entry.1;
            entry.1 = acc;
        }
        // Guard the top of the ladder against rounding so every t < 1 maps
        // into the support.
        if let Some(last) = table.last_mut() {
            last.1 = 1.0;
        }
        Ok(ShockModel {
            kind: ShockKind::Discrete {
                points: points.to_vec(),
                weights: weights.to_vec(),
            },
            mean,
            reciprocal_mean,
            quantile_table: table,
        })
    }

    /// Distribution family and parameters.
    pub fn kind(&self) -> &ShockKind {
        &self.kind
    }

    /// `E[xi]`, from moment identities or exact summation.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `E[1/xi]`; `+inf` when the support includes 0.
    pub fn reciprocal_mean(&self) -> f64 {
        self.reciprocal_mean
    }

    /// The quadrature abscissae and weights this model integrates with:
    /// exact support points for discrete shocks, the clamped quantile
    /// trapezoid grid for continuous ones. Weights sum to 1 exactly in the
    /// discrete case and to `1 - 2 eps_q` in the continuous case.
    pub fn quadrature_nodes(&self, rule: &QuadratureRule) -> Result<Vec<(f64, f64)>> {
        match &self.kind {
            ShockKind::Discrete { points, weights } => Ok(points
                .iter()
                .copied()
                .zip(weights.iter().copied())
                .collect()),
            ShockKind::LogNormal { .. } => {
                let n = rule.n_intervals;
                let eps = rule.clamp_eps;
                let step = (1.0 - 2.0 * eps) / n as f64;
                let mut nodes = Vec::with_capacity(n + 1);
                for i in 0..=n {
                    let t = eps + i as f64 * step;
                    let w = if i == 0 || i == n { 0.5 * step } else { step };
                    nodes.push((inverse_cdf(self, t)?, w));
                }
                Ok(nodes)
            }
        }
    }
}

/// Node count and quantile clamp for the trapezoid quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureRule {
    /// Number of equal `t`-subintervals (nodes = intervals + 1).
    pub n_intervals: usize,
    /// Both quantile arguments are clamped into `[eps, 1 - eps]`.
    pub clamp_eps: f64,
}

impl QuadratureRule {
    /// Validated constructor.
    ///
    /// # Errors
    ///
    /// [`Error::DomainError`] unless `n_intervals >= 1` and
    /// `0 < eps < 1 / (2 n_intervals)`.
    pub fn new(n_intervals: usize, clamp_eps: f64) -> Result<Self> {
        if n_intervals < 1 {
            return Err(Error::DomainError {
                context: "quadrature intervals",
                value: n_intervals as f64,
            });
        }
        if !(clamp_eps > 0.0 && clamp_eps < 1.0 / (2.0 * n_intervals as f64)) {
            return Err(Error::DomainError {
                context: "quadrature clamp epsilon",
                value: clamp_eps,
            });
        }
        Ok(QuadratureRule {
            n_intervals,
            clamp_eps,
        })
    }
}

impl Default for QuadratureRule {
    /// 18 subintervals, clamp `1e-6`.
    fn default() -> Self {
        QuadratureRule {
            n_intervals: 18,
            clamp_eps: 1e-6,
        }
    }
}

/// Generalized inverse CDF `F^{-1}(t)` of the shock distribution.
///
/// Lognormal: `exp(mu + sigma_z * Phi^{-1}(t))` with the standard-normal
/// quantile evaluated through the inverse error function. Discrete: the
/// usual right-continuous quantile step function, `inf { z : F(z) >= t }`.
///
/// # Errors
///
/// [`Error::DomainError`] if `t` is outside the open interval `(0, 1)`.
pub fn inverse_cdf(shock: &ShockModel, t: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::DomainError {
            context: "inverse_cdf argument",
            value: t,
        });
    }
    match &shock.kind {
        ShockKind::LogNormal { mu, sigma_z } => {
            let standard_normal_quantile = std::f64::consts::SQRT_2 * erf_inv(2.0 * t - 1.0);
            Ok((mu + sigma_z * standard_normal_quantile).exp())
        }
        ShockKind::Discrete { .. } => {
            let idx = shock
                .quantile_table
                .partition_point(|&(_, cum)| cum < t)
                .min(shock.quantile_table.len() - 1);
            Ok(shock.quantile_table[idx].0)
        }
    }
}

/// Integrates `g` against the shock distribution.
///
/// Discrete shocks are summed exactly. Continuous shocks use the composite
/// trapezoid rule on `n_intervals + 1` equi-spaced quantile nodes over
/// `[eps_q, 1 - eps_q]`. The result is raw in two documented senses: the
/// clamp removes `2 eps_q` of mass (so `g = 1` integrates to
/// `1 - 2 eps_q`), and the trapezoid rule carries significant bias for
/// unbounded integrands at coarse `n_intervals` (measured in this module's
/// tests; the solver itself only integrates bounded transforms).
///
/// # Errors
///
/// [`Error::NonFiniteIntegrand`] if `g` returns a non-finite value at any
/// node.
pub fn expect_shock(
    g: impl Fn(f64) -> f64,
    shock: &ShockModel,
    rule: &QuadratureRule,
) -> Result<f64> {
    let mut acc = 0.0;
    for (z, w) in shock.quadrature_nodes(rule)? {
        let gz = g(z);
        if !gz.is_finite() {
            return Err(Error::NonFiniteIntegrand { z });
        }
        acc += w * gz;
    }
    Ok(acc)
}

/// Entropic certainty equivalent of a joint outcome over (next regime,
/// shock).
///
/// For `gamma > 0` returns
/// `-(1/gamma) ln [ sum_j p_row[j] E[exp(-gamma outcomes(j, xi))] ]`,
/// evaluated with a min-shift so the exponentials cannot underflow and
/// with the quadrature mass normalized out (see the module docs). For
/// `gamma = 0` returns the mass-normalized expectation — an explicit
/// branch, not a limit, to avoid 0/0.
///
/// `outcomes(j, z)` is evaluated once per (regime, node) pair; regimes
/// with `p_row[j] = 0` are skipped entirely.
///
/// # Errors
///
/// - [`Error::DomainError`] if `gamma < 0` or `p_row` is not a probability
///   vector (entries `>= 0`, sum within `1e-9` of 1).
/// - [`Error::NonFiniteIntegrand`] if an outcome is non-finite.
/// - [`Error::NumericUnderflow`] if the inner average is zero, which would
///   make the certainty equivalent `+inf`; this can only happen when
///   `gamma * outcome` overflows to infinity at every supported node.
pub fn certainty_equivalent(
    outcomes: impl Fn(usize, f64) -> f64,
    p_row: &[f64],
    gamma: f64,
    shock: &ShockModel,
    rule: &QuadratureRule,
) -> Result<f64> {
    let nodes = shock.quadrature_nodes(rule)?;
    certainty_equivalent_over(&nodes, outcomes, p_row, gamma)
}

/// Core of [`certainty_equivalent`] over precomputed quadrature nodes.
///
/// Split out so the value-iteration inner loop can reuse one node table
/// across millions of calls; results are identical to the public wrapper.
pub(crate) fn certainty_equivalent_over(
    nodes: &[(f64, f64)],
    outcomes: impl Fn(usize, f64) -> f64,
    p_row: &[f64],
    gamma: f64,
) -> Result<f64> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::DomainError {
            context: "risk sensitivity gamma",
            value: gamma,
        });
    }
    let p_sum: f64 = p_row.iter().sum();
    if p_row.iter().any(|&p| p < 0.0) || (p_sum - 1.0).abs() > 1e-9 {
        return Err(Error::DomainError {
            context: "p_row mass",
            value: p_sum,
        });
    }

    // Total node mass; 1 - 2 eps_q for continuous shocks. The averages
    // below divide it out so constants reproduce exactly. The average and
    // the mass are accumulated with identical loop structure on purpose:
    // when every exponential equals 1 the two sums agree bit for bit, and
    // ln(avg/mass) vanishes exactly rather than to within rounding, which
    // matters once the division by a tiny gamma amplifies the noise.
    let node_mass: f64 = nodes.iter().map(|&(_, w)| w).sum();
    let mass: f64 = p_row
        .iter()
        .map(|&p| if p == 0.0 { 0.0 } else { p * node_mass })
        .sum();

    if gamma == 0.0 {
        let mut acc = 0.0;
        for (j, &p) in p_row.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for &(z, w) in nodes {
                let o = outcomes(j, z);
                if !o.is_finite() {
                    return Err(Error::NonFiniteIntegrand { z });
                }
                inner += w * o;
            }
            acc += p * inner;
        }
        return Ok(acc / mass);
    }

    // First pass: scaled outcomes and their minimum over supported cells.
    let mut scaled = Vec::with_capacity(p_row.len() * nodes.len());
    let mut shift = f64::INFINITY;
    for (j, &p) in p_row.iter().enumerate() {
        for &(z, _) in nodes {
            if p == 0.0 {
                scaled.push(f64::INFINITY);
                continue;
            }
            let o = outcomes(j, z);
            if !o.is_finite() {
                return Err(Error::NonFiniteIntegrand { z });
            }
            let go = gamma * o;
            // gamma * o may overflow to +inf for extreme outcomes; such
            // cells contribute exp(-inf) = 0 below, which is the correct
            // limit, so only the finite cells compete for the shift.
            if go < shift {
                shift = go;
            }
            scaled.push(go);
        }
    }
    if !shift.is_finite() {
        // Every supported cell overflowed: the inner average is 0.
        return Err(Error::NumericUnderflow);
    }

    let mut avg = 0.0;
    for (j, &p) in p_row.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for (i, &(_, w)) in nodes.iter().enumerate() {
            let go = scaled[j * nodes.len() + i];
            let e = if go.is_finite() {
                (-(go - shift)).exp()
            } else {
                0.0
            };
            inner += w * e;
        }
        avg += p * inner;
    }
    if !(avg > 0.0) || !avg.is_finite() {
        return Err(Error::NumericUnderflow);
    }
    Ok((shift - (avg / mass).ln()) / gamma)
}
