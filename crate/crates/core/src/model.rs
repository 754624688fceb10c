//! The parametric growth economy: Cobb–Douglas production with
//! regime-dependent exponents, power utility, and the weight function that
//! norms the value space.
//!
//! Primitives, all derived from a handful of scalar parameters:
//!
//! - utility `u(a) = a^sigma`, `sigma in (0,1)`: strictly concave,
//!   `u(0) = 0`, marginal utility diverging at zero consumption;
//! - production `f(theta, y, z) = y^{omega(theta)} * z`: output next period
//!   from investing `y` under the *current* regime `theta` and shock `z`;
//! - weight `w(x, theta) = (r + x)^sigma`, `r >= 1`: the growth envelope
//!   defining the weighted supremum norm in which the Bellman operator
//!   contracts.
//!
//! [`check_assumptions`] computes the closed-form constants that certify
//! the contraction and drift machinery for this family: the threshold
//! income `x_bar`, the envelope constant `alpha` with the product
//! `alpha * beta` that must stay below 1, the mean-growth pair
//! `(lambda2, kappa2)` bounding expected output by an affine function of
//! investment, and the finiteness witness for the reciprocal shock moment.
//! All of these use the distribution's exact cached moments, not
//! quadrature: they are statements about the model, not about a numeric
//! scheme.

use crate::error::{Error, Result};
use crate::markov::RegimeChain;
use crate::shock::ShockModel;

/// Complete parameterization of the economy.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Discount factor, in (0, 1).
    pub beta: f64,
    /// Risk sensitivity, `>= 0`; 0 is the risk-neutral limit.
    pub gamma: f64,
    /// Utility exponent, in (0, 1).
    pub sigma: f64,
    /// Weight offset, `>= 1`.
    pub r: f64,
    /// Per-regime production exponents, each in (0, 1).
    pub omega: Vec<f64>,
    /// Regime transition structure.
    pub chain: RegimeChain,
    /// Shock distribution.
    pub shock: ShockModel,
}

/// Constants certifying the model assumptions, from closed forms over the
/// exact shock moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// Utility-vs-weight domination constant; identically 1 for this
    /// family since `a^sigma <= (r + a)^sigma` pointwise.
    pub d: f64,
    /// Threshold income `max_theta zbar^{1/(1 - omega(theta))}`: above it,
    /// expected output falls below current income in every regime.
    pub x_bar: f64,
    /// Envelope constant `(1 + x_bar / r)^sigma`.
    pub alpha: f64,
    /// The contraction modulus bound `alpha * beta`; must be below 1.
    pub alpha_beta: f64,
    /// Finiteness witness for the vanishing-marginal-product condition:
    /// `E[1/xi] / (beta * min_theta omega(theta))`. The condition holds
    /// whenever this is finite.
    pub d1_value: f64,
    /// Mean-growth slope `zbar / (1 + zbar)`, in (0, 1) for finite `zbar`.
    pub lambda2: f64,
    /// Mean-growth intercept
    /// `max_theta zbar (1 - omega) ((1 + zbar) omega)^{omega / (1 - omega)}`;
    /// exactly the supremum of `zbar y^omega - lambda2 y` over `y >= 0`, so
    /// the affine bound is tight.
    pub kappa2: f64,
    /// Whether the regime chain is irreducible.
    pub d3_irreducible: bool,
}

impl AssumptionReport {
    /// The contraction requirement `alpha * beta < 1`.
    pub fn contraction_holds(&self) -> bool {
        self.alpha_beta < 1.0
    }

    /// The mean-growth bound is usable: slope strictly inside (0, 1) with a
    /// finite intercept.
    pub fn mean_growth_holds(&self) -> bool {
        self.lambda2 > 0.0 && self.lambda2 < 1.0 && self.kappa2.is_finite()
    }
}

impl ModelSpec {
    /// Validated constructor.
    ///
    /// # Errors
    ///
    /// [`Error::DomainError`] if a scalar parameter is out of range or the
    /// exponent vector does not match the chain's state count.
    pub fn new(
        beta: f64,
        gamma: f64,
        sigma: f64,
        r: f64,
        omega: Vec<f64>,
        chain: RegimeChain,
        shock: ShockModel,
    ) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::DomainError {
                context: "discount factor beta",
                value: beta,
            });
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::DomainError {
                context: "risk sensitivity gamma",
                value: gamma,
            });
        }
        if !(sigma > 0.0 && sigma < 1.0) {
            return Err(Error::DomainError {
                context: "utility exponent sigma",
                value: sigma,
            });
        }
        if !(r >= 1.0) || !r.is_finite() {
            return Err(Error::DomainError {
                context: "weight offset r",
                value: r,
            });
        }
        if omega.len() != chain.n_states() {
            return Err(Error::DomainError {
                context: "omega length vs regime count",
                value: omega.len() as f64,
            });
        }
        for &w in &omega {
            if !(w > 0.0 && w < 1.0) {
                return Err(Error::DomainError {
                    context: "production exponent omega",
                    value: w,
                });
            }
        }
        Ok(ModelSpec {
            beta,
            gamma,
            sigma,
            r,
            omega,
            chain,
            shock,
        })
    }

    /// The reference three-regime economy: `beta = 0.9`, `gamma = 1`,
    /// `sigma = 0.5`, `omega = (0.3, 0.5, 0.9)`, a persistent transition
    /// matrix, the standard lognormal shock, and `r = 633` — the smallest
    /// integer offset for which `alpha * beta < 1` (see the module tests).
    pub fn reference() -> Self {
        let chain = crate::markov::validate_chain(&[
            vec![0.50, 0.40, 0.10],
            vec![0.25, 0.50, 0.25],
            vec![0.10, 0.40, 0.50],
        ])
        .expect("reference matrix is stochastic");
        ModelSpec::new(
            0.9,
            1.0,
            0.5,
            633.0,
            vec![0.3, 0.5, 0.9],
            chain,
            ShockModel::standard_lognormal(),
        )
        .expect("reference parameters are valid")
    }

    /// The single-regime comparison economy: the median regime's production
    /// exponent held forever (`p = [[1]]`), all other parameters shared.
    /// Serves as the baseline overlay in the output plots.
    pub fn single_regime_baseline(&self) -> Self {
        let mid = self.omega.len() / 2;
        let chain = crate::markov::validate_chain(&[vec![1.0]]).expect("one-state chain");
        ModelSpec::new(
            self.beta,
            self.gamma,
            self.sigma,
            self.r,
            vec![self.omega[mid]],
            chain,
            self.shock.clone(),
        )
        .expect("restriction of a valid spec is valid")
    }

    /// Number of regimes (delegates to the chain).
    pub fn n_regimes(&self) -> usize {
        self.chain.n_states()
    }
}

/// Production `f(theta, y, z) = y^{omega(theta)} * z`.
///
/// Non-decreasing and concave in `y`, with `f(theta, 0, z) = 0`: idle
/// capital produces nothing.
pub fn production(spec: &ModelSpec, theta: usize, y: f64, z: f64) -> f64 {
    debug_assert!(y >= 0.0 && z >= 0.0);
    y.powf(spec.omega[theta]) * z
}

/// Marginal product `omega(theta) * y^{omega(theta) - 1} * z`.
///
/// # Errors
///
/// [`Error::DomainError`] at `y <= 0`, where the marginal product is
/// unbounded.
pub fn production_derivative(spec: &ModelSpec, theta: usize, y: f64, z: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::DomainError {
            context: "marginal product at y",
            value: y,
        });
    }
    let omega = spec.omega[theta];
    Ok(omega * y.powf(omega - 1.0) * z)
}

/// Utility `u(a) = a^sigma`.
pub fn utility(spec: &ModelSpec, a: f64) -> f64 {
    debug_assert!(a >= 0.0);
    a.powf(spec.sigma)
}

/// Marginal utility `sigma * a^{sigma - 1}`, diverging as `a -> 0+`.
///
/// # Errors
///
/// [`Error::DomainError`] at `a <= 0`.
pub fn utility_derivative(spec: &ModelSpec, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::DomainError {
            context: "marginal utility at a",
            value: a,
        });
    }
    Ok(spec.sigma * a.powf(spec.sigma - 1.0))
}

/// Weight `w(x, theta) = (r + x)^sigma`; at least 1 (since `r >= 1`) and
/// dominating utility pointwise, so value functions have finite weighted
/// norm.
pub fn weight(spec: &ModelSpec, x: f64, _theta: usize) -> f64 {
    debug_assert!(x >= 0.0);
    (spec.r + x).powf(spec.sigma)
}

/// Computes the assumption constants for this model family.
///
/// All quantities come from the shock's exact cached moments. When the
/// same expectations are later approximated by coarse quadrature they
/// carry that scheme's documented bias; the report is deliberately free of
/// it.
///
/// # Errors
///
/// [`Error::InfiniteMoment`] if `E[xi]` or `E[1/xi]` is infinite (the
/// latter happens for discrete shocks whose support touches 0).
pub fn check_assumptions(spec: &ModelSpec) -> Result<AssumptionReport> {
    let zbar = spec.shock.mean();
    if !zbar.is_finite() {
        return Err(Error::InfiniteMoment { moment: "E[xi]" });
    }
    let recip = spec.shock.reciprocal_mean();
    if !recip.is_finite() {
        return Err(Error::InfiniteMoment { moment: "E[1/xi]" });
    }

    let x_bar = spec
        .omega
        .iter()
        .map(|&om| zbar.powf(1.0 / (1.0 - om)))
        .fold(f64::NEG_INFINITY, f64::max);
    let alpha = (1.0 + x_bar / spec.r).powf(spec.sigma);
    let lambda2 = zbar / (1.0 + zbar);
    let kappa2 = spec
        .omega
        .iter()
        .map(|&om| zbar * (1.0 - om) * ((1.0 + zbar) * om).powf(om / (1.0 - om)))
        .fold(f64::NEG_INFINITY, f64::max);
    let omega_min = spec.omega.iter().copied().fold(f64::INFINITY, f64::min);

    Ok(AssumptionReport {
        d: 1.0,
        x_bar,
        alpha,
        alpha_beta: alpha * spec.beta,
        d1_value: recip / (spec.beta * omega_min),
        lambda2,
        kappa2,
        d3_irreducible: spec.chain.is_irreducible(),
    })
}
