//! Special functions and log-domain simplex helpers.
//!
//! Digamma and log-gamma shift the argument upward with the recurrence
//! until it reaches the asymptotic regime, then sum the Bernoulli series.

use crate::error::{Error, Result};

/// Logits are floored here (after max-subtraction) before exponentiation.
pub const LOGIT_FLOOR: f64 = -700.0;

const ASYMPTOTIC_THRESHOLD: f64 = 10.0;
const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// Ψ(x), the derivative of ln Γ(x).
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain {
            function: "digamma",
            value: x,
        });
    }
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < ASYMPTOTIC_THRESHOLD {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli terms B_2k / (2k x^2k), Horner in 1/x^2.
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    shift + x.ln() - 0.5 * inv - series
}

/// ln Γ(x) for x > 0.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain {
            function: "log_gamma",
            value: x,
        });
    }
    Ok(log_gamma_unchecked(x))
}

pub(crate) fn log_gamma_unchecked(mut x: f64) -> f64 {
    let mut product = 1.0;
    while x < ASYMPTOTIC_THRESHOLD {
        product *= x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            - inv2
                * (1.0 / 360.0
                    - inv2
                        * (1.0 / 1260.0
                            - inv2
                                * (1.0 / 1680.0
                                    - inv2
                                        * (1.0 / 1188.0
                                            - inv2 * (691.0 / 360_360.0 - inv2 / 156.0))))));
    (x - 0.5) * x.ln() - x + HALF_LN_TWO_PI + series - product.ln()
}

/// E[log θ_i] = Ψ(γ_i) − Ψ(Σ_j γ_j) for θ ~ Dir(γ).
pub fn dirichlet_expected_log(gamma: &[f64]) -> Result<Vec<f64>> {
    if let Some(&bad) = gamma.iter().find(|&&g| !(g > 0.0) || !g.is_finite()) {
        return Err(Error::Domain {
            function: "dirichlet_expected_log",
            value: bad,
        });
    }
    let total = digamma_unchecked(gamma.iter().sum());
    Ok(gamma.iter().map(|&g| digamma_unchecked(g) - total).collect())
}

/// A normalized categorical distribution kept in the log domain.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSimplexVector {
    values: Vec<f64>,
}

impl LogSimplexVector {
    pub fn log_values(&self) -> &[f64] {
        &self.values
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.exp()).collect()
    }
}

/// Normalizes `v` so that exp(v) sums to one.
///
/// The maximum is subtracted first and the shifted logits are floored at
/// [`LOGIT_FLOOR`], so very negative entries stay out of the denormal range.
pub fn log_normalize(v: &[f64]) -> LogSimplexVector {
    let mut values = v.to_vec();
    log_normalize_in_place(&mut values);
    LogSimplexVector { values }
}

/// In-place variant of [`log_normalize`]; `buf` ends up holding log
/// probabilities.
fn log_normalize_in_place(buf: &mut [f64]) {
    let max = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in buf.iter_mut() {
        *v = (*v - max).max(LOGIT_FLOOR);
        sum += v.exp();
    }
    let log_sum = sum.ln();
    for v in buf.iter_mut() {
        *v -= log_sum;
    }
}

/// Writes the normalized probabilities of `logits` into `out`.
pub(crate) fn normalize_logits(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).max(LOGIT_FLOOR).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}
