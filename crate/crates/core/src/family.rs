//! Response families: expected log-normalizers and their gradients under the
//! factorized variational distribution, mean functions, and the GLM M-steps.
//!
//! Throughout, `phis` is an N × K matrix whose row n is the variational
//! multinomial of token n, and Z̄ = (1/N) Σₙ Zₙ with Zₙ one-hot.

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::special::log_gamma_unchecked;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Gaussian,
    Poisson,
}

/// How the Poisson dispersion is updated in the M-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoissonDispersion {
    /// δ stays at 1 (ordinary Poisson GLM).
    #[default]
    FixedOne,
    /// δ = Σ η̂ᵀE[Z̄_d] y_d / Σ E[A(η̂ᵀZ̄_d)].
    Ratio,
}

/// Per-token factor of the Poisson expected log-normalizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoissonLogNormalizer {
    /// Σᵢ φ_{n,i} exp(ηᵢ/N), the exact expectation for one-hot Zₙ.
    #[default]
    IndicatorExact,
    /// K − 1 + Σᵢ φ_{n,i} exp(ηᵢ/N).
    ShiftedSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseFamily {
    pub kind: FamilyKind,
    pub poisson_dispersion: PoissonDispersion,
    pub poisson_lognorm: PoissonLogNormalizer,
}

impl ResponseFamily {
    pub fn gaussian() -> Self {
        ResponseFamily {
            kind: FamilyKind::Gaussian,
            poisson_dispersion: PoissonDispersion::default(),
            poisson_lognorm: PoissonLogNormalizer::default(),
        }
    }

    pub fn poisson() -> Self {
        ResponseFamily {
            kind: FamilyKind::Poisson,
            ..Self::gaussian()
        }
    }

    pub fn with_poisson_modes(mut self, dispersion: PoissonDispersion, lognorm: PoissonLogNormalizer) -> Self {
        self.poisson_dispersion = dispersion;
        self.poisson_lognorm = lognorm;
        self
    }

    pub(crate) fn factor_offset(&self, k: usize) -> f64 {
        match self.poisson_lognorm {
            PoissonLogNormalizer::IndicatorExact => 0.0,
            PoissonLogNormalizer::ShiftedSum => k as f64 - 1.0,
        }
    }

    /// Whether the ELBO is a proper objective for every M-step of this family.
    pub fn has_monotone_em(&self) -> bool {
        self.kind == FamilyKind::Gaussian || self.poisson_dispersion == PoissonDispersion::FixedOne
    }
}

/// GLM coefficients and dispersion.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmParams {
    pub eta: Array1<f64>,
    pub delta: f64,
}

/// E[Z̄] = (1/N) Σₙ φₙ.
pub fn expected_zbar(phis: ArrayView2<f64>) -> Array1<f64> {
    let n = phis.nrows() as f64;
    phis.sum_axis(Axis(0)) / n
}

/// E[Z̄Z̄ᵀ] = (1/N²)(Σₙ Σ_{m≠n} φₙφₘᵀ + Σₙ diag(φₙ)).
pub fn expected_zbar_outer(phis: ArrayView2<f64>) -> Array2<f64> {
    let n = phis.nrows() as f64;
    let s = phis.sum_axis(Axis(0));
    let k = s.len();
    let mut m = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        for j in 0..k {
            m[[i, j]] = s[i] * s[j];
        }
    }
    m -= &phis.t().dot(&phis);
    for i in 0..k {
        m[[i, i]] += s[i];
    }
    m / (n * n)
}

/// Per-token factors E[exp(ηᵀZₙ/N)] of the Poisson product, in the active mode.
pub fn poisson_factors(phis: ArrayView2<f64>, eta: ArrayView1<f64>, family: &ResponseFamily) -> Array1<f64> {
    let scaled = scaled_exp_eta(eta, phis.nrows());
    let offset = family.factor_offset(eta.len());
    phis.dot(&scaled) + offset
}

fn scaled_exp_eta(eta: ArrayView1<f64>, n: usize) -> Array1<f64> {
    let n = n as f64;
    eta.mapv(|e| (e / n).exp())
}

/// C₋ₙ for every n, from prefix and suffix products.
pub fn leave_one_out_products(factors: ArrayView1<f64>) -> Array1<f64> {
    let n = factors.len();
    let mut out = Array1::<f64>::ones(n);
    let mut prefix = 1.0;
    for i in 0..n {
        out[i] = prefix;
        prefix *= factors[i];
    }
    let mut suffix = 1.0;
    for i in (0..n).rev() {
        out[i] *= suffix;
        suffix *= factors[i];
    }
    out
}

/// E[A(ηᵀZ̄)] under the factorized q.
pub fn expected_log_normalizer(phis: ArrayView2<f64>, eta: ArrayView1<f64>, family: &ResponseFamily) -> f64 {
    match family.kind {
        FamilyKind::Gaussian => {
            let n = phis.nrows() as f64;
            let proj = phis.dot(&eta);
            let eta_sq = eta.mapv(|e| e * e);
            let diag: f64 = phis.dot(&eta_sq).sum();
            let total = proj.sum();
            let sq: f64 = proj.iter().map(|p| p * p).sum();
            0.5 * (total * total - sq + diag) / (n * n)
        }
        FamilyKind::Poisson => poisson_factors(phis, eta, family).product(),
    }
}

/// ∂E[A(ηᵀZ̄)]/∂φⱼ.
pub fn lognorm_grad_phi(j: usize, phis: ArrayView2<f64>, eta: ArrayView1<f64>, family: &ResponseFamily) -> Array1<f64> {
    let n = phis.nrows();
    match family.kind {
        FamilyKind::Gaussian => {
            let others = phis.sum_axis(Axis(0)) - phis.row(j);
            gaussian_grad(others.view(), eta, n)
        }
        FamilyKind::Poisson => {
            let factors = poisson_factors(phis, eta, family);
            let c_minus_j = leave_one_out_products(factors.view())[j];
            scaled_exp_eta(eta, n) * c_minus_j
        }
    }
}

/// (1/(2N²))·[2(ηᵀφ₋ⱼ)η + η∘η] given φ₋ⱼ = Σ_{n≠j} φₙ.
pub(crate) fn gaussian_grad(others: ArrayView1<f64>, eta: ArrayView1<f64>, n: usize) -> Array1<f64> {
    let n = n as f64;
    let proj = eta.dot(&others);
    eta.mapv(|e| (2.0 * proj * e + e * e) / (2.0 * n * n))
}

/// E[μ(ηᵀZ̄) Z̄].
pub fn expected_mu_zbar(phis: ArrayView2<f64>, eta: ArrayView1<f64>, family: &ResponseFamily) -> Array1<f64> {
    match family.kind {
        FamilyKind::Gaussian => expected_zbar_outer(phis).dot(&eta),
        FamilyKind::Poisson => {
            let n = phis.nrows();
            let factors = poisson_factors(phis, eta, family);
            let loo = leave_one_out_products(factors.view());
            let weighted = loo.dot(&phis);
            scaled_exp_eta(eta, n) * weighted / n as f64
        }
    }
}

/// E_q[μ(ηᵀZ̄)]: ηᵀE[Z̄] for Gaussian, the product E[exp(ηᵀZ̄)] for Poisson.
pub fn predict_mean(phis: ArrayView2<f64>, eta: ArrayView1<f64>, family: &ResponseFamily) -> f64 {
    match family.kind {
        FamilyKind::Gaussian => eta.dot(&expected_zbar(phis)),
        FamilyKind::Poisson => expected_log_normalizer(phis, eta, family),
    }
}

/// log h(y, δ).
pub fn log_base_measure(y: f64, delta: f64, family: &ResponseFamily) -> Result<f64> {
    match family.kind {
        FamilyKind::Gaussian => Ok(-0.5 * (2.0 * std::f64::consts::PI * delta).ln() - y * y / (2.0 * delta)),
        FamilyKind::Poisson => {
            if !(y >= 0.0) || y.fract() != 0.0 {
                return Err(Error::InvalidCountResponse(y));
            }
            Ok(-log_gamma_unchecked(y + 1.0))
        }
    }
}

/// E[log p(y | Z₁:N, η, δ)] = log h(y, δ) + (1/δ)[ηᵀE[Z̄] y − E[A(ηᵀZ̄)]].
pub fn response_elbo_term(y: f64, phis: ArrayView2<f64>, params: &GlmParams, family: &ResponseFamily) -> Result<f64> {
    let eta = params.eta.view();
    let log_h = log_base_measure(y, params.delta, family)?;
    let linear = eta.dot(&expected_zbar(phis)) * y;
    Ok(log_h + (linear - expected_log_normalizer(phis, eta, family)) / params.delta)
}

/// Expected sufficient statistics of the regression, accumulated from the
/// labeled documents' variational posteriors.
#[derive(Debug, Clone)]
pub struct GlmSuffStats {
    k: usize,
    kind: FamilyKind,
    /// E[Z̄_d], one row per labeled document.
    pub ex_rows: Vec<Array1<f64>>,
    /// Σ_d E[Z̄_d Z̄_dᵀ] (Gaussian only).
    pub exxt_sum: Array2<f64>,
    /// Per-document φ matrices, kept for the Poisson products C and C₋ₙ.
    pub doc_phis: Vec<Array2<f64>>,
    pub responses: Vec<f64>,
}

impl GlmSuffStats {
    pub fn new(k: usize, family: &ResponseFamily) -> Self {
        GlmSuffStats {
            k,
            kind: family.kind,
            ex_rows: Vec::new(),
            exxt_sum: Array2::zeros((k, k)),
            doc_phis: Vec::new(),
            responses: Vec::new(),
        }
    }

    pub fn add_document(&mut self, phis: ArrayView2<f64>, y: f64) {
        self.ex_rows.push(expected_zbar(phis));
        match self.kind {
            FamilyKind::Gaussian => self.exxt_sum += &expected_zbar_outer(phis),
            FamilyKind::Poisson => self.doc_phis.push(phis.to_owned()),
        }
        self.responses.push(y);
    }

    /// Concatenates another accumulator's documents after this one's.
    pub fn merge(mut self, other: GlmSuffStats) -> Self {
        self.ex_rows.extend(other.ex_rows);
        self.exxt_sum += &other.exxt_sum;
        self.doc_phis.extend(other.doc_phis);
        self.responses.extend(other.responses);
        self
    }

    pub fn num_docs(&self) -> usize {
        self.responses.len()
    }

    pub fn num_topics(&self) -> usize {
        self.k
    }

    /// E[X], the D × K design matrix of expected topic frequencies.
    pub fn design(&self) -> Array2<f64> {
        let mut x = Array2::zeros((self.num_docs(), self.k));
        for (mut row, r) in x.rows_mut().into_iter().zip(&self.ex_rows) {
            row.assign(r);
        }
        x
    }

    /// E[X]ᵀ y.
    pub fn xty(&self) -> Array1<f64> {
        let mut v = Array1::zeros(self.k);
        for (row, &y) in self.ex_rows.iter().zip(&self.responses) {
            v.scaled_add(y, row);
        }
        v
    }

    /// Σ_d E[A(ηᵀZ̄_d)].
    pub fn expected_lognorm_sum(&self, eta: ArrayView1<f64>, family: &ResponseFamily) -> f64 {
        match self.kind {
            FamilyKind::Gaussian => 0.5 * eta.dot(&self.exxt_sum.dot(&eta)),
            FamilyKind::Poisson => self
                .doc_phis
                .iter()
                .map(|p| expected_log_normalizer(p.view(), eta, family))
                .sum(),
        }
    }

    /// The η-dependent part of the corpus ELBO:
    /// (1/δ) Σ_d [ηᵀE[Z̄_d] y_d − E[A(ηᵀZ̄_d)]].
    pub fn eta_objective(&self, eta: ArrayView1<f64>, delta: f64, family: &ResponseFamily) -> f64 {
        (eta.dot(&self.xty()) - self.expected_lognorm_sum(eta, family)) / delta
    }

    /// (1/δ)(Σ_d E[Z̄_d] y_d − Σ_d E[μ(ηᵀZ̄_d) Z̄_d]).
    pub fn eta_gradient(&self, eta: ArrayView1<f64>, delta: f64, family: &ResponseFamily) -> Array1<f64> {
        let mut g = self.xty();
        match self.kind {
            FamilyKind::Gaussian => g -= &self.exxt_sum.dot(&eta),
            FamilyKind::Poisson => {
                for p in &self.doc_phis {
                    g -= &expected_mu_zbar(p.view(), eta, family);
                }
            }
        }
        g / delta
    }

    /// −(δ · Hessian) of the Poisson η objective: Σ_d E[exp(ηᵀZ̄_d) Z̄_d Z̄_dᵀ].
    fn poisson_curvature(&self, eta: ArrayView1<f64>, family: &ResponseFamily) -> Array2<f64> {
        let k = self.k;
        let mut h = Array2::<f64>::zeros((k, k));
        for p in &self.doc_phis {
            let n = p.nrows();
            let factors = poisson_factors(p.view(), eta, family);
            let c: f64 = factors.product();
            let e = scaled_exp_eta(eta, n);
            // vₙ = exp(η/N) ∘ φₙ / fₙ, so that C₋ₙₘ uₙuₘᵀ = C vₙvₘᵀ.
            let mut v_sum = Array1::<f64>::zeros(k);
            let mut v_outer = Array2::<f64>::zeros((k, k));
            for (row, &f) in p.rows().into_iter().zip(factors.iter()) {
                let v = &row * &e / f;
                for i in 0..k {
                    for j in 0..k {
                        v_outer[[i, j]] += v[i] * v[j];
                    }
                }
                v_sum += &v;
            }
            let nn = (n * n) as f64;
            for i in 0..k {
                for j in 0..k {
                    h[[i, j]] += c * (v_sum[i] * v_sum[j] - v_outer[[i, j]]) / nn;
                }
                h[[i, i]] += c * v_sum[i] / nn;
            }
        }
        h
    }
}

/// Outcome of the η M-step.
#[derive(Debug, Clone)]
pub struct EtaStep {
    pub eta: Array1<f64>,
    /// Ridge added to E[XᵀX] (Gaussian) or the curvature (Poisson), if any.
    pub jitter: Option<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub warnings: Vec<String>,
}

pub const POISSON_GRAD_TOL: f64 = 1e-8;
pub const POISSON_MAX_ITERS: usize = 500;
const ARMIJO: f64 = 1e-4;

/// Maximizes the corpus ELBO in η with everything else held fixed.
///
/// Gaussian: solves E[XᵀX] η = E[X]ᵀ y. Poisson: damped Newton ascent on the
/// concave η objective from `current.eta`, halving the step until the Armijo
/// condition holds, until the gradient ∞-norm is below 1e−8 or 500 steps.
pub fn mstep_eta(stats: &GlmSuffStats, family: &ResponseFamily, current: &GlmParams) -> Result<EtaStep> {
    let mut warnings = Vec::new();
    if stats.num_docs() == 0 {
        return Ok(EtaStep {
            eta: current.eta.clone(),
            jitter: None,
            iterations: 0,
            gradient_norm: 0.0,
            warnings,
        });
    }
    match family.kind {
        FamilyKind::Gaussian => {
            let sol = solve_spd(&stats.exxt_sum, &stats.xty())?;
            if let Some(l) = sol.jitter {
                let msg = format!("E[X^T X] is singular; added ridge {l:e}");
                warn!("{msg}");
                warnings.push(msg);
            }
            let g = stats.eta_gradient(sol.x.view(), 1.0, family);
            Ok(EtaStep {
                eta: sol.x,
                jitter: sol.jitter,
                iterations: 1,
                gradient_norm: inf_norm(&g),
                warnings,
            })
        }
        FamilyKind::Poisson => poisson_ascent(stats, family, current, warnings),
    }
}

fn inf_norm(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn poisson_ascent(
    stats: &GlmSuffStats,
    family: &ResponseFamily,
    current: &GlmParams,
    mut warnings: Vec<String>,
) -> Result<EtaStep> {
    let delta = current.delta;
    let mut eta = current.eta.clone();
    let mut value = stats.eta_objective(eta.view(), delta, family);
    if !value.is_finite() {
        return Err(Error::NonFinite("Poisson η objective".into()));
    }
    let mut jitter = None;
    let mut iterations = 0;
    let mut grad = stats.eta_gradient(eta.view(), delta, family);
    while inf_norm(&grad) >= POISSON_GRAD_TOL && iterations < POISSON_MAX_ITERS {
        iterations += 1;
        let curvature = stats.poisson_curvature(eta.view(), family) / delta;
        let mut direction = match solve_spd(&curvature, &grad) {
            Ok(sol) => {
                if sol.jitter.is_some() {
                    jitter = sol.jitter;
                }
                sol.x
            }
            Err(_) => grad.clone(),
        };
        let mut slope = grad.dot(&direction);
        if !(slope > 0.0) {
            direction = grad.clone();
            slope = grad.dot(&grad);
        }
        // Near the optimum the predicted gain drops below the rounding error
        // of the objective; there a step is accepted if it shrinks the gradient.
        let noise = 1e-12 * value.abs().max(1.0);
        let grad_norm = inf_norm(&grad);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate = &eta + &(&direction * step);
            let v = stats.eta_objective(candidate.view(), delta, family);
            let ok = v.is_finite()
                && (v >= value + ARMIJO * step * slope
                    || (step * slope <= noise
                        && v >= value - noise
                        && inf_norm(&stats.eta_gradient(candidate.view(), delta, family)) < grad_norm));
            if ok {
                eta = candidate;
                value = v;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No representable ascent step remains.
            break;
        }
        grad = stats.eta_gradient(eta.view(), delta, family);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("Poisson η gradient".into()));
        }
    }
    let gradient_norm = inf_norm(&grad);
    if gradient_norm >= POISSON_GRAD_TOL {
        let msg = format!("Poisson η ascent stopped after {iterations} steps with gradient norm {gradient_norm:e}");
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(EtaStep {
        eta,
        jitter,
        iterations,
        gradient_norm,
        warnings,
    })
}

/// Outcome of the δ M-step.
#[derive(Debug, Clone)]
pub struct DeltaStep {
    pub delta: f64,
    pub warnings: Vec<String>,
}

pub const DELTA_FLOOR: f64 = 1e-8;

/// The dispersion update given the freshly fitted η.
///
/// Gaussian: the expected residual sum of squares over D,
/// (yᵀy − 2η̂ᵀE[X]ᵀy + η̂ᵀE[XᵀX]η̂)/D, which reduces to
/// (1/D)[yᵀy − yᵀE[X] E[XᵀX]⁻¹ E[X]ᵀy] at the normal-equation solution.
pub fn mstep_delta(stats: &GlmSuffStats, eta_new: ArrayView1<f64>, family: &ResponseFamily, current: f64) -> Result<DeltaStep> {
    let mut warnings = Vec::new();
    if stats.num_docs() == 0 {
        return Ok(DeltaStep {
            delta: current,
            warnings,
        });
    }
    let d = stats.num_docs() as f64;
    let delta = match family.kind {
        FamilyKind::Gaussian => {
            let yy: f64 = stats.responses.iter().map(|y| y * y).sum();
            let rss = yy - 2.0 * eta_new.dot(&stats.xty()) + eta_new.dot(&stats.exxt_sum.dot(&eta_new));
            let delta = rss / d;
            if !delta.is_finite() {
                return Err(Error::NonFinite("dispersion".into()));
            }
            if delta <= 0.0 {
                let msg = format!("dispersion estimate {delta:e} is not positive; floored at {DELTA_FLOOR:e}");
                warn!("{msg}");
                warnings.push(msg);
            }
            delta.max(DELTA_FLOOR)
        }
        FamilyKind::Poisson => match family.poisson_dispersion {
            PoissonDispersion::FixedOne => 1.0,
            PoissonDispersion::Ratio => {
                let num = eta_new.dot(&stats.xty());
                let den = stats.expected_lognorm_sum(eta_new, family);
                let ratio = num / den;
                if ratio.is_finite() && ratio > 0.0 {
                    ratio
                } else {
                    let msg = format!("Poisson dispersion ratio {ratio:e} is not positive; using 1");
                    warn!("{msg}");
                    warnings.push(msg);
                    1.0
                }
            }
        },
    };
    Ok(DeltaStep { delta, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn gaussian_lognorm_one_hot() {
        let phis = array![[1.0, 0.0]];
        let v = expected_log_normalizer(phis.view(), array![2.0, 0.0].view(), &ResponseFamily::gaussian());
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn gaussian_lognorm_two_uniform_tokens() {
        // Enumeration over the four assignments of (ηᵀz̄)²/2 with η = (1, −1):
        // z̄ ∈ {(1,0), (½,½), (½,½), (0,1)} → (½ + 0 + 0 + ½)/4 = 0.25.
        let phis = array![[0.5, 0.5], [0.5, 0.5]];
        let v = expected_log_normalizer(phis.view(), array![1.0, -1.0].view(), &ResponseFamily::gaussian());
        assert_abs_diff_eq!(v, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn poisson_lognorm_two_uniform_tokens() {
        // exp(ηᵀz̄) over the assignments with η = (ln 4, 0): 4, 2, 2, 1 → 9/4.
        let phis = array![[0.5, 0.5], [0.5, 0.5]];
        let v = expected_log_normalizer(phis.view(), array![4f64.ln(), 0.0].view(), &ResponseFamily::poisson());
        assert_abs_diff_eq!(v, 2.25, epsilon = 1e-14);
    }

    #[test]
    fn poisson_shifted_sum_factor() {
        let fam = ResponseFamily::poisson().with_poisson_modes(PoissonDispersion::FixedOne, PoissonLogNormalizer::ShiftedSum);
        let phis = array![[0.5, 0.5]];
        let v = expected_log_normalizer(phis.view(), array![0.0, 0.0].view(), &fam);
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn gaussian_gradient_examples() {
        let fam = ResponseFamily::gaussian();
        let phis = array![[0.2, 0.8], [1.0, 0.0]];
        let g = lognorm_grad_phi(0, phis.view(), array![0.0, 0.0].view(), &fam);
        assert_eq!(g, array![0.0, 0.0]);
        let g = lognorm_grad_phi(0, phis.view(), array![1.0, -1.0].view(), &fam);
        assert_abs_diff_eq!(g[0], 0.375, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], -0.125, epsilon = 1e-15);
    }

    #[test]
    fn mu_zbar_examples() {
        let fam = ResponseFamily::gaussian();
        let phis = array![[0.3, 0.7], [0.6, 0.4]];
        assert_eq!(expected_mu_zbar(phis.view(), array![0.0, 0.0].view(), &fam), array![0.0, 0.0]);
        let one = array![[1.0, 0.0]];
        let m = expected_mu_zbar(one.view(), array![2.0, 3.0].view(), &fam);
        assert_abs_diff_eq!(m[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn leave_one_out_products_match_division() {
        let f = array![2.0, 3.0, 0.5, 7.0];
        let loo = leave_one_out_products(f.view());
        let total: f64 = f.product();
        for i in 0..4 {
            assert_abs_diff_eq!(loo[i], total / f[i], epsilon = 1e-12);
        }
        let with_zero = array![2.0, 0.0, 3.0];
        assert_eq!(leave_one_out_products(with_zero.view())[1], 6.0);
    }

    #[test]
    fn predict_mean_examples() {
        let g = ResponseFamily::gaussian();
        let half = array![[0.5, 0.5]];
        assert_abs_diff_eq!(predict_mean(half.view(), array![1.0, -1.0].view(), &g), 0.0);
        let one = array![[1.0, 0.0]];
        assert_abs_diff_eq!(predict_mean(one.view(), array![2.0, 0.0].view(), &g), 2.0);
        let p = ResponseFamily::poisson();
        let phis = array![[0.1, 0.9], [0.7, 0.3]];
        assert_abs_diff_eq!(predict_mean(phis.view(), array![0.0, 0.0].view(), &p), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn response_term_degenerate_gaussian() {
        let fam = ResponseFamily::gaussian();
        let params = GlmParams { eta: array![1.5, -0.5], delta: 0.7 };
        let phis = array![[1.0, 0.0]];
        let y = 0.3;
        let want = -0.5 * (2.0 * std::f64::consts::PI * 0.7f64).ln() - (y - 1.5f64).powi(2) / (2.0 * 0.7);
        assert_abs_diff_eq!(response_elbo_term(y, phis.view(), &params, &fam).unwrap(), want, epsilon = 1e-14);
    }

    #[test]
    fn response_term_poisson() {
        let fam = ResponseFamily::poisson();
        let params = GlmParams { eta: array![0.4, -0.2], delta: 1.0 };
        let phis = array![[0.3, 0.7], [0.5, 0.5]];
        let ea = expected_log_normalizer(phis.view(), params.eta.view(), &fam);
        assert_abs_diff_eq!(response_elbo_term(0.0, phis.view(), &params, &fam).unwrap(), -ea, epsilon = 1e-14);
        assert!(matches!(
            response_elbo_term(1.5, phis.view(), &params, &fam),
            Err(Error::InvalidCountResponse(_))
        ));
        assert!(response_elbo_term(-1.0, phis.view(), &params, &fam).is_err());
    }

    #[test]
    fn scalar_gaussian_mstep() {
        let fam = ResponseFamily::gaussian();
        let mut stats = GlmSuffStats::new(1, &fam);
        stats.add_document(array![[1.0]].view(), 3.0);
        let cur = GlmParams { eta: array![0.0], delta: 1.0 };
        let step = mstep_eta(&stats, &fam, &cur).unwrap();
        assert_abs_diff_eq!(step.eta[0], 3.0, epsilon = 1e-14);
        // Exact fit: δ̂ = 0, floored.
        let d = mstep_delta(&stats, step.eta.view(), &fam, 1.0).unwrap();
        assert_eq!(d.delta, DELTA_FLOOR);
    }

    #[test]
    fn exact_fit_gives_floored_delta() {
        let fam = ResponseFamily::gaussian();
        let eta = array![2.0, -1.0, 0.5];
        let mut stats = GlmSuffStats::new(3, &fam);
        for k in 0..3 {
            let mut phis = Array2::zeros((2, 3));
            phis[[0, k]] = 1.0;
            phis[[1, k]] = 1.0;
            stats.add_document(phis.view(), eta[k]);
        }
        let cur = GlmParams { eta: Array1::zeros(3), delta: 1.0 };
        let step = mstep_eta(&stats, &fam, &cur).unwrap();
        let d = mstep_delta(&stats, step.eta.view(), &fam, 1.0).unwrap();
        assert_eq!(d.delta, DELTA_FLOOR);
    }

    #[test]
    fn poisson_fixed_one_delta() {
        let fam = ResponseFamily::poisson();
        let mut stats = GlmSuffStats::new(2, &fam);
        stats.add_document(array![[0.5, 0.5]].view(), 3.0);
        let d = mstep_delta(&stats, array![0.1, 0.2].view(), &fam, 1.0).unwrap();
        assert_eq!(d.delta, 1.0);
    }

    #[test]
    fn poisson_ratio_falls_back_when_nonpositive() {
        let fam = ResponseFamily::poisson().with_poisson_modes(PoissonDispersion::Ratio, PoissonLogNormalizer::IndicatorExact);
        let mut stats = GlmSuffStats::new(2, &fam);
        stats.add_document(array![[1.0, 0.0]].view(), 2.0);
        let d = mstep_delta(&stats, array![-1.0, 0.0].view(), &fam, 1.0).unwrap();
        assert_eq!(d.delta, 1.0);
        assert_eq!(d.warnings.len(), 1);
        let d = mstep_delta(&stats, array![1.0, 0.0].view(), &fam, 1.0).unwrap();
        assert_abs_diff_eq!(d.delta, 2.0 / 1f64.exp(), epsilon = 1e-14);
    }

    #[test]
    fn merge_is_concatenation() {
        let fam = ResponseFamily::gaussian();
        let docs = [array![[0.2, 0.8], [0.5, 0.5]], array![[0.9, 0.1]]];
        let mut whole = GlmSuffStats::new(2, &fam);
        let mut a = GlmSuffStats::new(2, &fam);
        let mut b = GlmSuffStats::new(2, &fam);
        whole.add_document(docs[0].view(), 1.0);
        whole.add_document(docs[1].view(), -1.0);
        a.add_document(docs[0].view(), 1.0);
        b.add_document(docs[1].view(), -1.0);
        let merged = a.merge(b);
        assert_eq!(merged.xty(), whole.xty());
        assert_eq!(merged.exxt_sum, whole.exxt_sum);
    }
}
