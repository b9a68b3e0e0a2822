//! Per-document mean-field variational inference.
//!
//! The variational family is q(θ, z₁:N) = Dir(θ | γ) Πₙ Mult(zₙ | φₙ).
//! Inference alternates a full sequential sweep over the per-token φₙ with
//! the closed-form γ update. In supervised mode the φ update includes the
//! response terms, which couple every token to every other one; prediction
//! mode drops them and is ordinary LDA inference.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::family::{self, FamilyKind, ResponseFamily};
use crate::model::ModelParams;
use crate::special::{dirichlet_expected_log, log_gamma_unchecked, normalize_logits};

/// Absolute slack allowed on an ELBO decrease before it is treated as a bug.
pub const ELBO_DECREASE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InferenceMode {
    /// Response terms are included whenever the document has a response.
    Supervised,
    /// Response terms are dropped; any response is ignored.
    Prediction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceConfig {
    /// Stop once |ΔELBO / ELBO| falls below this.
    pub rel_tol: f64,
    pub max_iters: usize,
    pub mode: InferenceMode,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            rel_tol: 1e-4,
            max_iters: 100,
            mode: InferenceMode::Supervised,
        }
    }
}

impl InferenceConfig {
    pub fn prediction(self) -> Self {
        InferenceConfig {
            mode: InferenceMode::Prediction,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidArgument(format!("rel_tol must be positive, got {}", self.rel_tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Variational parameters of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocPosterior {
    pub gamma: Array1<f64>,
    /// N × K; row n belongs to token n of the document.
    pub phis: Array2<f64>,
    pub elbo: f64,
    pub iterations: usize,
    /// ELBO after initialization followed by the ELBO after each iteration.
    pub trace: Vec<f64>,
}

impl DocPosterior {
    /// φₙ uniform and γ = α + N/K.
    pub fn uniform(num_tokens: usize, num_topics: usize, alpha: f64) -> Self {
        let k = num_topics as f64;
        DocPosterior {
            gamma: Array1::from_elem(num_topics, alpha + num_tokens as f64 / k),
            phis: Array2::from_elem((num_tokens, num_topics), 1.0 / k),
            elbo: f64::NEG_INFINITY,
            iterations: 0,
            trace: Vec::new(),
        }
    }

    /// E[Z̄] = φ̄.
    pub fn expected_zbar(&self) -> Array1<f64> {
        family::expected_zbar(self.phis.view())
    }
}

/// γ = α·1 + Σₙ φₙ.
pub fn update_gamma(alpha: f64, phis: ArrayView2<f64>) -> Array1<f64> {
    phis.sum_axis(Axis(0)) + alpha
}

/// The response entering a φ update: y with the GLM parameters, or nothing.
#[derive(Clone, Copy)]
struct ResponseTerm<'a> {
    y: f64,
    eta: ArrayView1<'a, f64>,
    delta: f64,
    family: &'a ResponseFamily,
}

fn phi_from_logits(logits: &[f64], token: usize) -> Result<Array1<f64>> {
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFiniteLogit { token });
    }
    let mut out = vec![0.0; logits.len()];
    normalize_logits(logits, &mut out);
    Ok(Array1::from(out))
}

fn base_logits(elog: &[f64], model: &ModelParams, w: usize) -> Vec<f64> {
    elog.iter().enumerate().map(|(k, e)| e + model.log_beta_at(k, w)).collect()
}

fn check_token(doc: &Document, j: usize, model: &ModelParams) -> Result<usize> {
    let w = *doc
        .tokens
        .get(j)
        .ok_or_else(|| Error::InvalidArgument(format!("token index {j} out of range")))?;
    if w >= model.vocab_size() {
        return Err(Error::VocabularyMismatch {
            term: w,
            vocab_size: model.vocab_size(),
        });
    }
    Ok(w)
}

/// φⱼ ∝ exp{E_q[log θ] + log β_{·,wⱼ}}.
pub fn update_phi_unsupervised(j: usize, doc: &Document, post: &DocPosterior, model: &ModelParams) -> Result<Array1<f64>> {
    let w = check_token(doc, j, model)?;
    let elog = dirichlet_expected_log(post.gamma.as_slice().expect("contiguous"))?;
    phi_from_logits(&base_logits(&elog, model, w), j)
}

/// φⱼ ∝ exp{E_q[log θ] + log β_{·,wⱼ} + (y/(Nδ))η − (1/δ)∂E[A]/∂φⱼ},
/// using the current values of every other φₙ.
pub fn update_phi_supervised(j: usize, doc: &Document, y: f64, post: &DocPosterior, model: &ModelParams) -> Result<Array1<f64>> {
    let w = check_token(doc, j, model)?;
    let elog = dirichlet_expected_log(post.gamma.as_slice().expect("contiguous"))?;
    let mut logits = base_logits(&elog, model, w);
    let n = doc.len() as f64;
    let delta = model.glm.delta;
    let grad = family::lognorm_grad_phi(j, post.phis.view(), model.eta(), &model.family);
    for (k, l) in logits.iter_mut().enumerate() {
        *l += y / (n * delta) * model.glm.eta[k] - grad[k] / delta;
    }
    phi_from_logits(&logits, j)
}

/// The per-document ELBO. `y = None` omits the response term, giving the
/// unsupervised LDA bound.
pub fn compute_elbo(doc: &Document, y: Option<f64>, post: &DocPosterior, model: &ModelParams) -> Result<f64> {
    let elog = dirichlet_expected_log(post.gamma.as_slice().expect("contiguous"))?;
    elbo_with(doc.tokens.iter().copied(), y, post.gamma.view(), post.phis.view(), &elog, model)
}

fn elbo_with<I>(
    tokens: I,
    y: Option<f64>,
    gamma: ArrayView1<f64>,
    phis: ArrayView2<f64>,
    elog: &[f64],
    model: &ModelParams,
) -> Result<f64>
where
    I: Iterator<Item = usize>,
{
    let k = gamma.len();
    let alpha = model.alpha;
    let kf = k as f64;
    let sum_elog: f64 = elog.iter().sum();

    // E[log p(θ | α)]
    let mut elbo = log_gamma_unchecked(kf * alpha) - kf * log_gamma_unchecked(alpha) + (alpha - 1.0) * sum_elog;

    // Σₙ E[log p(Zₙ | θ)] + Σₙ E[log p(wₙ | Zₙ, β)] − Σₙ Σᵢ φ log φ
    for (row, w) in phis.rows().into_iter().zip(tokens) {
        if w >= model.vocab_size() {
            return Err(Error::VocabularyMismatch {
                term: w,
                vocab_size: model.vocab_size(),
            });
        }
        for (i, &p) in row.iter().enumerate() {
            if p > 0.0 {
                elbo += p * (elog[i] + model.log_beta_at(i, w) - p.ln());
            }
        }
    }

    // Remaining entropy terms of q(θ | γ).
    let gamma_sum: f64 = gamma.sum();
    elbo -= log_gamma_unchecked(gamma_sum);
    for (i, &g) in gamma.iter().enumerate() {
        elbo += log_gamma_unchecked(g) - (g - 1.0) * elog[i];
    }

    if let Some(y) = y {
        elbo += family::response_elbo_term(y, phis, &model.glm, &model.family)?;
    }
    if !elbo.is_finite() {
        return Err(Error::NonFinite("ELBO".into()));
    }
    Ok(elbo)
}

/// One sequential sweep over all tokens, in slice order.
fn sweep(
    tokens: &[usize],
    original_index: &[usize],
    phis: &mut Array2<f64>,
    elog: &[f64],
    model: &ModelParams,
    response: Option<ResponseTerm<'_>>,
) -> Result<()> {
    let n = tokens.len();
    let k = elog.len();
    let mut logits = vec![0.0; k];
    let mut phi = vec![0.0; k];
    let fail = |s: usize| Error::NonFiniteLogit { token: original_index[s] };

    match response {
        None => {
            for (s, &w) in tokens.iter().enumerate() {
                for (i, l) in logits.iter_mut().enumerate() {
                    *l = elog[i] + model.log_beta_at(i, w);
                }
                if logits.iter().any(|l| !l.is_finite()) {
                    return Err(fail(s));
                }
                normalize_logits(&logits, &mut phi);
                phis.row_mut(s).assign(&ArrayView1::from(&phi[..]));
            }
        }
        Some(r) => {
            let nf = n as f64;
            let linear: Vec<f64> = r.eta.iter().map(|e| r.y / (nf * r.delta) * e).collect();
            match r.family.kind {
                FamilyKind::Gaussian => {
                    let mut total = phis.sum_axis(Axis(0));
                    for (s, &w) in tokens.iter().enumerate() {
                        let others = &total - &phis.row(s);
                        let grad = family::gaussian_grad(others.view(), r.eta, n);
                        for (i, l) in logits.iter_mut().enumerate() {
                            *l = elog[i] + model.log_beta_at(i, w) + linear[i] - grad[i] / r.delta;
                        }
                        if logits.iter().any(|l| !l.is_finite()) {
                            return Err(fail(s));
                        }
                        normalize_logits(&logits, &mut phi);
                        let new = ArrayView1::from(&phi[..]);
                        total = others + new;
                        phis.row_mut(s).assign(&new);
                    }
                }
                FamilyKind::Poisson => {
                    let scaled: Vec<f64> = r.eta.iter().map(|e| (e / nf).exp()).collect();
                    let factors = family::poisson_factors(phis.view(), r.eta, r.family);
                    let offset = r.family.factor_offset(k);
                    // suffix[s] = Π_{m > s} f_m over factors not yet updated.
                    let mut suffix = vec![1.0; n];
                    for s in (0..n.saturating_sub(1)).rev() {
                        suffix[s] = suffix[s + 1] * factors[s + 1];
                    }
                    let mut prefix = 1.0;
                    for (s, &w) in tokens.iter().enumerate() {
                        let c_minus = prefix * suffix[s];
                        for (i, l) in logits.iter_mut().enumerate() {
                            *l = elog[i] + model.log_beta_at(i, w) + linear[i] - c_minus * scaled[i] / r.delta;
                        }
                        if logits.iter().any(|l| !l.is_finite()) {
                            return Err(fail(s));
                        }
                        normalize_logits(&logits, &mut phi);
                        let f: f64 = phi.iter().zip(&scaled).map(|(p, e)| p * e).sum::<f64>() + offset;
                        prefix *= f;
                        phis.row_mut(s).assign(&ArrayView1::from(&phi[..]));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Runs coordinate ascent from the uniform initialization.
pub fn infer_document(doc: &Document, y: Option<f64>, model: &ModelParams, config: &InferenceConfig) -> Result<DocPosterior> {
    let init = DocPosterior::uniform(doc.len(), model.num_topics(), model.alpha);
    infer_document_from(doc, y, model, config, init)
}

/// Runs coordinate ascent starting from `init`.
///
/// Tokens are swept in ascending (term id, occurrence) order so the result
/// does not depend on the order tokens appear in `doc`. Returns an error if
/// the ELBO drops by more than [`ELBO_DECREASE_SLACK`] between iterations.
pub fn infer_document_from(
    doc: &Document,
    y: Option<f64>,
    model: &ModelParams,
    config: &InferenceConfig,
    init: DocPosterior,
) -> Result<DocPosterior> {
    config.validate()?;
    let n = doc.len();
    let k = model.num_topics();
    if n == 0 {
        return Err(Error::InvalidArgument("document has no tokens".into()));
    }
    if init.phis.dim() != (n, k) || init.gamma.len() != k {
        return Err(Error::InvalidArgument("initial posterior has the wrong shape".into()));
    }
    if let Some(&w) = doc.tokens.iter().find(|&&w| w >= model.vocab_size()) {
        return Err(Error::VocabularyMismatch {
            term: w,
            vocab_size: model.vocab_size(),
        });
    }

    let y = match config.mode {
        InferenceMode::Supervised => y,
        InferenceMode::Prediction => None,
    };
    let response = y.map(|y| ResponseTerm {
        y,
        eta: model.eta(),
        delta: model.glm.delta,
        family: &model.family,
    });

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| doc.tokens[i]);
    let tokens: Vec<usize> = order.iter().map(|&i| doc.tokens[i]).collect();
    let mut phis = Array2::zeros((n, k));
    for (s, &i) in order.iter().enumerate() {
        phis.row_mut(s).assign(&init.phis.row(i));
    }
    let mut gamma = init.gamma;

    let mut elog = dirichlet_expected_log(gamma.as_slice().expect("contiguous"))?;
    let mut elbo = elbo_with(tokens.iter().copied(), y, gamma.view(), phis.view(), &elog, model)?;
    let mut trace = vec![elbo];
    let mut iterations = 0;
    while iterations < config.max_iters {
        iterations += 1;
        sweep(&tokens, &order, &mut phis, &elog, model, response)?;
        gamma = update_gamma(model.alpha, phis.view());
        elog = dirichlet_expected_log(gamma.as_slice().expect("contiguous"))?;
        let next = elbo_with(tokens.iter().copied(), y, gamma.view(), phis.view(), &elog, model)?;
        trace.push(next);
        if next < elbo - ELBO_DECREASE_SLACK {
            return Err(Error::ElboDecrease {
                previous: elbo,
                current: next,
            });
        }
        let converged = ((next - elbo) / elbo).abs() < config.rel_tol;
        elbo = next;
        if converged {
            break;
        }
    }

    let mut out = Array2::zeros((n, k));
    for (s, &i) in order.iter().enumerate() {
        out.row_mut(i).assign(&phis.row(s));
    }
    Ok(DocPosterior {
        gamma,
        phis: out,
        elbo,
        iterations,
        trace,
    })
}
