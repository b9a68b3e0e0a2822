//! Corpus-level variational EM.
//!
//! Each iteration runs per-document inference for every document (E-step),
//! then re-estimates the topics, the GLM coefficients and the dispersion,
//! in that order (M-step). Unlabeled documents contribute to the topics only.

use log::warn;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::family::{mstep_delta, mstep_eta, FamilyKind, GlmParams, GlmSuffStats, ResponseFamily};
use crate::inference::{infer_document, infer_document_from, DocPosterior, InferenceConfig};
use crate::model::ModelParams;

/// Absolute slack on a corpus-ELBO decrease between EM iterations.
pub const EM_DECREASE_SLACK: f64 = 1e-6;

/// Additive floor on expected topic counts before normalization.
pub const TOPIC_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaSetting {
    OneOverK,
    Value(f64),
}

impl AlphaSetting {
    pub fn resolve(&self, k: usize) -> f64 {
        match *self {
            AlphaSetting::OneOverK => 1.0 / k as f64,
            AlphaSetting::Value(a) => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtaInit {
    /// K evenly spaced values on [−1, 1], spacing 2/K.
    Grid,
    Zeros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub num_topics: usize,
    pub alpha: AlphaSetting,
    pub family: ResponseFamily,
    pub em_rel_tol: f64,
    pub em_max_iters: usize,
    pub inference: InferenceConfig,
    pub seed: u64,
    pub eta_init: EtaInit,
    pub beta_perturbation: f64,
    /// Start each E-step from the previous iteration's posteriors instead
    /// of the uniform initialization.
    pub warm_start: bool,
    /// Run the E-step over documents in parallel.
    pub parallel: bool,
}

impl FitConfig {
    pub fn new(num_topics: usize, family: ResponseFamily) -> Self {
        FitConfig {
            num_topics,
            alpha: AlphaSetting::OneOverK,
            family,
            em_rel_tol: 1e-4,
            em_max_iters: 100,
            inference: InferenceConfig::default(),
            seed: 0,
            eta_init: EtaInit::Grid,
            beta_perturbation: 0.01,
            warm_start: true,
            parallel: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_topics == 0 {
            return Err(Error::InvalidArgument("number of topics must be at least 1".into()));
        }
        let alpha = self.alpha.resolve(self.num_topics);
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        if !(self.em_rel_tol > 0.0) {
            return Err(Error::InvalidArgument("EM tolerance must be positive".into()));
        }
        if self.em_max_iters == 0 {
            return Err(Error::InvalidArgument("em_max_iters must be at least 1".into()));
        }
        if !(self.beta_perturbation >= 0.0) {
            return Err(Error::InvalidArgument("beta perturbation must be nonnegative".into()));
        }
        self.inference.validate()
    }
}

/// Unbiased sample variance.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Initial η: the k-th topic gets −1 + (2k + 1)/K.
pub fn eta_grid(k: usize) -> Array1<f64> {
    let kf = k as f64;
    Array1::from_iter((0..k).map(|i| -1.0 + (2 * i + 1) as f64 / kf))
}

/// Perturbed-uniform topics, σ² from the responses, η on a grid.
pub fn initialize(corpus: &Corpus, config: &FitConfig) -> Result<ModelParams> {
    config.validate()?;
    let k = config.num_topics;
    let v = corpus.vocab_size();
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut log_beta = Array2::zeros((k, v));
    for mut row in log_beta.rows_mut() {
        let weights: Vec<f64> = (0..v)
            .map(|_| 1.0 + config.beta_perturbation * rng.random::<f64>())
            .collect();
        let total: f64 = weights.iter().sum();
        for (b, w) in row.iter_mut().zip(&weights) {
            *b = (w / total).ln();
        }
    }

    let labeled: Vec<f64> = corpus.documents.iter().filter_map(|d| d.response).collect();
    let delta = match config.family.kind {
        FamilyKind::Gaussian => match labeled.len() {
            0 => 1.0,
            1 => {
                return Err(Error::InvalidArgument(
                    "Gaussian initialization needs at least 2 labeled documents".into(),
                ))
            }
            _ => sample_variance(&labeled).max(crate::family::DELTA_FLOOR),
        },
        FamilyKind::Poisson => 1.0,
    };
    let eta = match config.eta_init {
        EtaInit::Grid => eta_grid(k),
        EtaInit::Zeros => Array1::zeros(k),
    };
    Ok(ModelParams {
        alpha: config.alpha.resolve(k),
        log_beta,
        glm: GlmParams { eta, delta },
        family: config.family,
        transform: corpus.transform,
    })
}

/// Result of one E-step.
#[derive(Debug, Clone)]
pub struct EStep {
    pub posteriors: Vec<DocPosterior>,
    pub elbo: f64,
}

/// Infers every document (supervised when it has a response) and sums the
/// per-document ELBOs. `previous`, when given, seeds each document's run.
pub fn e_step(corpus: &Corpus, model: &ModelParams, config: &FitConfig, previous: Option<&[DocPosterior]>) -> Result<EStep> {
    let run = |d: usize| -> Result<DocPosterior> {
        let doc = &corpus.documents[d];
        let result = match previous {
            Some(prev) => infer_document_from(doc, doc.response, model, &config.inference, prev[d].clone()),
            None => infer_document(doc, doc.response, model, &config.inference),
        };
        result.map_err(|e| e.in_document(d))
    };
    let n = corpus.num_documents();
    let posteriors: Vec<DocPosterior> = if config.parallel {
        (0..n).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..n).map(run).collect::<Result<_>>()?
    };
    let elbo = posteriors.iter().map(|p| p.elbo).sum();
    Ok(EStep { posteriors, elbo })
}

/// Topics and any warnings from the topic M-step.
#[derive(Debug, Clone)]
pub struct TopicStep {
    pub log_beta: Array2<f64>,
    pub warnings: Vec<String>,
}

/// β_{k,w} ∝ Σ_d Σₙ 1(w_{d,n} = w) φ_{d,n,k}, floored by [`TOPIC_FLOOR`]
/// before row normalization. Returned in log form.
pub fn mstep_topics(corpus: &Corpus, posteriors: &[DocPosterior], num_topics: usize) -> Result<TopicStep> {
    if posteriors.len() != corpus.num_documents() {
        return Err(Error::InvalidArgument("posteriors do not match the corpus".into()));
    }
    let v = corpus.vocab_size();
    let mut counts = Array2::<f64>::zeros((num_topics, v));
    for (doc, post) in corpus.documents.iter().zip(posteriors) {
        for (row, &w) in post.phis.rows().into_iter().zip(&doc.tokens) {
            for (k, &p) in row.iter().enumerate() {
                counts[[k, w]] += p;
            }
        }
    }
    let mut warnings = Vec::new();
    let mut log_beta = Array2::zeros((num_topics, v));
    for (k, (row, mut out)) in counts.rows().into_iter().zip(log_beta.rows_mut()).enumerate() {
        let mass: f64 = row.sum();
        if !(mass > 0.0) {
            let msg = format!("topic {k} has no expected counts; reset to uniform");
            warn!("{msg}");
            warnings.push(msg);
            out.fill(-(v as f64).ln());
            continue;
        }
        let total = mass + TOPIC_FLOOR * v as f64;
        for (o, &c) in out.iter_mut().zip(row.iter()) {
            *o = ((c + TOPIC_FLOOR) / total).ln();
        }
    }
    Ok(TopicStep { log_beta, warnings })
}

/// Regression sufficient statistics from the labeled documents.
pub fn glm_suff_stats(corpus: &Corpus, posteriors: &[DocPosterior], family: &ResponseFamily, k: usize) -> GlmSuffStats {
    let mut stats = GlmSuffStats::new(k, family);
    for (doc, post) in corpus.documents.iter().zip(posteriors) {
        if let Some(y) = doc.response {
            stats.add_document(post.phis.view(), y);
        }
    }
    stats
}

/// Diagnostics for one EM iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Corpus ELBO after this iteration's E-step.
    pub elbo: f64,
    pub rel_change: Option<f64>,
    pub mean_doc_iterations: f64,
    pub max_doc_iterations: usize,
    pub eta_iterations: usize,
    pub eta_jitter: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ElboTrace {
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
}

impl ElboTrace {
    pub fn elbos(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.elbo).collect()
    }

    /// `iteration,corpus_elbo,rel_change` with one row per EM iteration.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,corpus_elbo,rel_change\n");
        for r in &self.iterations {
            let rel = r.rel_change.map_or_else(|| "NA".to_string(), |v| v.to_string());
            s.push_str(&format!("{},{},{}\n", r.iteration, r.elbo, rel));
        }
        s
    }
}

/// Fitted parameters, the ELBO trace, and the last E-step's posteriors.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: ModelParams,
    pub trace: ElboTrace,
    pub posteriors: Vec<DocPosterior>,
}

/// Variational EM from [`initialize`] until the relative change of the
/// corpus ELBO drops below `em_rel_tol` or `em_max_iters` iterations.
pub fn fit(corpus: &Corpus, config: &FitConfig) -> Result<FitOutcome> {
    let model = initialize(corpus, config)?;
    fit_from(corpus, config, model)
}

/// Variational EM starting from the given parameters.
pub fn fit_from(corpus: &Corpus, config: &FitConfig, mut model: ModelParams) -> Result<FitOutcome> {
    config.validate()?;
    let k = model.num_topics();
    let has_labels = corpus.num_labeled() > 0;
    // Cold starts and the ratio dispersion update carry no ascent guarantee.
    let strict = config.warm_start && model.family.has_monotone_em();
    let mut trace = ElboTrace::default();
    let mut posteriors: Option<Vec<DocPosterior>> = None;
    let mut previous: Option<f64> = None;

    for iteration in 1..=config.em_max_iters {
        let seed = if config.warm_start { posteriors.as_deref() } else { None };
        let estep = e_step(corpus, &model, config, seed)?;
        let mut warnings = Vec::new();

        let rel_change = previous.map(|p| ((estep.elbo - p) / p).abs());
        if let Some(p) = previous {
            if estep.elbo < p - EM_DECREASE_SLACK {
                if strict {
                    return Err(Error::ElboDecrease {
                        previous: p,
                        current: estep.elbo,
                    });
                }
                let msg = format!("corpus ELBO decreased from {p} to {}", estep.elbo);
                warn!("{msg}");
                warnings.push(msg);
            }
        }

        let topics = mstep_topics(corpus, &estep.posteriors, k)?;
        warnings.extend(topics.warnings);
        model.log_beta = topics.log_beta;

        let mut eta_iterations = 0;
        let mut eta_jitter = None;
        if has_labels {
            let stats = glm_suff_stats(corpus, &estep.posteriors, &model.family, k);
            let eta_step = mstep_eta(&stats, &model.family, &model.glm)?;
            let delta_step = mstep_delta(&stats, eta_step.eta.view(), &model.family, model.glm.delta)?;
            eta_iterations = eta_step.iterations;
            eta_jitter = eta_step.jitter;
            warnings.extend(eta_step.warnings);
            warnings.extend(delta_step.warnings);
            model.glm = GlmParams {
                eta: eta_step.eta,
                delta: delta_step.delta,
            };
        }
        if model.glm.eta.iter().chain(model.log_beta.iter()).any(|v| !v.is_finite()) || !model.glm.delta.is_finite() {
            return Err(Error::NonFinite(format!("model parameter after EM iteration {iteration}")));
        }

        let doc_iters: Vec<usize> = estep.posteriors.iter().map(|p| p.iterations).collect();
        trace.iterations.push(IterationRecord {
            iteration,
            elbo: estep.elbo,
            rel_change,
            mean_doc_iterations: doc_iters.iter().sum::<usize>() as f64 / doc_iters.len() as f64,
            max_doc_iterations: doc_iters.iter().copied().max().unwrap_or(0),
            eta_iterations,
            eta_jitter,
            warnings,
        });
        previous = Some(estep.elbo);
        posteriors = Some(estep.posteriors);
        if rel_change.is_some_and(|r| r < config.em_rel_tol) {
            trace.converged = true;
            break;
        }
    }
    Ok(FitOutcome {
        model,
        trace,
        posteriors: posteriors.unwrap_or_default(),
    })
}
