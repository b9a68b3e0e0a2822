//! Supervised latent Dirichlet allocation.
//!
//! Documents are bags of words with an optional response. Each document has
//! topic proportions θ ∼ Dir(α); each token draws a topic zₙ ∼ Mult(θ) and a
//! term wₙ ∼ Mult(β_{zₙ}); the response is drawn from a GLM with natural
//! parameter ηᵀz̄, where z̄ is the empirical topic frequency of the document.
//!
//! Fitting is variational EM under a fully factorized posterior
//! ([`train::fit`]). Predictions for new documents come from response-free
//! inference followed by the expected GLM mean ([`eval::predict_response`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod error;
pub mod eval;
pub mod family;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod special;
pub mod synth;
pub mod train;

pub use corpus::{parse_corpus, prune_vocabulary, Corpus, Document, ResponseTransform, Vocabulary};
pub use error::{Error, Result};
pub use eval::{baseline_lda_regression, correlation, cross_validate, predict_response, predictive_r2, EvalReport};
pub use family::{FamilyKind, GlmParams, PoissonDispersion, PoissonLogNormalizer, ResponseFamily};
pub use inference::{infer_document, DocPosterior, InferenceConfig, InferenceMode};
pub use model::{load_model, save_model, ModelParams};
pub use train::{fit, AlphaSetting, EtaInit, FitConfig, FitOutcome};
