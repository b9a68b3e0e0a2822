//! Prediction for new documents and cross-validated evaluation.
//!
//! Folds partition the labeled documents only. Unlabeled documents carry no
//! score, so they join every training set and are counted in
//! `skipped_unlabeled`. Metrics are computed on the scale the model was
//! trained on, i.e. after any response transform.

use std::fmt::Write as _;

use log::warn;
use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;

use crate::corpus::{fold_assignment, Corpus, Document};
use crate::error::{Error, Result};
use crate::family::predict_mean;
use crate::inference::{infer_document, InferenceConfig};
use crate::linalg::solve_spd;
use crate::model::ModelParams;
use crate::train::{fit, FitConfig};

/// 1 − Σ(y − ŷ)² / Σ(y − ȳ)².
pub fn predictive_r2(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if tss == 0.0 {
        return Err(Error::ConstantInput("undefined pR²: response is constant"));
    }
    let rss: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - rss / tss)
}

/// Pearson correlation.
pub fn correlation(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let mh = yhat.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(yhat) {
        sxy += (a - my) * (b - mh);
        sxx += (a - my).powi(2);
        syy += (b - mh).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantInput("undefined correlation: constant input"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn check_pair(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() || y.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need two equal-length vectors of length at least 2, got {} and {}",
            y.len(),
            yhat.len()
        )));
    }
    if y.iter().chain(yhat).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("metric input".into()));
    }
    Ok(())
}

/// A predicted response on the training scale and on the original scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub raw: f64,
    pub reported: f64,
}

/// E_q[μ(ηᵀZ̄)] under prediction-mode inference, which never looks at any
/// response attached to `doc`.
pub fn predict_response(doc: &Document, model: &ModelParams, config: &InferenceConfig) -> Result<Prediction> {
    let post = infer_document(doc, None, model, &config.prediction())?;
    // Summing rows in term order keeps the result bit-identical under any
    // permutation of the tokens.
    let mut order: Vec<usize> = (0..doc.len()).collect();
    order.sort_by_key(|&i| doc.tokens[i]);
    let sorted = post.phis.select(Axis(0), &order);
    let raw = predict_mean(sorted.view(), model.eta(), &model.family);
    Ok(Prediction {
        raw,
        reported: model.transform.inverse(raw),
    })
}

/// Predictions for every document of `corpus`, in order.
pub fn predict_corpus(corpus: &Corpus, model: &ModelParams, config: &InferenceConfig) -> Result<Vec<Prediction>> {
    corpus
        .documents
        .par_iter()
        .enumerate()
        .map(|(d, doc)| predict_response(doc, model, config).map_err(|e| e.in_document(d)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_test: usize,
    /// `None` when the fold's responses are constant or it has one document.
    pub pr2: Option<f64>,
    pub corr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub pr2: f64,
    pub corr: f64,
}

/// One out-of-fold prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeldOut {
    pub doc: usize,
    pub fold: usize,
    pub y: f64,
    pub yhat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_fold: Vec<FoldMetrics>,
    /// Over the concatenation of all out-of-fold predictions.
    pub pooled: Metrics,
    pub skipped_unlabeled: usize,
    /// Ordered by document index.
    pub predictions: Vec<HeldOut>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

impl EvalReport {
    /// Held-out fold of each of `num_documents` documents; `None` for the
    /// unlabeled ones, which sit in every training set.
    pub fn fold_assignment(&self, num_documents: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; num_documents];
        for p in &self.predictions {
            out[p.doc] = Some(p.fold);
        }
        out
    }

    /// `fold,n_test,pr2,corr`, one row per fold and a final `pooled` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fold,n_test,pr2,corr\n");
        for f in &self.per_fold {
            let _ = writeln!(s, "{},{},{},{}", f.fold, f.n_test, fmt_opt(f.pr2), fmt_opt(f.corr));
        }
        let _ = writeln!(s, "pooled,{},{},{}", self.predictions.len(), self.pooled.pr2, self.pooled.corr);
        s
    }

    pub fn to_table(&self) -> String {
        let show = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
        let mut s = format!("{:>6}  {:>6}  {:>8}  {:>8}\n", "fold", "n_test", "pR2", "corr");
        for f in &self.per_fold {
            let _ = writeln!(s, "{:>6}  {:>6}  {:>8}  {:>8}", f.fold, f.n_test, show(f.pr2), show(f.corr));
        }
        let _ = writeln!(
            s,
            "{:>6}  {:>6}  {:>8.4}  {:>8.4}",
            "pooled",
            self.predictions.len(),
            self.pooled.pr2,
            self.pooled.corr
        );
        if self.skipped_unlabeled > 0 {
            let _ = writeln!(s, "unlabeled documents used for training only: {}", self.skipped_unlabeled);
        }
        s
    }
}

/// A train/test split of a corpus over its labeled documents.
struct Split {
    id: usize,
    train: Corpus,
    test: Corpus,
    test_indices: Vec<usize>,
}

fn labeled_splits(corpus: &Corpus, folds: usize, seed: u64) -> Result<(Vec<Split>, usize)> {
    let labeled: Vec<usize> = (0..corpus.num_documents())
        .filter(|&d| corpus.documents[d].response.is_some())
        .collect();
    let unlabeled = corpus.num_documents() - labeled.len();
    let assignment = fold_assignment(labeled.len(), folds, seed)?;
    let splits = (0..folds)
        .map(|id| {
            let mut train = Vec::new();
            let mut test = Vec::new();
            let mut next = 0;
            for d in 0..corpus.num_documents() {
                if next < labeled.len() && labeled[next] == d {
                    if assignment[next] == id {
                        test.push(d);
                    } else {
                        train.push(d);
                    }
                    next += 1;
                } else {
                    train.push(d);
                }
            }
            Split {
                id,
                train: corpus.subset(&train),
                test: corpus.subset(&test),
                test_indices: test,
            }
        })
        .collect();
    Ok((splits, unlabeled))
}

/// Fold id, test document indices, responses and predictions.
type FoldResult = (usize, Vec<usize>, Vec<f64>, Vec<f64>);

fn assemble(results: Vec<FoldResult>, skipped_unlabeled: usize) -> Result<EvalReport> {
    let mut per_fold = Vec::with_capacity(results.len());
    let mut predictions = Vec::new();
    for (fold, indices, y, yhat) in results {
        per_fold.push(FoldMetrics {
            fold,
            n_test: y.len(),
            pr2: predictive_r2(&y, &yhat).ok(),
            corr: correlation(&y, &yhat).ok(),
        });
        for ((doc, y), yhat) in indices.into_iter().zip(y).zip(yhat) {
            predictions.push(HeldOut { doc, fold, y, yhat });
        }
    }
    predictions.sort_by_key(|p| p.doc);
    let y: Vec<f64> = predictions.iter().map(|p| p.y).collect();
    let yhat: Vec<f64> = predictions.iter().map(|p| p.yhat).collect();
    let pooled = Metrics {
        pr2: predictive_r2(&y, &yhat)?,
        corr: correlation(&y, &yhat)?,
    };
    Ok(EvalReport {
        per_fold,
        pooled,
        skipped_unlabeled,
        predictions,
    })
}

fn run_folds<F>(splits: Vec<Split>, parallel: bool, run: F) -> Result<Vec<FoldResult>>
where
    F: Fn(&Split) -> Result<Vec<f64>> + Sync,
{
    let one = |s: Split| -> Result<FoldResult> {
        let yhat = run(&s).map_err(|e| e.in_fold(s.id))?;
        let y = s.test.documents.iter().map(|d| d.response.unwrap_or(f64::NAN)).collect();
        Ok((s.id, s.test_indices, y, yhat))
    };
    if parallel {
        splits.into_par_iter().map(one).collect()
    } else {
        splits.into_iter().map(one).collect()
    }
}

/// Fits sLDA on each training split and predicts the held-out responses.
pub fn cross_validate(corpus: &Corpus, config: &FitConfig, folds: usize, seed: u64) -> Result<EvalReport> {
    let (splits, skipped) = labeled_splits(corpus, folds, seed)?;
    let results = run_folds(splits, config.parallel, |s| {
        let model = fit(&s.train, config)?.model;
        Ok(predict_corpus(&s.test, &model, &config.inference)?
            .into_iter()
            .map(|p| p.raw)
            .collect())
    })?;
    assemble(results, skipped)
}

/// Ordinary least squares coefficients for `x` (rows are observations).
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: Array1<f64>,
    pub jitter: Option<f64>,
}

pub fn ols(x: &Array2<f64>, y: &[f64]) -> Result<OlsFit> {
    let yv = Array1::from(y.to_vec());
    let sol = solve_spd(&x.t().dot(x), &x.t().dot(&yv))?;
    if let Some(j) = sol.jitter {
        warn!("least-squares system is singular; ridge {j:e} added");
    }
    Ok(OlsFit {
        coef: sol.x,
        jitter: sol.jitter,
    })
}

/// Rows [1, φ̄₁, …, φ̄_{K−1}]: the last topic column is implied by the
/// intercept since φ̄ sums to one.
fn baseline_features(zbars: &[Array1<f64>]) -> Array2<f64> {
    let k = zbars.first().map_or(1, |z| z.len());
    let mut x = Array2::zeros((zbars.len(), k));
    for (mut row, z) in x.rows_mut().into_iter().zip(zbars) {
        row[0] = 1.0;
        for j in 0..k - 1 {
            row[j + 1] = z[j];
        }
    }
    x
}

fn mean_topic_frequencies(corpus: &Corpus, model: &ModelParams, config: &InferenceConfig) -> Result<Vec<Array1<f64>>> {
    let config = config.prediction();
    corpus
        .documents
        .par_iter()
        .enumerate()
        .map(|(d, doc)| {
            infer_document(doc, None, model, &config)
                .map(|p| p.expected_zbar())
                .map_err(|e| e.in_document(d))
        })
        .collect()
}

/// Unsupervised LDA on each training split, then least squares of y on the
/// inferred topic frequencies of the labeled training documents.
pub fn baseline_lda_regression(corpus: &Corpus, config: &FitConfig, folds: usize, seed: u64) -> Result<EvalReport> {
    let (splits, skipped) = labeled_splits(corpus, folds, seed)?;
    let results = run_folds(splits, config.parallel, |s| {
        let lda = fit(&s.train.without_responses(), config)?.model;
        let labeled: Vec<usize> = (0..s.train.num_documents())
            .filter(|&d| s.train.documents[d].response.is_some())
            .collect();
        let labeled_train = s.train.subset(&labeled);
        let y: Vec<f64> = labeled_train.documents.iter().filter_map(|d| d.response).collect();
        let x = baseline_features(&mean_topic_frequencies(&labeled_train, &lda, &config.inference)?);
        let coef = ols(&x, &y)?.coef;
        let x_test = baseline_features(&mean_topic_frequencies(&s.test, &lda, &config.inference)?);
        Ok(x_test.dot(&coef).to_vec())
    })?;
    assemble(results, skipped)
}
