//! Ancestral sampling from the generative model.

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Gamma, Normal, Poisson};

use crate::corpus::{Corpus, Document, Vocabulary};
use crate::error::{Error, Result};
use crate::family::{FamilyKind, GlmParams, ResponseFamily};

/// Parameters of a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub alpha: f64,
    /// K × V, rows on the simplex.
    pub beta: Array2<f64>,
    pub glm: GlmParams,
    pub family: ResponseFamily,
    pub num_documents: usize,
    pub doc_length: usize,
}

/// K topics over V terms. Topic k spreads `1 − leak` uniformly over its own
/// block of terms (term w belongs to block w mod K) and `leak` uniformly
/// over the whole vocabulary.
pub fn separated_topics(k: usize, v: usize, leak: f64) -> Array2<f64> {
    assert!(k >= 1 && v >= k && (0.0..=1.0).contains(&leak));
    let mut beta = Array2::from_elem((k, v), leak / v as f64);
    for t in 0..k {
        let block = (t..v).step_by(k).count() as f64;
        for w in (t..v).step_by(k) {
            beta[[t, w]] += (1.0 - leak) / block;
        }
    }
    beta
}

fn sample_dirichlet(alpha: f64, k: usize, rng: &mut ChaCha20Rng) -> Result<Vec<f64>> {
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        // Very small α can underflow every coordinate to zero.
        if total > 0.0 {
            return Ok(draws.into_iter().map(|g| g / total).collect());
        }
    }
}

/// Draws θ ∼ Dir(α), then each zₙ ∼ Mult(θ) and wₙ ∼ Mult(β_{zₙ}), then the
/// response from the family at natural parameter ηᵀz̄.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Corpus> {
    let (k, v) = spec.beta.dim();
    if k == 0 || v == 0 || spec.glm.eta.len() != k {
        return Err(Error::InvalidArgument("synthetic parameters have inconsistent shapes".into()));
    }
    if spec.doc_length == 0 || !(spec.alpha > 0.0) || !(spec.glm.delta > 0.0) {
        return Err(Error::InvalidArgument("synthetic parameters out of range".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let topics = spec
        .beta
        .rows()
        .into_iter()
        .map(|row| WeightedIndex::new(row.iter().copied()).map_err(|e| Error::InvalidArgument(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let noise = Normal::new(0.0, spec.glm.delta.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let mut documents = Vec::with_capacity(spec.num_documents);
    for _ in 0..spec.num_documents {
        let theta = sample_dirichlet(spec.alpha, k, &mut rng)?;
        let pick = WeightedIndex::new(&theta).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut tokens = Vec::with_capacity(spec.doc_length);
        let mut counts = vec![0usize; k];
        for _ in 0..spec.doc_length {
            let z = pick.sample(&mut rng);
            counts[z] += 1;
            tokens.push(topics[z].sample(&mut rng));
        }
        let natural: f64 = counts
            .iter()
            .zip(spec.glm.eta.iter())
            .map(|(&c, e)| e * c as f64)
            .sum::<f64>()
            / spec.doc_length as f64;
        let y = match spec.family.kind {
            FamilyKind::Gaussian => natural + noise.sample(&mut rng),
            FamilyKind::Poisson => Poisson::new(natural.exp())
                .map_err(|e| Error::InvalidArgument(e.to_string()))?
                .sample(&mut rng),
        };
        documents.push(Document::new(tokens, Some(y)));
    }
    Corpus::new(Vocabulary::opaque(v), documents)
}
