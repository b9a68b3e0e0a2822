//! Bag-of-words corpora: parsing, vocabulary pruning, response transforms
//! and cross-validation folds.
//!
//! Documents are read in the LDA-C line format `N id:count id:count ...`
//! where `N` is the number of distinct terms on the line. Counts are
//! expanded into one token per occurrence, since each occurrence gets its
//! own variational multinomial during inference.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered list of terms; a term's position is its id.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(terms: Vec<String>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("vocabulary is empty".into()));
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (id, term) in terms.iter().enumerate() {
            if index.insert(term.clone(), id).is_some() {
                return Err(Error::Malformed {
                    line: id + 1,
                    reason: format!("duplicate vocabulary term {term:?}"),
                });
            }
        }
        Ok(Vocabulary { terms, index })
    }

    /// A vocabulary whose terms are the decimal ids themselves.
    pub fn opaque(size: usize) -> Self {
        let terms: Vec<String> = (0..size.max(1)).map(|i| i.to_string()).collect();
        let index = terms.iter().cloned().zip(0..).collect();
        Vocabulary { terms, index }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term(&self, id: usize) -> Option<&str> {
        self.terms.get(id).map(String::as_str)
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        for term in &self.terms {
            writeln!(out, "{term}")?;
        }
        Ok(())
    }
}

/// One document: its tokens (one entry per occurrence) and optional response.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub tokens: Vec<usize>,
    pub response: Option<f64>,
}

impl Document {
    pub fn new(tokens: Vec<usize>, response: Option<f64>) -> Self {
        Document { tokens, response }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// (term, count) pairs in order of first appearance.
    pub fn term_counts(&self) -> Vec<(usize, usize)> {
        let mut counts: Vec<(usize, usize)> = Vec::new();
        let mut position: HashMap<usize, usize> = HashMap::new();
        for &t in &self.tokens {
            match position.get(&t) {
                Some(&p) => counts[p].1 += 1,
                None => {
                    position.insert(t, counts.len());
                    counts.push((t, 1));
                }
            }
        }
        counts
    }

    /// The document as one LDA-C line (without trailing newline).
    pub fn to_lda_c(&self) -> String {
        let counts = self.term_counts();
        let mut line = counts.len().to_string();
        for (t, c) in counts {
            let _ = write!(line, " {t}:{c}");
        }
        line
    }
}

/// Invertible transform applied to responses before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ResponseTransform {
    #[default]
    None,
    Log,
    ShiftedLog { shift: f64 },
}

impl ResponseTransform {
    fn shift(&self) -> f64 {
        match *self {
            ResponseTransform::ShiftedLog { shift } => shift,
            _ => 0.0,
        }
    }

    pub fn forward(&self, y: f64) -> f64 {
        match self {
            ResponseTransform::None => y,
            _ => (y + self.shift()).ln(),
        }
    }

    pub fn inverse(&self, v: f64) -> f64 {
        match self {
            ResponseTransform::None => v,
            _ => v.exp() - self.shift(),
        }
    }
}

/// Documents over a shared vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocabulary: Vocabulary,
    pub documents: Vec<Document>,
    /// Transform already applied to the responses.
    pub transform: ResponseTransform,
}

impl Corpus {
    pub fn new(vocabulary: Vocabulary, documents: Vec<Document>) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::InvalidArgument("corpus has no documents".into()));
        }
        let v = vocabulary.len();
        for (d, doc) in documents.iter().enumerate() {
            if doc.is_empty() {
                return Err(Error::InvalidArgument(format!("document {d} is empty")));
            }
            if let Some(&t) = doc.tokens.iter().find(|&&t| t >= v) {
                return Err(Error::TermOutOfRange {
                    line: d + 1,
                    term: t,
                    vocab_size: v,
                });
            }
        }
        Ok(Corpus {
            vocabulary,
            documents,
            transform: ResponseTransform::None,
        })
    }

    pub fn num_documents(&self) -> usize {
        self.documents.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn num_labeled(&self) -> usize {
        self.documents.iter().filter(|d| d.response.is_some()).count()
    }

    pub fn num_tokens(&self) -> usize {
        self.documents.iter().map(Document::len).sum()
    }

    /// A copy with every response removed.
    pub fn without_responses(&self) -> Corpus {
        let mut c = self.clone();
        for d in &mut c.documents {
            d.response = None;
        }
        c
    }

    /// Subset of documents, in the given order, sharing this vocabulary.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            vocabulary: self.vocabulary.clone(),
            documents: indices.iter().map(|&i| self.documents[i].clone()).collect(),
            transform: self.transform,
        }
    }

    pub fn write_documents<W: Write>(&self, mut out: W) -> Result<()> {
        for doc in &self.documents {
            writeln!(out, "{}", doc.to_lda_c())?;
        }
        Ok(())
    }

    pub fn write_responses<W: Write>(&self, mut out: W) -> Result<()> {
        for doc in &self.documents {
            match doc.response {
                Some(y) => writeln!(out, "{y}")?,
                None => writeln!(out, "NA")?,
            }
        }
        Ok(())
    }
}

fn parse_document_line(line: &str, lineno: usize, vocab_size: Option<usize>) -> Result<Vec<usize>> {
    let malformed = |reason: String| Error::Malformed {
        line: lineno,
        reason,
    };
    let mut fields = line.split_whitespace();
    let declared: usize = match fields.next() {
        None => return Err(malformed("blank line".into())),
        Some(f) => f
            .parse()
            .map_err(|_| malformed(format!("bad term count {f:?}")))?,
    };
    let mut tokens = Vec::new();
    let mut seen = Vec::new();
    for field in fields {
        let (term, count) = field
            .split_once(':')
            .ok_or_else(|| malformed(format!("expected id:count, got {field:?}")))?;
        let term: usize = term
            .parse()
            .map_err(|_| malformed(format!("bad term id {term:?}")))?;
        let count: i64 = count
            .parse()
            .map_err(|_| malformed(format!("bad count {count:?}")))?;
        if count <= 0 {
            return Err(Error::NonPositiveCount {
                line: lineno,
                term,
                count,
            });
        }
        if let Some(v) = vocab_size {
            if term >= v {
                return Err(Error::TermOutOfRange {
                    line: lineno,
                    term,
                    vocab_size: v,
                });
            }
        }
        if seen.contains(&term) {
            return Err(malformed(format!("term {term} listed twice")));
        }
        seen.push(term);
        tokens.extend(std::iter::repeat_n(term, count as usize));
    }
    if seen.len() != declared {
        return Err(malformed(format!(
            "declared {declared} distinct terms but found {}",
            seen.len()
        )));
    }
    if tokens.is_empty() {
        return Err(malformed("document has no tokens".into()));
    }
    Ok(tokens)
}

fn parse_responses<R: BufRead>(input: R) -> Result<Vec<Option<f64>>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let value = line.trim();
        if value == "NA" {
            out.push(None);
            continue;
        }
        match value.parse::<f64>() {
            Ok(y) if y.is_finite() => out.push(Some(y)),
            _ => {
                return Err(Error::BadResponse {
                    line: i + 1,
                    value: value.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Reads a corpus from LDA-C document lines, an optional responses stream
/// (one number or `NA` per line) and an optional vocabulary (one term per
/// line). Without a vocabulary, ids are opaque and V = 1 + max id.
pub fn parse_corpus<D, R, V>(docs: D, responses: Option<R>, vocab: Option<V>) -> Result<Corpus>
where
    D: BufRead,
    R: BufRead,
    V: BufRead,
{
    let vocabulary = match vocab {
        Some(v) => {
            let terms = v.lines().collect::<std::io::Result<Vec<_>>>()?;
            Some(Vocabulary::new(terms)?)
        }
        None => None,
    };
    let declared = vocabulary.as_ref().map(Vocabulary::len);

    let mut token_lists = Vec::new();
    for (i, line) in docs.lines().enumerate() {
        token_lists.push(parse_document_line(&line?, i + 1, declared)?);
    }
    if token_lists.is_empty() {
        return Err(Error::InvalidArgument("documents stream is empty".into()));
    }

    let responses = match responses {
        Some(r) => parse_responses(r)?,
        None => Vec::new(),
    };
    if !responses.is_empty() && responses.len() != token_lists.len() {
        return Err(Error::ResponseCountMismatch {
            documents: token_lists.len(),
            responses: responses.len(),
        });
    }

    let vocabulary = vocabulary.unwrap_or_else(|| {
        let max_id = token_lists.iter().flatten().copied().max().unwrap_or(0);
        Vocabulary::opaque(max_id + 1)
    });
    let documents = token_lists
        .into_iter()
        .enumerate()
        .map(|(d, tokens)| Document::new(tokens, responses.get(d).copied().flatten()))
        .collect();
    Corpus::new(vocabulary, documents)
}

/// Result of [`prune_vocabulary`].
#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub corpus: Corpus,
    /// Old id of each surviving term, indexed by new id.
    pub kept_terms: Vec<usize>,
    /// Indices (into the input corpus) of documents left with no tokens.
    pub dropped_documents: Vec<usize>,
}

/// Number of documents containing each term.
pub fn document_frequencies(corpus: &Corpus) -> Vec<usize> {
    let mut df = vec![0usize; corpus.vocab_size()];
    let mut last_seen = vec![usize::MAX; corpus.vocab_size()];
    for (d, doc) in corpus.documents.iter().enumerate() {
        for &t in &doc.tokens {
            if last_seen[t] != d {
                last_seen[t] = d;
                df[t] += 1;
            }
        }
    }
    df
}

/// Removes terms occurring in more than `max_doc_frac · D` documents or in
/// fewer than `min_doc_count` documents, re-densifies ids, and drops
/// documents that end up empty.
pub fn prune_vocabulary(corpus: &Corpus, max_doc_frac: f64, min_doc_count: usize) -> Result<PruneOutcome> {
    if !(max_doc_frac > 0.0 && max_doc_frac <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "max_doc_frac must be in (0, 1], got {max_doc_frac}"
        )));
    }
    let df = document_frequencies(corpus);
    let limit = max_doc_frac * corpus.num_documents() as f64;
    let mut remap = vec![None; corpus.vocab_size()];
    let mut kept_terms = Vec::new();
    for (t, &f) in df.iter().enumerate() {
        if (f as f64) <= limit && f >= min_doc_count {
            remap[t] = Some(kept_terms.len());
            kept_terms.push(t);
        }
    }
    if kept_terms.is_empty() {
        return Err(Error::EmptyVocabulary);
    }

    let mut documents = Vec::new();
    let mut dropped_documents = Vec::new();
    for (d, doc) in corpus.documents.iter().enumerate() {
        let tokens: Vec<usize> = doc.tokens.iter().filter_map(|&t| remap[t]).collect();
        if tokens.is_empty() {
            dropped_documents.push(d);
        } else {
            documents.push(Document::new(tokens, doc.response));
        }
    }
    if documents.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let terms = kept_terms
        .iter()
        .map(|&t| corpus.vocabulary.terms()[t].clone())
        .collect();
    let mut pruned = Corpus::new(Vocabulary::new(terms)?, documents)?;
    pruned.transform = corpus.transform;
    Ok(PruneOutcome {
        corpus: pruned,
        kept_terms,
        dropped_documents,
    })
}

/// Applies `mode` to every present response and records it on the corpus.
pub fn transform_responses(corpus: &Corpus, mode: ResponseTransform) -> Result<Corpus> {
    if corpus.transform != ResponseTransform::None && mode != ResponseTransform::None {
        return Err(Error::InvalidArgument(
            "responses are already transformed".into(),
        ));
    }
    let mut out = corpus.clone();
    if mode == ResponseTransform::None {
        return Ok(out);
    }
    for (d, doc) in out.documents.iter_mut().enumerate() {
        if let Some(y) = doc.response {
            let arg = y + mode.shift();
            if !(arg > 0.0) {
                return Err(Error::NonPositiveLog { doc: d, value: arg });
            }
            doc.response = Some(arg.ln());
        }
    }
    out.transform = mode;
    Ok(out)
}

/// Fold id for each of `n` items: a seeded shuffle cut into `k` contiguous
/// blocks, the first `n mod k` blocks one item larger.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::TooFewDocuments {
            documents: n,
            folds: k,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let base = n / k;
    let extra = n % k;
    let mut assignment = vec![0; n];
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &item in &order[pos..pos + size] {
            assignment[item] = fold;
        }
        pos += size;
    }
    Ok(assignment)
}

/// One train/test split.
#[derive(Debug, Clone)]
pub struct Fold {
    pub id: usize,
    pub train: Corpus,
    pub test: Corpus,
    /// Indices of the test documents in the source corpus, ascending.
    pub test_indices: Vec<usize>,
}

pub fn split_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<Vec<Fold>> {
    let assignment = fold_assignment(corpus.num_documents(), k, seed)?;
    Ok((0..k)
        .map(|id| {
            let (test_indices, train_indices): (Vec<usize>, Vec<usize>) =
                (0..corpus.num_documents()).partition(|&d| assignment[d] == id);
            Fold {
                id,
                train: corpus.subset(&train_indices),
                test: corpus.subset(&test_indices),
                test_indices,
            }
        })
        .collect())
}

/// One line per document: `index fold`. `None` (written `NA`) marks a
/// document that is never held out.
pub fn fold_report(assignment: &[Option<usize>]) -> String {
    let mut s = String::from("document fold\n");
    for (d, f) in assignment.iter().enumerate() {
        let _ = match f {
            Some(f) => writeln!(s, "{d} {f}"),
            None => writeln!(s, "{d} NA"),
        };
    }
    s
}
