//! Okapi BM25 over short candidate strings (relation ids).

use std::collections::HashMap;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

/// Lowercased alphanumeric runs. Relation ids split on `.` and `_` this way.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    docs: Vec<String>,
    term_freqs: Vec<HashMap<String, u32>>,
    lengths: Vec<f64>,
    doc_freq: HashMap<String, u32>,
    avg_len: f64,
    k1: f64,
    b: f64,
}

impl Bm25Index {
    pub fn new<S: AsRef<str>>(corpus: &[S]) -> Self {
        Self::with_params(corpus, DEFAULT_K1, DEFAULT_B)
    }

    pub fn with_params<S: AsRef<str>>(corpus: &[S], k1: f64, b: f64) -> Self {
        let mut term_freqs = Vec::with_capacity(corpus.len());
        let mut lengths = Vec::with_capacity(corpus.len());
        let mut doc_freq: HashMap<String, u32> = HashMap::new();
        for doc in corpus {
            let tokens = tokenize(doc.as_ref());
            lengths.push(tokens.len() as f64);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for t in tf.keys() {
                *doc_freq.entry(t.clone()).or_default() += 1;
            }
            term_freqs.push(tf);
        }
        let avg_len = if lengths.is_empty() {
            0.0
        } else {
            lengths.iter().sum::<f64>() / lengths.len() as f64
        };
        Self {
            docs: corpus.iter().map(|d| d.as_ref().to_string()).collect(),
            term_freqs,
            lengths,
            doc_freq,
            avg_len,
            k1,
            b,
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`, never negative.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = f64::from(self.doc_freq.get(term).copied().unwrap_or(0));
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Query tokens are summed with multiplicity.
    pub fn score(&self, query: &str, doc: usize) -> f64 {
        let terms = self.weighted_terms(query);
        self.score_terms(&terms, doc)
    }

    fn weighted_terms(&self, query: &str) -> Vec<(String, f64)> {
        tokenize(query)
            .into_iter()
            .map(|t| {
                let idf = self.idf(&t);
                (t, idf)
            })
            .collect()
    }

    fn score_terms(&self, terms: &[(String, f64)], doc: usize) -> f64 {
        let tf = &self.term_freqs[doc];
        let len_norm = if self.avg_len > 0.0 {
            self.lengths[doc] / self.avg_len
        } else {
            0.0
        };
        terms
            .iter()
            .filter_map(|(term, idf)| {
                let f = f64::from(*tf.get(term)?);
                let denom = f + self.k1 * (1.0 - self.b + self.b * len_norm);
                Some(idf * f * (self.k1 + 1.0) / denom)
            })
            .sum()
    }

    /// Documents by descending score; equal scores in lexicographic order.
    pub fn rank(&self, query: &str) -> Vec<(String, f64)> {
        let terms = self.weighted_terms(query);
        let mut scored: Vec<(String, f64)> = self
            .docs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.clone(), self.score_terms(&terms, i)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored
    }
}
