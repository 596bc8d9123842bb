//! In-memory inverted index with BM25 scoring and exhaustive top-c retrieval.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use crate::corpus::{tokenize, CorpusHandle, DocId, Query};

/// BM25 saturation and length-normalisation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self, IndexError> {
        let params = Self { k1, b };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), IndexError> {
        if !(self.k1.is_finite() && self.k1 >= 0.0) {
            return Err(IndexError::InvalidParams(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(IndexError::InvalidParams(format!("b must lie in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum IndexError {
    #[error("document {doc} out of range (index holds {len} documents)")]
    DocOutOfRange { doc: DocId, len: usize },
    #[error("invalid BM25 parameters: {0}")]
    InvalidParams(String),
}

/// A retrieved or reranked document with its score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredDoc {
    pub doc: DocId,
    pub score: f64,
}

impl ScoredDoc {
    pub fn new(doc: DocId, score: f64) -> Self {
        Self { doc, score }
    }
}

/// Ordered `(doc, score)` list. Initial retrieval, reranked pools and final
/// outputs all share this shape.
pub type Ranking = Vec<ScoredDoc>;

/// Score descending, then internal id ascending.
pub fn ranking_order(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.score.total_cmp(&a.score).then(a.doc.cmp(&b.doc))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: DocId,
    pub tf: u32,
}

#[derive(Debug, Clone, Default)]
pub struct InvertedIndex {
    vocab: HashMap<String, u32>,
    postings: Vec<Vec<Posting>>,
    doc_len: Vec<u32>,
    avgdl: f64,
}

pub fn build_index(corpus: &CorpusHandle) -> InvertedIndex {
    let mut vocab: HashMap<String, u32> = HashMap::new();
    let mut postings: Vec<Vec<Posting>> = Vec::new();
    let mut doc_len = Vec::with_capacity(corpus.len());
    let mut counts: Vec<(u32, u32)> = Vec::new();

    for (doc, document) in corpus.iter() {
        let tokens = tokenize(&document.text);
        doc_len.push(tokens.len() as u32);

        let mut local: HashMap<u32, u32> = HashMap::new();
        for token in tokens {
            let next = vocab.len() as u32;
            let term = *vocab.entry(token).or_insert_with(|| {
                postings.push(Vec::new());
                next
            });
            *local.entry(term).or_insert(0) += 1;
        }
        counts.clear();
        counts.extend(local);
        // Documents are visited in id order, so every postings list stays sorted.
        for &(term, tf) in &counts {
            postings[term as usize].push(Posting { doc, tf });
        }
    }

    let total: u64 = doc_len.iter().map(|&l| u64::from(l)).sum();
    let avgdl = if doc_len.is_empty() {
        0.0
    } else {
        total as f64 / doc_len.len() as f64
    };

    InvertedIndex {
        vocab,
        postings,
        doc_len,
        avgdl,
    }
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`, never negative.
#[inline]
pub fn idf(num_docs: usize, df: usize) -> f64 {
    let n = num_docs as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// A query reduced to index term ids, deduplicated in first-occurrence order.
#[derive(Debug, Clone, Default)]
pub struct PreparedQuery {
    terms: Vec<(u32, f64)>,
}

impl PreparedQuery {
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

impl InvertedIndex {
    pub fn num_docs(&self) -> usize {
        self.doc_len.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn doc_len(&self, doc: DocId) -> Option<u32> {
        self.doc_len.get(doc.index()).copied()
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings(term).map_or(0, <[Posting]>::len)
    }

    pub fn postings(&self, term: &str) -> Option<&[Posting]> {
        self.vocab
            .get(term)
            .map(|&t| self.postings[t as usize].as_slice())
    }

    pub fn tf(&self, term: &str, doc: DocId) -> u32 {
        self.postings(term)
            .and_then(|list| {
                list.binary_search_by_key(&doc, |p| p.doc)
                    .ok()
                    .map(|i| list[i].tf)
            })
            .unwrap_or(0)
    }

    /// Map tokens to term ids, dropping unknown terms and repeats.
    pub fn prepare<S: AsRef<str>>(&self, tokens: &[S]) -> PreparedQuery {
        let mut seen = HashSet::new();
        let mut terms = Vec::new();
        for token in tokens {
            if let Some(&term) = self.vocab.get(token.as_ref()) {
                if seen.insert(term) {
                    let df = self.postings[term as usize].len();
                    terms.push((term, idf(self.num_docs(), df)));
                }
            }
        }
        PreparedQuery { terms }
    }

    #[inline]
    fn term_weight(&self, params: &Bm25Params, idf: f64, tf: u32, doc_len: u32) -> f64 {
        let tf = f64::from(tf);
        let norm = 1.0 - params.b + params.b * f64::from(doc_len) / self.avgdl;
        idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
    }

    pub fn bm25_score<S: AsRef<str>>(
        &self,
        params: &Bm25Params,
        query_tokens: &[S],
        doc: DocId,
    ) -> Result<f64, IndexError> {
        let prepared = self.prepare(query_tokens);
        self.bm25_score_prepared(params, &prepared, doc)
    }

    pub fn bm25_score_prepared(
        &self,
        params: &Bm25Params,
        query: &PreparedQuery,
        doc: DocId,
    ) -> Result<f64, IndexError> {
        let doc_len = self.doc_len(doc).ok_or(IndexError::DocOutOfRange {
            doc,
            len: self.num_docs(),
        })?;
        let mut score = 0.0;
        for &(term, idf) in &query.terms {
            let list = &self.postings[term as usize];
            if let Ok(i) = list.binary_search_by_key(&doc, |p| p.doc) {
                score += self.term_weight(params, idf, list[i].tf, doc_len);
            }
        }
        Ok(score)
    }

    /// Exhaustive top-`c` over every document sharing a term with the query.
    ///
    /// Only positive scores are returned, ordered by score descending and then
    /// internal id ascending.
    pub fn retrieve_topk(&self, params: &Bm25Params, query: &Query, c: usize) -> Ranking {
        let tokens = tokenize(&query.text);
        let prepared = self.prepare(&tokens);
        let mut scratch = Accumulator::new(self.num_docs());
        self.retrieve_prepared(params, &prepared, c, None, &mut scratch)
    }

    pub(crate) fn retrieve_prepared(
        &self,
        params: &Bm25Params,
        query: &PreparedQuery,
        c: usize,
        exclude: Option<DocId>,
        scratch: &mut Accumulator,
    ) -> Ranking {
        scratch.reset(self.num_docs());
        for &(term, idf) in &query.terms {
            for posting in &self.postings[term as usize] {
                let len = self.doc_len[posting.doc.index()];
                scratch.add(posting.doc, self.term_weight(params, idf, posting.tf, len));
            }
        }
        let mut hits: Ranking = scratch
            .touched
            .iter()
            .map(|&doc| ScoredDoc::new(doc, scratch.scores[doc.index()]))
            .filter(|sd| sd.score > 0.0 && Some(sd.doc) != exclude)
            .collect();
        if hits.len() > c {
            hits.select_nth_unstable_by(c, ranking_order);
            hits.truncate(c);
        }
        hits.sort_unstable_by(ranking_order);
        hits
    }
}

/// Dense score accumulator reused across queries.
#[derive(Debug, Default)]
pub(crate) struct Accumulator {
    scores: Vec<f64>,
    seen: Vec<bool>,
    touched: Vec<DocId>,
}

impl Accumulator {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            scores: vec![0.0; n],
            seen: vec![false; n],
            touched: Vec::new(),
        }
    }

    fn reset(&mut self, n: usize) {
        if self.scores.len() != n {
            *self = Self::new(n);
            return;
        }
        for doc in self.touched.drain(..) {
            self.scores[doc.index()] = 0.0;
            self.seen[doc.index()] = false;
        }
    }

    #[inline]
    fn add(&mut self, doc: DocId, w: f64) {
        let i = doc.index();
        if !self.seen[i] {
            self.seen[i] = true;
            self.touched.push(doc);
        }
        self.scores[i] += w;
    }
}
