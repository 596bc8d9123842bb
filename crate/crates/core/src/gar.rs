//! Graph-based adaptive reranking and the standard rerank baseline.
//!
//! The adaptive loop scores documents in batches, alternating between the
//! initial retrieval list and a frontier of unscored graph neighbours. Each
//! neighbour of a freshly scored document enters the frontier with that
//! document's score as its priority (keeping the maximum when several
//! scored documents point at it), so the reranker's own feedback steers
//! which part of the corpus graph gets explored next. The loop stops once
//! `budget` documents have been scored or both sources are exhausted.

use std::cmp::Ordering;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::time::{Duration, Instant};

use crate::corpus::{CorpusHandle, DocId, Query};
use crate::graph::{CorpusGraph, GraphError};
use crate::index::{ranking_order, Ranking, ScoredDoc};
use crate::scorer::{BatchDoc, ScoreBatchRequest, Scorer, ScorerError};

/// Gap between consecutive backfilled scores.
pub const BACKFILL_EPSILON: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum GarError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("graph covers {graph} documents but the corpus holds {corpus}")]
    GraphMismatch { graph: usize, corpus: usize },
    #[error("invalid initial ranking: {0}")]
    InvalidInitial(String),
    #[error("scorer returned unusable scores: {0}")]
    BadScores(String),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GarConfig {
    /// Maximum number of documents scored per query (`c`).
    pub budget: usize,
    /// Documents per scorer call (`b`).
    pub batch_size: usize,
    /// Neighbours read per scored document (`k`).
    pub neighbors: usize,
}

impl Default for GarConfig {
    fn default() -> Self {
        Self {
            budget: 100,
            batch_size: 16,
            neighbors: 16,
        }
    }
}

impl GarConfig {
    pub fn new(budget: usize, batch_size: usize, neighbors: usize) -> Result<Self, GarError> {
        let config = Self {
            budget,
            batch_size,
            neighbors,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), GarError> {
        if self.budget == 0 || self.batch_size == 0 || self.neighbors == 0 {
            return Err(GarError::InvalidConfig(
                "budget, batch size and neighbour count must all be positive".into(),
            ));
        }
        if self.batch_size > self.budget {
            return Err(GarError::InvalidConfig(format!(
                "batch size {} exceeds budget {}",
                self.batch_size, self.budget
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Initial,
    Frontier,
}

impl Source {
    pub fn other(self) -> Self {
        match self {
            Source::Initial => Source::Frontier,
            Source::Frontier => Source::Initial,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct HeapEntry {
    priority: f64,
    doc: DocId,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    // Max-heap: higher priority first, then lower id.
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.doc.cmp(&self.doc))
    }
}

/// Unscored graph neighbours awaiting a score, extracted in
/// (priority desc, id asc) order.
///
/// Priorities only ever increase. Superseded heap entries are discarded
/// lazily on extraction.
#[derive(Debug, Clone, Default)]
pub struct Frontier {
    priority: HashMap<DocId, f64>,
    heap: BinaryHeap<HeapEntry>,
}

impl Frontier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.priority.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priority.is_empty()
    }

    pub fn priority(&self, doc: DocId) -> Option<f64> {
        self.priority.get(&doc).copied()
    }

    pub fn contains(&self, doc: DocId) -> bool {
        self.priority.contains_key(&doc)
    }

    /// Set the priority to `max(existing, priority)`. Returns whether it changed.
    pub fn raise(&mut self, doc: DocId, priority: f64) -> bool {
        match self.priority.entry(doc) {
            Entry::Occupied(mut e) => {
                if priority.total_cmp(e.get()) != Ordering::Greater {
                    return false;
                }
                e.insert(priority);
            }
            Entry::Vacant(e) => {
                e.insert(priority);
            }
        }
        self.heap.push(HeapEntry { priority, doc });
        true
    }

    pub fn remove(&mut self, doc: DocId) -> Option<f64> {
        self.priority.remove(&doc)
    }

    pub fn pop(&mut self) -> Option<(DocId, f64)> {
        while let Some(top) = self.heap.pop() {
            if let Entry::Occupied(e) = self.priority.entry(top.doc) {
                if e.get().to_bits() == top.priority.to_bits() {
                    e.remove();
                    return Some((top.doc, top.priority));
                }
            }
        }
        None
    }

    /// All entries in extraction order.
    pub fn ordered(&self) -> Vec<(DocId, f64)> {
        let mut all: Vec<(DocId, f64)> = self.priority.iter().map(|(&d, &p)| (d, p)).collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        all
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub source: Source,
    pub docs: Vec<DocId>,
}

/// Per-query loop state: the initial list, the scored pool and the frontier.
#[derive(Debug, Clone)]
pub struct RerankState<'r> {
    initial: &'r [ScoredDoc],
    cursor: usize,
    scored: HashMap<DocId, f64>,
    frontier: Frontier,
    next_source: Source,
}

impl<'r> RerankState<'r> {
    pub fn new(initial: &'r [ScoredDoc]) -> Self {
        Self {
            initial,
            cursor: 0,
            scored: HashMap::new(),
            frontier: Frontier::new(),
            next_source: Source::Initial,
        }
    }

    pub fn scored_count(&self) -> usize {
        self.scored.len()
    }

    pub fn score_of(&self, doc: DocId) -> Option<f64> {
        self.scored.get(&doc).copied()
    }

    pub fn frontier(&self) -> &Frontier {
        &self.frontier
    }

    pub fn frontier_mut(&mut self) -> &mut Frontier {
        &mut self.frontier
    }

    pub fn next_source(&self) -> Source {
        self.next_source
    }

    pub fn set_next_source(&mut self, source: Source) {
        self.next_source = source;
    }

    fn skip_scored_initial(&mut self) {
        while self.cursor < self.initial.len() && self.scored.contains_key(&self.initial[self.cursor].doc) {
            self.cursor += 1;
        }
    }

    fn take_initial(&mut self, limit: usize) -> Vec<DocId> {
        let mut docs = Vec::with_capacity(limit);
        while docs.len() < limit {
            self.skip_scored_initial();
            match self.initial.get(self.cursor) {
                Some(sd) => {
                    docs.push(sd.doc);
                    self.cursor += 1;
                }
                None => break,
            }
        }
        docs
    }

    fn take_frontier(&mut self, limit: usize) -> Vec<DocId> {
        let mut docs = Vec::with_capacity(limit);
        while docs.len() < limit {
            match self.frontier.pop() {
                Some((doc, _)) => docs.push(doc),
                None => break,
            }
        }
        docs
    }

    /// Pick the next batch: up to `batch_size` documents, never more than the
    /// remaining budget, from the scheduled source or, if that one is empty,
    /// from the other. An empty batch means the loop is done.
    ///
    /// Selected documents leave their source immediately.
    pub fn select_batch(&mut self, config: &GarConfig) -> Batch {
        let limit = config.batch_size.min(config.budget.saturating_sub(self.scored.len()));
        let planned = self.next_source;
        if limit == 0 {
            return Batch {
                source: planned,
                docs: Vec::new(),
            };
        }
        for source in [planned, planned.other()] {
            let docs = match source {
                Source::Initial => self.take_initial(limit),
                Source::Frontier => self.take_frontier(limit),
            };
            if !docs.is_empty() {
                return Batch { source, docs };
            }
        }
        Batch {
            source: planned,
            docs: Vec::new(),
        }
    }

    /// Add a scored batch to the pool, push the neighbours of each newly
    /// scored document into the frontier, and flip the scheduled source.
    pub fn record(
        &mut self,
        docs: &[DocId],
        scores: &[f64],
        graph: &CorpusGraph,
        k: usize,
    ) -> Result<(), GraphError> {
        debug_assert_eq!(docs.len(), scores.len());
        for (&doc, &score) in docs.iter().zip(scores) {
            self.scored.insert(doc, score);
            self.frontier.remove(doc);
        }
        for (&doc, &score) in docs.iter().zip(scores) {
            for &nb in graph.truncated(doc, k)? {
                if !self.scored.contains_key(&nb) {
                    self.frontier.raise(nb, score);
                }
            }
        }
        self.next_source = self.next_source.other();
        Ok(())
    }

    /// Scored documents by score (desc, id asc), then the unscored initial
    /// documents in retrieval order with scores stepping down by
    /// [`BACKFILL_EPSILON`] below the lowest reranker score.
    pub fn finish(&self) -> Ranking {
        let mut ranking: Ranking = self
            .scored
            .iter()
            .map(|(&doc, &score)| ScoredDoc::new(doc, score))
            .collect();
        ranking.sort_unstable_by(ranking_order);
        let floor = ranking.last().map(|sd| sd.score);
        let mut offset = 0.0;
        for sd in self.initial {
            if self.scored.contains_key(&sd.doc) {
                continue;
            }
            let score = match floor {
                Some(floor) => {
                    offset += 1.0;
                    floor - offset * BACKFILL_EPSILON
                }
                None => sd.score,
            };
            ranking.push(ScoredDoc::new(sd.doc, score));
        }
        ranking
    }
}

/// Wall-clock and scheduling counters for one adaptive run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RerankTrace {
    pub batches: Vec<(Source, usize)>,
    pub scorer_time: Duration,
    pub total_time: Duration,
}

impl RerankTrace {
    pub fn scored(&self) -> usize {
        self.batches.iter().map(|b| b.1).sum()
    }

    pub fn from_source(&self, source: Source) -> usize {
        self.batches.iter().filter(|b| b.0 == source).map(|b| b.1).sum()
    }
}

fn check_initial(initial: &[ScoredDoc], corpus: &CorpusHandle) -> Result<(), GarError> {
    let mut seen = HashSet::with_capacity(initial.len());
    for sd in initial {
        if sd.doc.index() >= corpus.len() {
            return Err(GarError::InvalidInitial(format!("document {} outside the corpus", sd.doc)));
        }
        if !seen.insert(sd.doc) {
            return Err(GarError::InvalidInitial(format!("document {} listed twice", sd.doc)));
        }
    }
    Ok(())
}

fn score_docs(
    query: &Query,
    docs: &[DocId],
    corpus: &CorpusHandle,
    scorer: &dyn Scorer,
) -> Result<Vec<f64>, GarError> {
    let batch = docs
        .iter()
        .map(|&d| {
            let doc = corpus.document(d);
            BatchDoc {
                external_id: &doc.external_id,
                text: &doc.text,
            }
        })
        .collect();
    let request = ScoreBatchRequest::new(query, batch)?;
    let scores = scorer.score_batch(&request)?;
    if scores.len() != docs.len() {
        return Err(GarError::BadScores(format!(
            "expected {} scores, got {}",
            docs.len(),
            scores.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(GarError::BadScores(format!("non-finite score {bad}")));
    }
    Ok(scores)
}

/// Adaptive reranking of `initial` (retrieval order) over the corpus graph.
pub fn gar_rerank(
    query: &Query,
    initial: &[ScoredDoc],
    graph: &CorpusGraph,
    corpus: &CorpusHandle,
    scorer: &dyn Scorer,
    config: &GarConfig,
) -> Result<Ranking, GarError> {
    gar_rerank_traced(query, initial, graph, corpus, scorer, config).map(|(ranking, _)| ranking)
}

pub fn gar_rerank_traced(
    query: &Query,
    initial: &[ScoredDoc],
    graph: &CorpusGraph,
    corpus: &CorpusHandle,
    scorer: &dyn Scorer,
    config: &GarConfig,
) -> Result<(Ranking, RerankTrace), GarError> {
    let started = Instant::now();
    config.validate()?;
    if graph.num_docs() != corpus.len() {
        return Err(GarError::GraphMismatch {
            graph: graph.num_docs(),
            corpus: corpus.len(),
        });
    }
    check_initial(initial, corpus)?;
    let k = config.neighbors.min(graph.kmax());

    let mut trace = RerankTrace::default();
    let mut state = RerankState::new(initial);
    loop {
        let batch = state.select_batch(config);
        if batch.docs.is_empty() {
            break;
        }
        let scoring = Instant::now();
        let scores = score_docs(query, &batch.docs, corpus, scorer)?;
        trace.scorer_time += scoring.elapsed();
        trace.batches.push((batch.source, batch.docs.len()));
        state.record(&batch.docs, &scores, graph, k)?;
    }
    let ranking = state.finish();
    trace.total_time = started.elapsed();
    Ok((ranking, trace))
}

/// Score the first `budget` documents of `initial` in batches of
/// `batch_size` and sort by score; anything past the budget is backfilled.
pub fn standard_rerank(
    query: &Query,
    initial: &[ScoredDoc],
    corpus: &CorpusHandle,
    scorer: &dyn Scorer,
    config: &GarConfig,
) -> Result<Ranking, GarError> {
    config.validate()?;
    check_initial(initial, corpus)?;
    let mut state = RerankState::new(initial);
    let to_score: Vec<DocId> = initial.iter().take(config.budget).map(|sd| sd.doc).collect();
    for chunk in to_score.chunks(config.batch_size) {
        let scores = score_docs(query, chunk, corpus, scorer)?;
        for (&doc, score) in chunk.iter().zip(scores) {
            state.scored.insert(doc, score);
        }
    }
    Ok(state.finish())
}
