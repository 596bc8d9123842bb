//! Pointwise scorers consumed by the reranking loop.
//!
//! A scorer maps a batch of `(query, document)` pairs to one finite real per
//! document. Every scorer here is deterministic: the same request always
//! yields the same scores, whatever order or batch the documents arrive in.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{tokenize, CorpusHandle, Query};
use crate::eval::Qrels;
use crate::index::{Bm25Params, InvertedIndex};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ScorerError {
    #[error("invalid score request: {0}")]
    InvalidRequest(String),
    #[error("remote scorer unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("remote scorer protocol error: {0}")]
    RemoteProtocol(String),
    #[error("scorer cannot resolve document {0:?}")]
    UnknownDocument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchDoc<'a> {
    pub external_id: &'a str,
    pub text: &'a str,
}

/// One query and an ordered, non-empty list of documents with unique ids.
#[derive(Debug, Clone)]
pub struct ScoreBatchRequest<'a> {
    query: &'a Query,
    docs: Vec<BatchDoc<'a>>,
}

impl<'a> ScoreBatchRequest<'a> {
    pub fn new(query: &'a Query, docs: Vec<BatchDoc<'a>>) -> Result<Self, ScorerError> {
        if docs.is_empty() {
            return Err(ScorerError::InvalidRequest("empty batch".into()));
        }
        let mut seen = HashSet::with_capacity(docs.len());
        for d in &docs {
            if !seen.insert(d.external_id) {
                return Err(ScorerError::InvalidRequest(format!("duplicate doc id {:?}", d.external_id)));
            }
        }
        Ok(Self { query, docs })
    }

    pub fn query(&self) -> &Query {
        self.query
    }

    pub fn docs(&self) -> &[BatchDoc<'a>] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

pub trait Scorer: Send + Sync {
    /// One score per document, in request order.
    fn score_batch(&self, request: &ScoreBatchRequest<'_>) -> Result<Vec<f64>, ScorerError>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn score_batch(&self, request: &ScoreBatchRequest<'_>) -> Result<Vec<f64>, ScorerError> {
        (**self).score_batch(request)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn score_batch(&self, request: &ScoreBatchRequest<'_>) -> Result<Vec<f64>, ScorerError> {
        (**self).score_batch(request)
    }
}

impl<S: Scorer + ?Sized> Scorer for Arc<S> {
    fn score_batch(&self, request: &ScoreBatchRequest<'_>) -> Result<Vec<f64>, ScorerError> {
        (**self).score_batch(request)
    }
}

fn sha256(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

/// Standard normal draw keyed on `(seed, query_id, doc_id)`.
pub fn keyed_normal(seed: u64, query_id: &str, doc_id: &str) -> f64 {
    let key = sha256(&[&seed.to_le_bytes(), query_id.as_bytes(), doc_id.as_bytes()]);
    let mut rng = ChaCha8Rng::from_seed(key);
    StandardNormal.sample(&mut rng)
}

/// Scores derived from qrels grades: `sign * grade + sigma * noise`.
///
/// Covers the oracle (`sign = 1, sigma = 0`), the noisy oracle and the
/// anticorrelated scorer.
#[derive(Debug, Clone)]
pub struct GradeScorer {
    qrels: Arc<Qrels>,
    sign: f64,
    sigma: f64,
    seed: u64,
}

pub const ANTICORRELATED_SIGMA: f64 = 0.1;

pub fn make_oracle(qrels: Arc<Qrels>) -> GradeScorer {
    GradeScorer {
        qrels,
        sign: 1.0,
        sigma: 0.0,
        seed: 0,
    }
}

/// Panics if `sigma` is negative or not finite.
pub fn make_noisy(qrels: Arc<Qrels>, sigma: f64, seed: u64) -> GradeScorer {
    assert!(sigma.is_finite() && sigma >= 0.0, "noise sigma must be finite and >= 0");
    GradeScorer {
        qrels,
        sign: 1.0,
        sigma,
        seed,
    }
}

pub fn make_anticorrelated(qrels: Arc<Qrels>, seed: u64) -> GradeScorer {
    GradeScorer {
        qrels,
        sign: -1.0,
        sigma: ANTICORRELATED_SIGMA,
        seed,
    }
}

impl GradeScorer {
    pub fn score_one(&self, query_id: &str, doc_id: &str) -> f64 {
        let base = self.sign * f64::from(self.qrels.grade(query_id, doc_id));
        if self.sigma == 0.0 {
            base
        } else {
            base + self.sigma * keyed_normal(self.seed, query_id, doc_id)
        }
    }
}

impl Scorer for GradeScorer {
    fn score_batch(&self, request: &ScoreBatchRequest<'_>) -> Result<Vec<f64>, ScorerError> {
        let q = &request.query().query_id;
        Ok(request.docs().iter().map(|d| self.score_one(q, d.external_id)).collect())
    }
}

/// BM25 of the query against each document, via the index.
#[derive(Debug, Clone, Copy)]
pub struct LexicalScorer<'a> {
    index: &'a InvertedIndex,
    corpus: &'a CorpusHandle,
    params: Bm25Params,
}

pub fn make_lexical<'a>(index: &'a InvertedIndex, corpus: &'a CorpusHandle, params: Bm25Params) -> LexicalScorer<'a> {
    LexicalScorer { index, corpus, params }
}

impl Scorer for LexicalScorer<'_> {
    fn score_batch(&self, request: &ScoreBatchRequest<'_>) -> Result<Vec<f64>, ScorerError> {
        let query = self.index.prepare(&tokenize(&request.query().text));
        request
            .docs()
            .iter()
            .map(|d| {
                let doc = self
                    .corpus
                    .internal_id(d.external_id)
                    .ok_or_else(|| ScorerError::UnknownDocument(d.external_id.to_owned()))?;
                self.index
                    .bm25_score_prepared(&self.params, &query, doc)
                    .map_err(|e| ScorerError::UnknownDocument(e.to_string()))
            })
            .collect()
    }
}

/// `sha256(doc_id)`'s first eight bytes, big-endian, scaled into `[0, 1)`.
pub fn stable_unit_hash(doc_id: &str) -> f64 {
    let digest: [u8; 32] = Sha256::digest(doc_id.as_bytes()).into();
    let word = u64::from_be_bytes(digest[..8].try_into().unwrap());
    word as f64 / 18_446_744_073_709_551_616.0
}

pub const STUB_TIEBREAK: f64 = 1e-6;

/// In-process twin of the sidecar's stub model: the number of distinct
/// tokens shared by query and document, plus `1e-6 * stable_unit_hash(doc_id)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubScorer;

impl StubScorer {
    pub fn score_one(query_text: &str, doc_id: &str, doc_text: &str) -> f64 {
        let query: HashSet<String> = tokenize(query_text).into_iter().collect();
        let doc: HashSet<String> = tokenize(doc_text).into_iter().collect();
        let shared = query.intersection(&doc).count();
        shared as f64 + STUB_TIEBREAK * stable_unit_hash(doc_id)
    }
}

impl Scorer for StubScorer {
    fn score_batch(&self, request: &ScoreBatchRequest<'_>) -> Result<Vec<f64>, ScorerError> {
        let q = &request.query().text;
        Ok(request
            .docs()
            .iter()
            .map(|d| StubScorer::score_one(q, d.external_id, d.text))
            .collect())
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    query_id: &'a str,
    query_text: &'a str,
    docs: Vec<WireDoc<'a>>,
}

#[derive(Serialize)]
struct WireDoc<'a> {
    doc_id: &'a str,
    text: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    scores: Vec<WireScore>,
}

#[derive(Deserialize)]
struct WireScore {
    doc_id: String,
    score: f64,
}

/// Client for the `POST {endpoint}/score` JSON protocol.
#[derive(Debug, Clone)]
pub struct RemoteScorer {
    url: String,
    agent: ureq::Agent,
    max_retries: usize,
}

pub fn make_remote(endpoint: &str, timeout: Duration, max_retries: usize) -> RemoteScorer {
    let agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into();
    RemoteScorer {
        url: format!("{}/score", endpoint.trim_end_matches('/')),
        agent,
        max_retries,
    }
}

impl RemoteScorer {
    pub fn url(&self) -> &str {
        &self.url
    }

    /// A one-document request, used to fail fast before a run starts.
    pub fn ping(&self) -> Result<(), ScorerError> {
        let query = Query::new("ping", "ping");
        let request = ScoreBatchRequest::new(&query, vec![BatchDoc { external_id: "ping", text: "ping" }])?;
        self.score_batch(&request).map(|_| ())
    }

    fn post(&self, body: &str) -> Result<String, String> {
        let mut response = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        if status != 200 {
            return Err(format!("HTTP status {status}"));
        }
        let mut text = String::new();
        response
            .body_mut()
            .as_reader()
            .read_to_string(&mut text)
            .map_err(|e| e.to_string())?;
        Ok(text)
    }
}

impl Scorer for RemoteScorer {
    fn score_batch(&self, request: &ScoreBatchRequest<'_>) -> Result<Vec<f64>, ScorerError> {
        let wire = WireRequest {
            query_id: &request.query().query_id,
            query_text: &request.query().text,
            docs: request
                .docs()
                .iter()
                .map(|d| WireDoc {
                    doc_id: d.external_id,
                    text: d.text,
                })
                .collect(),
        };
        let body = serde_json::to_string(&wire).map_err(|e| ScorerError::InvalidRequest(e.to_string()))?;

        let mut last_error = String::new();
        let mut text = None;
        for attempt in 0..=self.max_retries {
            match self.post(&body) {
                Ok(t) => {
                    text = Some(t);
                    break;
                }
                Err(e) => {
                    log::debug!("remote scorer attempt {} failed: {e}", attempt + 1);
                    last_error = e;
                }
            }
        }
        let text = text.ok_or_else(|| {
            ScorerError::RemoteUnavailable(format!(
                "{} after {} attempt(s): {last_error}",
                self.url,
                self.max_retries + 1
            ))
        })?;

        let response: WireResponse =
            serde_json::from_str(&text).map_err(|e| ScorerError::RemoteProtocol(format!("bad response body: {e}")))?;
        if response.scores.len() != request.len() {
            return Err(ScorerError::RemoteProtocol(format!(
                "expected {} scores, got {}",
                request.len(),
                response.scores.len()
            )));
        }
        let mut by_id = HashMap::with_capacity(response.scores.len());
        for s in response.scores {
            if !s.score.is_finite() {
                return Err(ScorerError::RemoteProtocol(format!("non-finite score for {:?}", s.doc_id)));
            }
            if by_id.insert(s.doc_id.clone(), s.score).is_some() {
                return Err(ScorerError::RemoteProtocol(format!("duplicate doc id {:?} in response", s.doc_id)));
            }
        }
        request
            .docs()
            .iter()
            .map(|d| {
                by_id
                    .get(d.external_id)
                    .copied()
                    .ok_or_else(|| ScorerError::RemoteProtocol(format!("response is missing doc id {:?}", d.external_id)))
            })
            .collect()
    }
}

/// Records every `(query_id, doc_id)` passed through to the inner scorer.
#[derive(Debug, Default)]
pub struct CountingScorer<S> {
    inner: S,
    log: Mutex<CallLog>,
}

#[derive(Debug, Default, Clone)]
pub struct CallLog {
    pub calls: usize,
    pub batch_sizes: Vec<usize>,
    pub scored: Vec<(String, String)>,
}

impl CallLog {
    pub fn docs_scored(&self) -> usize {
        self.scored.len()
    }

    pub fn duplicates(&self) -> usize {
        let unique: HashSet<&(String, String)> = self.scored.iter().collect();
        self.scored.len() - unique.len()
    }

    pub fn docs_for_query(&self, query_id: &str) -> usize {
        self.scored.iter().filter(|(q, _)| q == query_id).count()
    }
}

impl<S> CountingScorer<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            log: Mutex::new(CallLog::default()),
        }
    }

    pub fn snapshot(&self) -> CallLog {
        self.log.lock().unwrap().clone()
    }

    pub fn reset(&self) {
        *self.log.lock().unwrap() = CallLog::default();
    }
}

impl<S: Scorer> Scorer for CountingScorer<S> {
    fn score_batch(&self, request: &ScoreBatchRequest<'_>) -> Result<Vec<f64>, ScorerError> {
        {
            let mut log = self.log.lock().unwrap();
            log.calls += 1;
            log.batch_sizes.push(request.len());
            let q = &request.query().query_id;
            log.scored
                .extend(request.docs().iter().map(|d| (q.clone(), d.external_id.to_owned())));
        }
        self.inner.score_batch(request)
    }
}

/// Scorer selection as written on the command line:
/// `oracle`, `noisy:<sigma>`, `anticorrelated`, `lexical`, `stub`, `remote:<url>`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScorerSpec {
    Oracle,
    Noisy { sigma: f64 },
    Anticorrelated,
    Lexical,
    Stub,
    Remote { url: String },
}

impl ScorerSpec {
    pub fn needs_qrels(&self) -> bool {
        matches!(self, ScorerSpec::Oracle | ScorerSpec::Noisy { .. } | ScorerSpec::Anticorrelated)
    }
}

impl FromStr for ScorerSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        match (kind, arg) {
            ("oracle", None) => Ok(ScorerSpec::Oracle),
            ("anticorrelated", None) => Ok(ScorerSpec::Anticorrelated),
            ("lexical", None) => Ok(ScorerSpec::Lexical),
            ("stub", None) => Ok(ScorerSpec::Stub),
            ("noisy", Some(sigma)) => match sigma.parse::<f64>() {
                Ok(sigma) if sigma.is_finite() && sigma >= 0.0 => Ok(ScorerSpec::Noisy { sigma }),
                _ => Err(format!("noise sigma must be a finite number >= 0, got {sigma:?}")),
            },
            ("remote", Some(url)) if !url.is_empty() => Ok(ScorerSpec::Remote { url: url.to_owned() }),
            _ => Err(format!(
                "unknown scorer {s:?} (expected oracle, noisy:<sigma>, anticorrelated, lexical, stub or remote:<url>)"
            )),
        }
    }
}

impl fmt::Display for ScorerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScorerSpec::Oracle => f.write_str("oracle"),
            ScorerSpec::Noisy { sigma } => write!(f, "noisy:{sigma}"),
            ScorerSpec::Anticorrelated => f.write_str("anticorrelated"),
            ScorerSpec::Lexical => f.write_str("lexical"),
            ScorerSpec::Stub => f.write_str("stub"),
            ScorerSpec::Remote { url } => write!(f, "remote:{url}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::index::build_index;
    use rand::Rng;

    fn qrels() -> Arc<Qrels> {
        let mut q = Qrels::new();
        q.insert("q1", "a", 2);
        q.insert("q1", "b", 1);
        q.insert("q1", "c", 0);
        Arc::new(q)
    }

    fn batch<'a>(query: &'a Query, ids: &[&'a str]) -> ScoreBatchRequest<'a> {
        ScoreBatchRequest::new(
            query,
            ids.iter().map(|id| BatchDoc { external_id: id, text: "" }).collect(),
        )
        .unwrap()
    }

    #[test]
    fn request_validation() {
        let q = Query::new("q", "t");
        assert!(ScoreBatchRequest::new(&q, vec![]).is_err());
        let dup = vec![BatchDoc { external_id: "a", text: "" }; 2];
        assert!(ScoreBatchRequest::new(&q, dup).is_err());
    }

    #[test]
    fn oracle_returns_grades() {
        let q = Query::new("q1", "");
        let s = make_oracle(qrels());
        assert_eq!(s.score_batch(&batch(&q, &["a", "b", "c"])).unwrap(), vec![2.0, 1.0, 0.0]);
        assert_eq!(s.score_batch(&batch(&q, &["zz"])).unwrap(), vec![0.0]);
    }

    #[test]
    fn zero_noise_is_oracle() {
        let q = Query::new("q1", "");
        let ids = ["a", "b", "c", "zz"];
        let oracle = make_oracle(qrels()).score_batch(&batch(&q, &ids)).unwrap();
        for seed in [0, 1, 99] {
            let noisy = make_noisy(qrels(), 0.0, seed).score_batch(&batch(&q, &ids)).unwrap();
            assert_eq!(noisy, oracle);
        }
    }

    #[test]
    fn noise_is_keyed_not_ordered() {
        let q = Query::new("q1", "");
        let s = make_noisy(qrels(), 0.7, 42);
        let first = s.score_batch(&batch(&q, &["a", "b", "c"])).unwrap();
        assert_eq!(first, s.score_batch(&batch(&q, &["a", "b", "c"])).unwrap());
        let reversed = s.score_batch(&batch(&q, &["c", "b", "a"])).unwrap();
        assert_eq!(first, reversed.into_iter().rev().collect::<Vec<_>>());
        let single = s.score_batch(&batch(&q, &["b"])).unwrap();
        assert_eq!(single[0], first[1]);
        assert_ne!(first, make_noisy(qrels(), 0.7, 43).score_batch(&batch(&q, &["a", "b", "c"])).unwrap());
    }

    #[test]
    fn anticorrelated_prefers_irrelevant() {
        let mut qrels = Qrels::new();
        let n = 2000;
        for i in 0..n {
            qrels.insert("q", format!("r{i}"), 1);
        }
        let s = make_anticorrelated(Arc::new(qrels), 5);
        let (mut rel, mut irr) = (0.0, 0.0);
        for i in 0..n {
            rel += s.score_one("q", &format!("r{i}"));
            irr += s.score_one("q", &format!("x{i}"));
        }
        assert!(rel / (n as f64) < irr / (n as f64) - 0.9);
    }

    /// Average ranks, ties sharing the mean rank.
    fn ranks(values: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let mut out = vec![0.0; values.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                out[order[k]] = avg;
            }
            i = j + 1;
        }
        out
    }

    fn spearman(x: &[f64], y: &[f64]) -> f64 {
        let (rx, ry) = (ranks(x), ranks(y));
        let n = x.len() as f64;
        let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn huge_noise_decorrelates_from_grades() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut qrels = Qrels::new();
        let n = 20_000;
        let mut grades = Vec::with_capacity(n);
        for i in 0..n {
            let g: u32 = rng.random_range(0..4);
            qrels.insert("q", format!("d{i}"), g);
            grades.push(f64::from(g));
        }
        let qrels = Arc::new(qrels);

        let oracle = make_oracle(qrels.clone());
        let clean: Vec<f64> = (0..n).map(|i| oracle.score_one("q", &format!("d{i}"))).collect();
        assert!(spearman(&grades, &clean) > 0.999);

        let noisy = make_noisy(qrels, 1e6, 3);
        let scores: Vec<f64> = (0..n).map(|i| noisy.score_one("q", &format!("d{i}"))).collect();
        let rho = spearman(&grades, &scores);
        // Standard error of rho under independence is about 1/sqrt(n) = 0.007.
        assert!(rho.abs() < 0.03, "rho = {rho}");
    }

    #[test]
    fn lexical_delegates_to_the_index() {
        let docs = vec![
            Document::new("a", "cats and dogs"),
            Document::new("b", "dogs only"),
            Document::new("c", "birds"),
        ];
        let corpus = CorpusHandle::from_documents(docs).unwrap();
        let index = build_index(&corpus);
        let p = Bm25Params::default();
        let s = make_lexical(&index, &corpus, p);
        let q = Query::new("q", "Dogs, cats!");
        let req = ScoreBatchRequest::new(
            &q,
            corpus
                .documents()
                .iter()
                .map(|d| BatchDoc { external_id: &d.external_id, text: &d.text })
                .collect(),
        )
        .unwrap();
        let scores = s.score_batch(&req).unwrap();
        let tokens = tokenize(&q.text);
        for (i, score) in scores.iter().enumerate() {
            let expected = index.bm25_score(&p, &tokens, crate::corpus::DocId(i as u32)).unwrap();
            assert_eq!(*score, expected);
        }
        assert_eq!(scores[2], 0.0);

        let unknown = ScoreBatchRequest::new(&q, vec![BatchDoc { external_id: "nope", text: "" }]).unwrap();
        assert!(matches!(s.score_batch(&unknown), Err(ScorerError::UnknownDocument(_))));
    }

    #[test]
    fn stub_counts_shared_tokens() {
        let s = StubScorer::score_one("a b", "d1", "b c");
        assert!((1.0..1.0 + STUB_TIEBREAK).contains(&s), "{s}");
        assert_eq!(StubScorer::score_one("a b", "d1", "b c"), s);
        assert!(StubScorer::score_one("a", "d1", "z") < STUB_TIEBREAK);
        let h = stable_unit_hash("doc");
        assert!((0.0..1.0).contains(&h));
        assert_eq!(h, stable_unit_hash("doc"));
    }

    #[test]
    fn counting_wrapper_records_everything() {
        let q = Query::new("q1", "");
        let s = CountingScorer::new(make_oracle(qrels()));
        s.score_batch(&batch(&q, &["a", "b"])).unwrap();
        s.score_batch(&batch(&q, &["a"])).unwrap();
        let log = s.snapshot();
        assert_eq!(log.calls, 2);
        assert_eq!(log.docs_scored(), 3);
        assert_eq!(log.duplicates(), 1);
        assert_eq!(log.batch_sizes, vec![2, 1]);
    }

    #[test]
    fn spec_parsing() {
        assert_eq!("oracle".parse::<ScorerSpec>().unwrap(), ScorerSpec::Oracle);
        assert_eq!("noisy:0.5".parse::<ScorerSpec>().unwrap(), ScorerSpec::Noisy { sigma: 0.5 });
        assert_eq!(
            "remote:http://localhost:8080".parse::<ScorerSpec>().unwrap(),
            ScorerSpec::Remote { url: "http://localhost:8080".into() }
        );
        assert!("noisy:-1".parse::<ScorerSpec>().is_err());
        assert!("noisy".parse::<ScorerSpec>().is_err());
        assert!("oracle:3".parse::<ScorerSpec>().is_err());
        assert!("monot5".parse::<ScorerSpec>().is_err());
        for s in ["oracle", "noisy:0.25", "anticorrelated", "lexical", "stub", "remote:http://x"] {
            assert_eq!(s.parse::<ScorerSpec>().unwrap().to_string(), s);
        }
    }
}
