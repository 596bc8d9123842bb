//! Synthetic collections with planted cluster structure.
//!
//! Every query owns a block of query tokens and `clusters_per_query`
//! clusters, each with its own block of cluster tokens. All documents of a
//! cluster draw heavily from the cluster block, so their BM25 similarity to
//! one another dwarfs anything else and the corpus graph links cluster-mates.
//! Only *retrievable* documents carry query tokens; *hidden* documents carry
//! none and are therefore invisible to first-stage BM25, but stay one hop
//! away from a retrievable cluster-mate in the graph.
//!
//! Relevant documents fill clusters in order (at most `docs_per_cluster - 1`
//! per cluster), and the last `round(frac_relevant_hidden * relevant)` of
//! them are hidden. A cluster without a retrievable relevant document gets
//! one non-relevant retrievable anchor; every other non-relevant document is
//! hidden. Document order is shuffled so internal ids carry no structure.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{CorpusHandle, DocId, Document, Query};
use crate::eval::Qrels;
use crate::graph::{build_graph, CorpusGraph, GraphError, DEFAULT_KMAX};
use crate::index::{build_index, Bm25Params, InvertedIndex};

/// Distinct tokens in each cluster block.
pub const CLUSTER_VOCAB: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
    #[error("reachability certificate failed: {0}")]
    Certificate(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_queries: usize,
    pub clusters_per_query: usize,
    pub docs_per_cluster: usize,
    pub relevant_per_query: usize,
    pub frac_relevant_hidden: f64,
    /// Size of the background vocabulary shared by the whole corpus.
    pub vocab_size: usize,
    /// Tokens per document.
    pub doc_len: usize,
    /// Distinct tokens in each query.
    pub query_terms: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_queries: 50,
            clusters_per_query: 4,
            docs_per_cluster: 20,
            relevant_per_query: 6,
            frac_relevant_hidden: 0.5,
            vocab_size: 500,
            doc_len: 40,
            query_terms: 4,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        for (name, v) in [
            ("num_queries", self.num_queries),
            ("clusters_per_query", self.clusters_per_query),
            ("docs_per_cluster", self.docs_per_cluster),
            ("relevant_per_query", self.relevant_per_query),
            ("vocab_size", self.vocab_size),
            ("query_terms", self.query_terms),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if !(0.0..=1.0).contains(&self.frac_relevant_hidden) {
            return bad(format!("frac_relevant_hidden must lie in [0, 1], got {}", self.frac_relevant_hidden));
        }
        if self.docs_per_cluster < 2 {
            return bad("docs_per_cluster must be at least 2".into());
        }
        let capacity = self.clusters_per_query * (self.docs_per_cluster - 1);
        if self.relevant_per_query > capacity {
            return bad(format!(
                "relevant_per_query {} exceeds {} (clusters_per_query x (docs_per_cluster - 1))",
                self.relevant_per_query, capacity
            ));
        }
        if self.doc_len < 2 * self.query_terms {
            return bad(format!("doc_len must be at least 2 x query_terms = {}", 2 * self.query_terms));
        }
        let total = self.num_queries * self.clusters_per_query * self.docs_per_cluster;
        if total >= u32::MAX as usize {
            return bad(format!("{total} documents is too many"));
        }
        Ok(())
    }

    pub fn hidden_per_query(&self) -> usize {
        (self.frac_relevant_hidden * self.relevant_per_query as f64).round() as usize
    }

    /// Apply `key=value` pairs separated by commas or newlines. Blank lines
    /// and `#` comments are ignored.
    pub fn apply_overrides(&mut self, text: &str) -> Result<(), SynthError> {
        for item in text.split([',', '\n']) {
            let item = item.split('#').next().unwrap_or("").trim();
            if item.is_empty() {
                continue;
            }
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| SynthError::InvalidSpec(format!("expected key=value, got {item:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            fn num<T: FromStr>(key: &str, value: &str) -> Result<T, SynthError> {
                value
                    .parse()
                    .map_err(|_| SynthError::InvalidSpec(format!("bad value {value:?} for {key}")))
            }
            match key {
                "num_queries" => self.num_queries = num(key, value)?,
                "clusters_per_query" => self.clusters_per_query = num(key, value)?,
                "docs_per_cluster" => self.docs_per_cluster = num(key, value)?,
                "relevant_per_query" => self.relevant_per_query = num(key, value)?,
                "frac_relevant_hidden" => self.frac_relevant_hidden = num(key, value)?,
                "vocab_size" => self.vocab_size = num(key, value)?,
                "doc_len" => self.doc_len = num(key, value)?,
                "query_terms" => self.query_terms = num(key, value)?,
                "seed" => self.seed = num(key, value)?,
                other => return Err(SynthError::InvalidSpec(format!("unknown key {other:?}"))),
            }
        }
        Ok(())
    }
}

impl FromStr for SynthSpec {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut spec = SynthSpec::default();
        spec.apply_overrides(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Planted structure of one document. Test-only knowledge; the engine never
/// sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DocTruth {
    pub query: usize,
    pub cluster: usize,
    pub relevant: bool,
    pub hidden: bool,
}

#[derive(Debug, Clone)]
pub struct SynthInstance {
    pub spec: SynthSpec,
    pub corpus: CorpusHandle,
    pub queries: Vec<Query>,
    pub qrels: Qrels,
    /// Indexed by internal id.
    pub truth: Vec<DocTruth>,
    pub index: InvertedIndex,
    pub graph: CorpusGraph,
}

struct Planned {
    truth: DocTruth,
    grade: u32,
    text: String,
}

fn query_token(q: usize, j: usize) -> String {
    format!("q{q}w{j}")
}

fn cluster_token(q: usize, c: usize, j: usize) -> String {
    format!("q{q}c{c}w{j}")
}

fn doc_text(
    rng: &mut ChaCha8Rng,
    spec: &SynthSpec,
    truth: &DocTruth,
) -> String {
    let mut tokens = Vec::with_capacity(spec.doc_len);
    if !truth.hidden {
        let mut picked: Vec<usize> = (0..spec.query_terms).filter(|_| rng.random_bool(0.5)).collect();
        if picked.is_empty() {
            picked.push(rng.random_range(0..spec.query_terms));
        }
        tokens.extend(picked.into_iter().map(|j| query_token(truth.query, j)));
    }
    // The first cluster token appears in every cluster document, so any two
    // cluster-mates have positive BM25 similarity.
    tokens.push(cluster_token(truth.query, truth.cluster, 0));
    for _ in 1..spec.doc_len / 2 {
        let j = rng.random_range(0..CLUSTER_VOCAB);
        tokens.push(cluster_token(truth.query, truth.cluster, j));
    }
    while tokens.len() < spec.doc_len {
        tokens.push(format!("bg{}", rng.random_range(0..spec.vocab_size)));
    }
    tokens.shuffle(rng);
    tokens.join(" ")
}

pub fn generate(spec: &SynthSpec) -> Result<SynthInstance, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let per_cluster_cap = spec.docs_per_cluster - 1;
    let hidden = spec.hidden_per_query();
    let visible = spec.relevant_per_query - hidden;

    let mut planned = Vec::with_capacity(spec.num_queries * spec.clusters_per_query * spec.docs_per_cluster);
    for q in 0..spec.num_queries {
        let mut relevant_left = spec.relevant_per_query;
        let mut relevant_seen = 0;
        for c in 0..spec.clusters_per_query {
            let relevant_here = relevant_left.min(per_cluster_cap);
            relevant_left -= relevant_here;
            let mut has_retrievable = false;
            let mut roles = Vec::with_capacity(spec.docs_per_cluster);
            for _ in 0..relevant_here {
                let is_hidden = relevant_seen >= visible;
                relevant_seen += 1;
                has_retrievable |= !is_hidden;
                roles.push((true, is_hidden));
            }
            for slot in relevant_here..spec.docs_per_cluster {
                let anchor = !has_retrievable && slot == relevant_here;
                roles.push((false, !anchor));
            }
            for (relevant, hidden) in roles {
                let truth = DocTruth {
                    query: q,
                    cluster: c,
                    relevant,
                    hidden,
                };
                let grade = if relevant { rng.random_range(1..=2) } else { 0 };
                let text = doc_text(&mut rng, spec, &truth);
                planned.push(Planned { truth, grade, text });
            }
        }
    }
    planned.shuffle(&mut rng);

    let width = planned.len().saturating_sub(1).to_string().len();
    let qwidth = spec.num_queries.saturating_sub(1).to_string().len();
    let query_id = |q: usize| format!("q{q:0qwidth$}");

    let mut qrels = Qrels::new();
    let mut docs = Vec::with_capacity(planned.len());
    let mut truth = Vec::with_capacity(planned.len());
    for (i, p) in planned.into_iter().enumerate() {
        let id = format!("d{i:0width$}");
        if p.truth.relevant {
            qrels.insert(query_id(p.truth.query), id.clone(), p.grade);
        }
        docs.push(Document::new(id, p.text));
        truth.push(p.truth);
    }
    let corpus = CorpusHandle::from_documents(docs).expect("generated ids are unique");
    let queries = (0..spec.num_queries)
        .map(|q| {
            let text: Vec<String> = (0..spec.query_terms).map(|j| query_token(q, j)).collect();
            Query::new(query_id(q), text.join(" "))
        })
        .collect();

    let index = build_index(&corpus);
    let graph = build_graph(&corpus, &index, &Bm25Params::default(), DEFAULT_KMAX)?;
    let instance = SynthInstance {
        spec: spec.clone(),
        corpus,
        queries,
        qrels,
        truth,
        index,
        graph,
    };
    instance.check_certificate()?;
    Ok(instance)
}

impl SynthInstance {
    /// Hidden documents are never retrieved by BM25, and every hidden
    /// relevant document is a stored graph neighbour of a retrievable
    /// document from its own cluster.
    pub fn check_certificate(&self) -> Result<(), SynthError> {
        let params = Bm25Params::default();
        for query in &self.queries {
            for hit in self.index.retrieve_topk(&params, query, self.corpus.len()) {
                if self.truth[hit.doc.index()].hidden {
                    return Err(SynthError::Certificate(format!(
                        "hidden document {} is retrievable for {}",
                        self.corpus.external_id(hit.doc),
                        query.query_id
                    )));
                }
            }
        }
        for (h, t) in self.truth.iter().enumerate() {
            if !(t.relevant && t.hidden) {
                continue;
            }
            let target = DocId(h as u32);
            let linked = self.truth.iter().enumerate().any(|(r, rt)| {
                !rt.hidden
                    && rt.query == t.query
                    && rt.cluster == t.cluster
                    && self
                        .graph
                        .adjacency(DocId(r as u32))
                        .is_ok_and(|adj| adj.contains(&target))
            });
            if !linked {
                return Err(SynthError::Certificate(format!(
                    "hidden relevant document {} has no edge from a retrievable cluster-mate",
                    self.corpus.external_id(target)
                )));
            }
        }
        Ok(())
    }

    pub fn query_index(&self, query_id: &str) -> Option<usize> {
        self.queries.iter().position(|q| q.query_id == query_id)
    }

    /// Write `corpus.jsonl`, `queries.tsv`, `qrels.txt` and `truth.tsv`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<(), SynthError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;

        #[derive(Serialize)]
        struct Line<'a> {
            doc_id: &'a str,
            text: &'a str,
        }
        let mut out = BufWriter::new(fs::File::create(dir.join("corpus.jsonl"))?);
        for d in self.corpus.documents() {
            serde_json::to_writer(&mut out, &Line { doc_id: &d.external_id, text: &d.text }).map_err(io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;

        let mut out = BufWriter::new(fs::File::create(dir.join("queries.tsv"))?);
        for q in &self.queries {
            writeln!(out, "{}\t{}", q.query_id, q.text)?;
        }
        out.flush()?;

        let mut out = BufWriter::new(fs::File::create(dir.join("qrels.txt"))?);
        self.qrels.write(&mut out)?;
        out.flush()?;

        let mut out = BufWriter::new(fs::File::create(dir.join("truth.tsv"))?);
        writeln!(out, "doc_id\tquery_id\tcluster\trelevant\thidden")?;
        for (i, t) in self.truth.iter().enumerate() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                self.corpus.external_id(DocId(i as u32)),
                self.queries[t.query].query_id,
                t.cluster,
                u8::from(t.relevant),
                u8::from(t.hidden)
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest, Sha256};

    fn small(seed: u64) -> SynthSpec {
        SynthSpec {
            num_queries: 5,
            clusters_per_query: 3,
            docs_per_cluster: 8,
            relevant_per_query: 4,
            seed,
            ..SynthSpec::default()
        }
    }

    fn fingerprint(inst: &SynthInstance) -> [u8; 32] {
        let mut h = Sha256::new();
        for d in inst.corpus.documents() {
            h.update(d.external_id.as_bytes());
            h.update(b"\t");
            h.update(d.text.as_bytes());
            h.update(b"\n");
        }
        h.finalize().into()
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate(&small(7)).unwrap();
        let b = generate(&small(7)).unwrap();
        assert_eq!(a.corpus.documents(), b.corpus.documents());
        assert_eq!(a.qrels, b.qrels);
        assert_eq!(a.graph, b.graph);
    }

    #[test]
    fn distinct_seeds_distinct_corpora() {
        let prints: std::collections::HashSet<[u8; 32]> =
            (0..10).map(|s| fingerprint(&generate(&small(s)).unwrap())).collect();
        assert_eq!(prints.len(), 10);
    }

    #[test]
    fn role_counts_follow_the_spec() {
        for frac in [0.0, 0.5, 1.0] {
            let spec = SynthSpec { frac_relevant_hidden: frac, ..small(1) };
            let inst = generate(&spec).unwrap();
            assert_eq!(inst.corpus.len(), 5 * 3 * 8);
            for q in 0..spec.num_queries {
                let mine: Vec<&DocTruth> = inst.truth.iter().filter(|t| t.query == q).collect();
                let rel = mine.iter().filter(|t| t.relevant).count();
                let hidden_rel = mine.iter().filter(|t| t.relevant && t.hidden).count();
                assert_eq!(rel, 4);
                assert_eq!(hidden_rel, spec.hidden_per_query());
                for c in 0..spec.clusters_per_query {
                    assert!(mine.iter().any(|t| t.cluster == c && !t.hidden), "cluster {c} lacks a retrievable doc");
                }
            }
            assert_eq!(inst.qrels.num_judgments(), 5 * 4);
        }
    }

    #[test]
    fn relevant_docs_span_clusters_when_needed() {
        let spec = SynthSpec {
            num_queries: 2,
            clusters_per_query: 3,
            docs_per_cluster: 4,
            relevant_per_query: 7,
            frac_relevant_hidden: 1.0,
            ..SynthSpec::default()
        };
        let inst = generate(&spec).unwrap();
        let in_cluster = |c| inst.truth.iter().filter(|t| t.query == 0 && t.cluster == c && t.relevant).count();
        assert_eq!((in_cluster(0), in_cluster(1), in_cluster(2)), (3, 3, 1));
    }

    #[test]
    fn invalid_specs_rejected() {
        let cases = [
            SynthSpec { num_queries: 0, ..SynthSpec::default() },
            SynthSpec { frac_relevant_hidden: 1.5, ..SynthSpec::default() },
            SynthSpec { docs_per_cluster: 1, ..SynthSpec::default() },
            SynthSpec { relevant_per_query: 100, ..SynthSpec::default() },
            SynthSpec { doc_len: 3, ..SynthSpec::default() },
        ];
        for spec in cases {
            assert!(matches!(generate(&spec), Err(SynthError::InvalidSpec(_))), "{spec:?}");
        }
    }

    #[test]
    fn spec_overrides() {
        let spec: SynthSpec = "num_queries=3, seed=9\nfrac_relevant_hidden=1 # all hidden".parse().unwrap();
        assert_eq!(spec.num_queries, 3);
        assert_eq!(spec.seed, 9);
        assert_eq!(spec.frac_relevant_hidden, 1.0);
        assert!("bogus=1".parse::<SynthSpec>().is_err());
        assert!("seed=abc".parse::<SynthSpec>().is_err());
        assert!("seed".parse::<SynthSpec>().is_err());
    }

    #[test]
    fn writes_engine_formats() {
        let inst = generate(&small(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        inst.write_to_dir(dir.path()).unwrap();
        let corpus = crate::corpus::load_corpus(dir.path().join("corpus.jsonl"), crate::corpus::CorpusFormat::Jsonl).unwrap();
        assert_eq!(corpus.documents(), inst.corpus.documents());
        let queries = crate::corpus::load_queries(dir.path().join("queries.tsv")).unwrap();
        assert_eq!(queries, inst.queries);
        let qrels = crate::eval::load_qrels(dir.path().join("qrels.txt")).unwrap();
        assert_eq!(qrels, inst.qrels);
        let truth = fs::read_to_string(dir.path().join("truth.tsv")).unwrap();
        assert_eq!(truth.lines().count(), inst.corpus.len() + 1);
    }
}
