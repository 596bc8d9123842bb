//! Loading and reranking shared by `rerank` and `sweep`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use gar_core::corpus::{load_corpus, load_queries, CorpusFormat, CorpusHandle, Query};
use gar_core::eval::{group_run, load_qrels, load_run, ranking_to_entries, Qrels, RunEntry};
use gar_core::graph::{id_map_path, read_graph, read_id_map, CorpusGraph};
use gar_core::index::{build_index, Bm25Params, InvertedIndex, Ranking, ScoredDoc};
use gar_core::scorer::{
    make_anticorrelated, make_lexical, make_noisy, make_oracle, make_remote, Scorer, ScorerSpec, StubScorer,
};
use gar_core::{gar_rerank, standard_rerank, GarConfig};
use rayon::prelude::*;

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Standard,
    Gar,
}

impl Mode {
    pub fn tag(self) -> &'static str {
        match self {
            Mode::Standard => "standard",
            Mode::Gar => "gar",
        }
    }
}

pub fn corpus(path: &Path, format: Option<CorpusFormat>) -> Result<CorpusHandle> {
    let format = format.unwrap_or_else(|| CorpusFormat::from_path(path));
    load_corpus(path, format).with_context(|| format!("loading corpus {}", path.display()))
}

pub fn queries(path: &Path) -> Result<Vec<Query>> {
    load_queries(path).with_context(|| format!("loading queries {}", path.display()))
}

pub fn qrels(path: &Path) -> Result<Qrels> {
    load_qrels(path).with_context(|| format!("loading qrels {}", path.display()))
}

/// Reads a graph and checks it against the corpus. A zero-byte file stands
/// for a graph without edges.
pub fn graph(path: &Path, corpus: &CorpusHandle) -> Result<CorpusGraph> {
    let meta = fs::metadata(path).with_context(|| format!("reading graph {}", path.display()))?;
    if meta.len() == 0 {
        log::warn!("{} is empty; reranking without graph edges", path.display());
        return Ok(CorpusGraph::empty(corpus.len(), 1)?);
    }
    let graph = read_graph(path).with_context(|| format!("reading graph {}", path.display()))?;
    if graph.num_docs() != corpus.len() {
        bail!("graph {} has {} documents but the corpus has {}", path.display(), graph.num_docs(), corpus.len());
    }
    let ids_path = id_map_path(path);
    if ids_path.exists() {
        let ids = read_id_map(&ids_path).with_context(|| format!("reading {}", ids_path.display()))?;
        let same = ids.len() == corpus.len() && ids.iter().zip(corpus.documents()).all(|(a, d)| *a == d.external_id);
        if !same {
            bail!("{} does not match the corpus document order", ids_path.display());
        }
    }
    Ok(graph)
}

/// One query with its first-stage ranking.
pub struct Job {
    pub query: Query,
    pub initial: Ranking,
}

/// Pair every query of the run with its text, in query id order.
pub fn jobs(run_path: &Path, corpus: &CorpusHandle, queries: &[Query]) -> Result<Vec<Job>> {
    let run = load_run(run_path).with_context(|| format!("loading run {}", run_path.display()))?;
    let texts: HashMap<&str, &Query> = queries.iter().map(|q| (q.query_id.as_str(), q)).collect();
    group_run(&run)
        .into_iter()
        .map(|(qid, entries)| {
            let query = texts
                .get(qid)
                .with_context(|| format!("query {qid} from the run is not in the queries file"))?;
            let initial = entries
                .iter()
                .map(|e| {
                    let doc = corpus
                        .internal_id(&e.doc_id)
                        .with_context(|| format!("document {} in the run is not in the corpus", e.doc_id))?;
                    Ok(ScoredDoc::new(doc, e.score))
                })
                .collect::<Result<Ranking>>()?;
            Ok(Job {
                query: (*query).clone(),
                initial,
            })
        })
        .collect()
}

pub struct ScorerOptions {
    pub spec: ScorerSpec,
    pub qrels: Option<Arc<Qrels>>,
    pub seed: u64,
    pub timeout: Duration,
    pub retries: usize,
    pub params: Bm25Params,
}

/// Keeps the index alive for the lexical scorer.
pub struct ScorerHolder {
    index: Option<InvertedIndex>,
}

impl ScorerHolder {
    pub fn new(opts: &ScorerOptions, corpus: &CorpusHandle) -> Self {
        let index = matches!(opts.spec, ScorerSpec::Lexical).then(|| build_index(corpus));
        ScorerHolder { index }
    }

    pub fn build<'a>(&'a self, opts: &ScorerOptions, corpus: &'a CorpusHandle) -> Result<Box<dyn Scorer + 'a>> {
        let qrels = || {
            opts.qrels
                .clone()
                .ok_or_else(|| UsageError(format!("scorer {} needs --qrels", opts.spec)))
        };
        Ok(match &opts.spec {
            ScorerSpec::Oracle => Box::new(make_oracle(qrels()?)),
            ScorerSpec::Noisy { sigma } => Box::new(make_noisy(qrels()?, *sigma, opts.seed)),
            ScorerSpec::Anticorrelated => Box::new(make_anticorrelated(qrels()?, opts.seed)),
            ScorerSpec::Lexical => Box::new(make_lexical(
                self.index.as_ref().expect("index built for lexical scorer"),
                corpus,
                opts.params,
            )),
            ScorerSpec::Stub => Box::new(StubScorer),
            ScorerSpec::Remote { url } => {
                let remote = make_remote(url, opts.timeout, opts.retries);
                remote
                    .ping()
                    .with_context(|| format!("remote scorer at {} failed the ping", remote.url()))?;
                Box::new(remote)
            }
        })
    }
}

/// Rerank every job in parallel; entries come back in job order.
pub fn rerank_all(
    jobs: &[Job],
    mode: Mode,
    graph: Option<&CorpusGraph>,
    corpus: &CorpusHandle,
    scorer: &dyn Scorer,
    config: &GarConfig,
    tag: &str,
) -> Result<Vec<RunEntry>> {
    let per_query = jobs
        .par_iter()
        .map(|job| {
            let ranking = match (mode, graph) {
                (Mode::Gar, Some(g)) => gar_rerank(&job.query, &job.initial, g, corpus, scorer, config),
                (Mode::Gar, None) => unreachable!("gar mode always loads a graph"),
                (Mode::Standard, _) => standard_rerank(&job.query, &job.initial, corpus, scorer, config),
            }
            .with_context(|| format!("reranking query {}", job.query.query_id))?;
            Ok(ranking_to_entries(&job.query.query_id, &ranking, corpus, tag))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_query.into_iter().flatten().collect())
}

pub fn retrieve_all(index: &InvertedIndex, params: &Bm25Params, queries: &[Query], c: usize) -> Vec<(String, Ranking)> {
    let mut sorted: Vec<&Query> = queries.iter().collect();
    sorted.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    sorted
        .par_iter()
        .map(|q| (q.query_id.clone(), index.retrieve_topk(params, q, c)))
        .collect()
}

