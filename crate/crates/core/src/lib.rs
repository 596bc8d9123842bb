//! Graph-based adaptive reranking over a BM25 first stage.
//!
//! The pipeline: load a corpus, index it, retrieve an initial pool per
//! query, then rerank under a fixed scoring budget either in retrieval
//! order ([`standard_rerank`]) or by walking a precomputed corpus graph
//! ([`gar_rerank`]).

pub mod corpus;
pub mod eval;
pub mod gar;
pub mod graph;
pub mod index;
pub mod scorer;
pub mod synth;

pub use corpus::{load_corpus, load_queries, tokenize, CorpusError, CorpusFormat, CorpusHandle, DocId, Document, Query};
pub use eval::{evaluate, load_qrels, load_run, EvalError, EvalReport, Metric, Qrels, RunEntry};
pub use gar::{gar_rerank, gar_rerank_traced, standard_rerank, GarConfig, GarError, RerankTrace, Source};
pub use graph::{build_graph, read_graph, write_graph, CorpusGraph, GraphError, DEFAULT_KMAX};
pub use index::{build_index, Bm25Params, IndexError, InvertedIndex, Ranking, ScoredDoc};
pub use scorer::{CountingScorer, ScoreBatchRequest, Scorer, ScorerError, ScorerSpec};
pub use synth::{generate, SynthError, SynthInstance, SynthSpec};
