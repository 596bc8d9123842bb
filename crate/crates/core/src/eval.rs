//! Relevance judgments, TREC run files, nDCG / Recall and per-query reports.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::corpus::CorpusHandle;
use crate::index::ScoredDoc;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid metric {0:?}")]
    InvalidMetric(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn parse_err(line: usize, message: impl Into<String>) -> EvalError {
    EvalError::Parse {
        line,
        message: message.into(),
    }
}

/// Graded judgments for one query, keyed by external doc id.
pub type Judgments = HashMap<String, u32>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    by_query: BTreeMap<String, Judgments>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `false` (and leaves the grade untouched) if the pair is already judged.
    pub fn insert(&mut self, query_id: impl Into<String>, doc_id: impl Into<String>, grade: u32) -> bool {
        let judged = self.by_query.entry(query_id.into()).or_default();
        match judged.entry(doc_id.into()) {
            std::collections::hash_map::Entry::Occupied(_) => false,
            std::collections::hash_map::Entry::Vacant(v) => {
                v.insert(grade);
                true
            }
        }
    }

    /// Grade of an unjudged pair is 0.
    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.by_query
            .get(query_id)
            .and_then(|j| j.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn for_query(&self, query_id: &str) -> Option<&Judgments> {
        self.by_query.get(query_id)
    }

    /// Query ids in lexicographic order.
    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.by_query.keys().map(String::as_str)
    }

    pub fn num_queries(&self) -> usize {
        self.by_query.len()
    }

    pub fn num_judgments(&self) -> usize {
        self.by_query.values().map(HashMap::len).sum()
    }

    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (q, judged) in &self.by_query {
            let mut docs: Vec<_> = judged.iter().collect();
            docs.sort();
            for (d, g) in docs {
                writeln!(out, "{q} 0 {d} {g}")?;
            }
        }
        Ok(())
    }
}

/// Whitespace separated `query_id iteration doc_id grade`.
pub fn load_qrels(path: impl AsRef<Path>) -> Result<Qrels, EvalError> {
    read_qrels(BufReader::new(File::open(path)?))
}

pub fn read_qrels<R: BufRead>(reader: R) -> Result<Qrels, EvalError> {
    let mut qrels = Qrels::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [q, _iter, d, g] = fields[..] else {
            return Err(parse_err(line_no, format!("expected 4 fields, found {}", fields.len())));
        };
        let grade: u32 = g
            .parse()
            .map_err(|_| parse_err(line_no, format!("grade {g:?} is not a non-negative integer")))?;
        if !qrels.insert(q, d, grade) {
            return Err(parse_err(line_no, format!("duplicate judgment for ({q}, {d})")));
        }
    }
    Ok(qrels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub query_id: String,
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

/// Turn a ranking into 1-based run entries.
pub fn ranking_to_entries(query_id: &str, ranking: &[ScoredDoc], corpus: &CorpusHandle, tag: &str) -> Vec<RunEntry> {
    ranking
        .iter()
        .enumerate()
        .map(|(i, sd)| RunEntry {
            query_id: query_id.to_owned(),
            doc_id: corpus.external_id(sd.doc).to_owned(),
            rank: i + 1,
            score: sd.score,
            tag: tag.to_owned(),
        })
        .collect()
}

pub fn write_run_to<W: Write>(entries: &[RunEntry], mut out: W) -> io::Result<()> {
    for e in entries {
        writeln!(out, "{} Q0 {} {} {} {}", e.query_id, e.doc_id, e.rank, e.score, e.tag)?;
    }
    out.flush()
}

pub fn write_run(entries: &[RunEntry], path: impl AsRef<Path>) -> io::Result<()> {
    write_run_to(entries, BufWriter::new(File::create(path)?))
}

pub fn load_run(path: impl AsRef<Path>) -> Result<Vec<RunEntry>, EvalError> {
    read_run(BufReader::new(File::open(path)?))
}

/// Parse `query_id Q0 doc_id rank score tag`. Within each query, ranks must
/// run 1, 2, 3, ... in file order, scores must not increase and doc ids must
/// be unique.
pub fn read_run<R: BufRead>(reader: R) -> Result<Vec<RunEntry>, EvalError> {
    struct Last {
        rank: usize,
        score: f64,
        docs: HashSet<String>,
    }
    let mut last: HashMap<String, Last> = HashMap::new();
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [q, _q0, d, rank, score, tag] = fields[..] else {
            return Err(parse_err(line_no, format!("expected 6 fields, found {}", fields.len())));
        };
        let rank: usize = rank
            .parse()
            .map_err(|_| parse_err(line_no, format!("rank {rank:?} is not a positive integer")))?;
        let score: f64 = score
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| parse_err(line_no, format!("score {score:?} is not a finite number")))?;

        let state = last.entry(q.to_owned()).or_insert(Last {
            rank: 0,
            score: f64::INFINITY,
            docs: HashSet::new(),
        });
        if rank != state.rank + 1 {
            return Err(parse_err(line_no, format!("expected rank {} for query {q}, found {rank}", state.rank + 1)));
        }
        if score > state.score {
            return Err(parse_err(line_no, format!("score increases at rank {rank} of query {q}")));
        }
        if !state.docs.insert(d.to_owned()) {
            return Err(parse_err(line_no, format!("document {d} repeated in query {q}")));
        }
        state.rank = rank;
        state.score = score;
        entries.push(RunEntry {
            query_id: q.to_owned(),
            doc_id: d.to_owned(),
            rank,
            score,
            tag: tag.to_owned(),
        });
    }
    Ok(entries)
}

/// Group a run by query id (lexicographic), each list in rank order.
pub fn group_run(entries: &[RunEntry]) -> BTreeMap<&str, Vec<&RunEntry>> {
    let mut grouped: BTreeMap<&str, Vec<&RunEntry>> = BTreeMap::new();
    for e in entries {
        grouped.entry(e.query_id.as_str()).or_default().push(e);
    }
    for list in grouped.values_mut() {
        list.sort_by_key(|e| e.rank);
    }
    grouped
}

#[inline]
fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

#[inline]
fn discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

/// nDCG with exponential gain `2^grade - 1` and `log2(rank + 1)` discount.
/// The ideal ranking is built from every judged document of the query.
/// Returns 0 when no judged document has positive gain.
pub fn ndcg_at<S: AsRef<str>>(ranking: &[S], judgments: &Judgments, cutoff: usize) -> f64 {
    let mut ideal: Vec<u32> = judgments.values().copied().filter(|&g| g > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(cutoff)
        .enumerate()
        .map(|(i, &g)| gain(g) / discount(i + 1))
        .sum();
    if idcg == 0.0 {
        return 0.0;
    }
    let dcg: f64 = ranking
        .iter()
        .take(cutoff)
        .enumerate()
        .map(|(i, d)| {
            let g = judgments.get(d.as_ref()).copied().unwrap_or(0);
            gain(g) / discount(i + 1)
        })
        .sum();
    dcg / idcg
}

/// Fraction of relevant (grade > 0) documents in the top `cutoff`.
/// Returns 0 when the query has no relevant documents.
pub fn recall_at<S: AsRef<str>>(ranking: &[S], judgments: &Judgments, cutoff: usize) -> f64 {
    let relevant = judgments.values().filter(|&&g| g > 0).count();
    if relevant == 0 {
        return 0.0;
    }
    let found = ranking
        .iter()
        .take(cutoff)
        .filter(|d| judgments.get(d.as_ref()).is_some_and(|&g| g > 0))
        .count();
    found as f64 / relevant as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Ndcg(usize),
    Recall(usize),
}

impl Metric {
    /// Parse `ndcg@10`, `recall@100`, or `recall@c` with `c` substituted.
    pub fn parse(s: &str, c: Option<usize>) -> Result<Self, EvalError> {
        let invalid = || EvalError::InvalidMetric(s.to_owned());
        let (name, cutoff) = s.trim().split_once('@').ok_or_else(invalid)?;
        let cutoff = match cutoff {
            "c" => c.ok_or_else(invalid)?,
            n => n.parse().map_err(|_| invalid())?,
        };
        if cutoff == 0 {
            return Err(invalid());
        }
        match name.to_ascii_lowercase().as_str() {
            "ndcg" => Ok(Metric::Ndcg(cutoff)),
            "recall" => Ok(Metric::Recall(cutoff)),
            _ => Err(invalid()),
        }
    }

    pub fn parse_list(s: &str, c: Option<usize>) -> Result<Vec<Self>, EvalError> {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| Metric::parse(p, c))
            .collect()
    }

    pub fn compute<S: AsRef<str>>(&self, ranking: &[S], judgments: &Judgments) -> f64 {
        match *self {
            Metric::Ndcg(k) => ndcg_at(ranking, judgments, k),
            Metric::Recall(k) => recall_at(ranking, judgments, k),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Ndcg(k) => write!(f, "ndcg@{k}"),
            Metric::Recall(k) => write!(f, "recall@{k}"),
        }
    }
}

impl FromStr for Metric {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::parse(s, None)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub metrics: Vec<Metric>,
    /// Query id → one value per entry of `metrics`.
    pub per_query: BTreeMap<String, Vec<f64>>,
    /// Unweighted mean over the queries in the qrels.
    pub means: Vec<f64>,
    pub num_queries: usize,
    pub num_judged: usize,
    /// Queries in the qrels with no relevant document; their recall is 0.
    pub without_relevant: Vec<String>,
    /// Queries in the qrels missing from the run; they score 0.
    pub missing_from_run: Vec<String>,
}

impl EvalReport {
    pub fn mean(&self, metric: Metric) -> Option<f64> {
        self.metrics
            .iter()
            .position(|&m| m == metric)
            .map(|i| self.means[i])
    }

    /// `query_id,metric,value` rows per query, then one `all` row per metric.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["query_id", "metric", "value"])?;
        for (q, values) in &self.per_query {
            for (m, v) in self.metrics.iter().zip(values) {
                w.write_record([q.as_str(), &m.to_string(), &format!("{v:.6}")])?;
            }
        }
        for (m, v) in self.metrics.iter().zip(&self.means) {
            w.write_record(["all", &m.to_string(), &format!("{v:.6}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Score every query in `qrels` against the run. Queries that only appear
/// in the run are ignored.
pub fn evaluate(run: &[RunEntry], qrels: &Qrels, metrics: &[Metric]) -> EvalReport {
    let grouped = group_run(run);
    let mut per_query = BTreeMap::new();
    let mut sums = vec![0.0; metrics.len()];
    let mut without_relevant = Vec::new();
    let mut missing_from_run = Vec::new();

    for q in qrels.query_ids() {
        let judgments = qrels.for_query(q).expect("query id from qrels");
        if !judgments.values().any(|&g| g > 0) {
            without_relevant.push(q.to_owned());
        }
        let ranking: Vec<&str> = match grouped.get(q) {
            Some(list) => list.iter().map(|e| e.doc_id.as_str()).collect(),
            None => {
                missing_from_run.push(q.to_owned());
                Vec::new()
            }
        };
        let values: Vec<f64> = metrics.iter().map(|m| m.compute(&ranking, judgments)).collect();
        for (s, v) in sums.iter_mut().zip(&values) {
            *s += v;
        }
        per_query.insert(q.to_owned(), values);
    }

    let n = qrels.num_queries();
    let means = sums
        .into_iter()
        .map(|s| if n == 0 { 0.0 } else { s / n as f64 })
        .collect();
    EvalReport {
        metrics: metrics.to_vec(),
        per_query,
        means,
        num_queries: n,
        num_judged: qrels.num_judgments(),
        without_relevant,
        missing_from_run,
    }
}
