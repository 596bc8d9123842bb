//! `gar`: BM25 retrieval, corpus graphs and budgeted reranking from the
//! command line.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for runtime failures.
//! Every failure prints one `error:` line on stderr and leaves no partial
//! output behind.

mod pipeline;

use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gar_core::corpus::CorpusFormat;
use gar_core::eval::{evaluate, load_run, ranking_to_entries, write_run_to, Metric, RunEntry};
use gar_core::graph::{build_graph, id_map_path, DEFAULT_KMAX};
use gar_core::index::{build_index, Bm25Params};
use gar_core::scorer::ScorerSpec;
use gar_core::synth::{generate, SynthSpec};
use gar_core::GarConfig;

use pipeline::{Mode, ScorerHolder, ScorerOptions};

/// A mistake in how the command was invoked, as opposed to a failure while
/// running it.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "gar", version, about = "BM25 retrieval with graph-based adaptive reranking")]
struct Cli {
    /// Worker threads for cross-query parallelism (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus and report index statistics.
    Index {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Also write the statistics as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Corpus graph operations.
    Graph {
        #[command(subcommand)]
        command: GraphCommand,
    },
    /// BM25 top-c retrieval for every query.
    Retrieve {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 100)]
        c: usize,
        #[command(flatten)]
        bm25: Bm25Args,
        #[arg(long, default_value = "bm25")]
        tag: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rerank a first-stage run under a scoring budget.
    Rerank {
        #[command(flatten)]
        rerank: RerankArgs,
        #[arg(long)]
        tag: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a run against qrels.
    ///
    /// The CSV has columns query_id,metric,value: one row per query and
    /// metric, then one row per metric with query_id `all` holding the mean.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        /// Comma-separated metrics; `recall@c` takes its cutoff from --c.
        #[arg(long, default_value = "ndcg@10,recall@c")]
        metrics: String,
        #[arg(long)]
        c: Option<usize>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rerank and evaluate once per value of one hyperparameter.
    ///
    /// The CSV has columns param,value,metric,score with one row per value
    /// and metric; score is the mean over the qrels queries.
    Sweep {
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values, e.g. 2,4,8,16,32.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[command(flatten)]
        rerank: RerankArgs,
        #[arg(long, default_value = "ndcg@10,recall@c")]
        metrics: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic collection.
    ///
    /// Writes corpus.jsonl, queries.tsv, qrels.txt, truth.tsv and the
    /// corpus graph (graph.bin plus graph.bin.ids).
    Synth {
        /// `key=value` pairs separated by commas, or a file of them.
        #[arg(long, default_value = "")]
        spec: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Build the BM25 corpus graph.
    Build {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value_t = DEFAULT_KMAX)]
        kmax: usize,
        #[command(flatten)]
        bm25: Bm25Args,
        /// Graph file; the id map goes to `<out>.ids`.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Corpus format; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<CorpusFormat>,
}

#[derive(Args, Clone, Copy)]
struct Bm25Args {
    #[arg(long, default_value_t = 0.9)]
    k1: f64,
    #[arg(long, default_value_t = 0.4)]
    b: f64,
}

impl Bm25Args {
    fn params(self) -> Result<Bm25Params> {
        Bm25Params::new(self.k1, self.b).map_err(|e| UsageError(e.to_string()).into())
    }
}

#[derive(Args)]
struct RerankArgs {
    #[arg(long, value_enum, default_value = "gar")]
    mode: Mode,
    /// First-stage run (R0).
    #[arg(long)]
    run: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    queries: PathBuf,
    /// Corpus graph; required for --mode gar.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// oracle, noisy:<sigma>, anticorrelated, lexical, stub or remote:<url>.
    #[arg(long)]
    scorer: ScorerSpec,
    #[arg(long)]
    qrels: Option<PathBuf>,
    /// Scoring budget per query.
    #[arg(long, default_value_t = 100)]
    c: usize,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    /// Neighbours expanded per scored document.
    #[arg(long, default_value_t = 16)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    bm25: Bm25Args,
    #[arg(long, default_value_t = 30_000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = 2)]
    retries: usize,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum SweepParam {
    Batch,
    K,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::Batch => "batch",
            SweepParam::K => "k",
        })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let line = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", line.trim());
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("starting the thread pool")?;
    }
    match cli.command {
        Command::Index { corpus, out } => cmd_index(corpus, out.as_deref()),
        Command::Graph {
            command: GraphCommand::Build { corpus, kmax, bm25, out },
        } => cmd_graph_build(corpus, kmax, bm25, &out),
        Command::Retrieve {
            corpus,
            queries,
            c,
            bm25,
            tag,
            out,
        } => cmd_retrieve(corpus, &queries, c, bm25, &tag, &out),
        Command::Rerank { rerank, tag, out } => cmd_rerank(rerank, tag, &out),
        Command::Eval {
            run,
            qrels,
            metrics,
            c,
            out,
        } => cmd_eval(&run, &qrels, &metrics, c, out.as_deref()),
        Command::Sweep {
            param,
            values,
            rerank,
            metrics,
            out,
        } => cmd_sweep(param, &values, rerank, &metrics, &out),
        Command::Synth { spec, out_dir } => cmd_synth(&spec, &out_dir),
    }
}

/// Write through a temporary file in the destination directory and rename
/// it into place only once `fill` succeeds.
fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    {
        let mut out = BufWriter::new(tmp.as_file_mut());
        fill(&mut out)?;
        out.flush()?;
    }
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn config(c: usize, batch: usize, k: usize) -> Result<GarConfig> {
    GarConfig::new(c, batch, k).map_err(|e| UsageError(e.to_string()).into())
}

fn metrics(list: &str, c: Option<usize>) -> Result<Vec<Metric>> {
    let metrics = Metric::parse_list(list, c).map_err(|e| UsageError(e.to_string()))?;
    if metrics.is_empty() {
        return Err(UsageError("no metrics given".into()).into());
    }
    Ok(metrics)
}

fn cmd_index(args: CorpusArgs, out: Option<&Path>) -> Result<()> {
    let corpus = pipeline::corpus(&args.corpus, args.format)?;
    let index = build_index(&corpus);
    let tokens: u64 = (0..corpus.len())
        .map(|i| index.doc_len(gar_core::DocId(i as u32)).unwrap_or(0) as u64)
        .sum();
    println!("documents\t{}", corpus.len());
    println!("vocabulary\t{}", index.vocab_size());
    println!("tokens\t{tokens}");
    println!("avgdl\t{}", index.avgdl());
    if let Some(path) = out {
        let stats = serde_json::json!({
            "corpus": args.corpus.display().to_string(),
            "documents": corpus.len(),
            "vocabulary": index.vocab_size(),
            "tokens": tokens,
            "avgdl": index.avgdl(),
        });
        write_atomic(path, |w| {
            serde_json::to_writer_pretty(&mut *w, &stats)?;
            writeln!(w)?;
            Ok(())
        })?;
    }
    Ok(())
}

fn cmd_graph_build(args: CorpusArgs, kmax: usize, bm25: Bm25Args, out: &Path) -> Result<()> {
    if kmax == 0 {
        return Err(UsageError("--kmax must be at least 1".into()).into());
    }
    let params = bm25.params()?;
    let corpus = pipeline::corpus(&args.corpus, args.format)?;
    let index = build_index(&corpus);
    let graph = build_graph(&corpus, &index, &params, kmax)?;
    let bytes = graph.to_bytes();
    write_atomic(out, |w| Ok(w.write_all(&bytes)?))?;
    write_atomic(&id_map_path(out), |w| {
        for d in corpus.documents() {
            writeln!(w, "{}", d.external_id)?;
        }
        Ok(())
    })?;
    log::info!("graph over {} documents with {} edges", graph.num_docs(), graph.num_edges());
    Ok(())
}

fn cmd_retrieve(args: CorpusArgs, queries: &Path, c: usize, bm25: Bm25Args, tag: &str, out: &Path) -> Result<()> {
    if c == 0 {
        return Err(UsageError("--c must be at least 1".into()).into());
    }
    let params = bm25.params()?;
    let corpus = pipeline::corpus(&args.corpus, args.format)?;
    let queries = pipeline::queries(queries)?;
    let index = build_index(&corpus);
    let entries: Vec<RunEntry> = pipeline::retrieve_all(&index, &params, &queries, c)
        .into_iter()
        .flat_map(|(qid, ranking)| ranking_to_entries(&qid, &ranking, &corpus, tag))
        .collect();
    write_atomic(out, |w| Ok(write_run_to(&entries, w)?))
}

struct Loaded {
    corpus: gar_core::CorpusHandle,
    jobs: Vec<pipeline::Job>,
    graph: Option<gar_core::CorpusGraph>,
    scorer_opts: ScorerOptions,
}

fn load_rerank(args: &RerankArgs) -> Result<Loaded> {
    config(args.c, args.batch, args.k)?;
    let params = args.bm25.params()?;
    if args.mode == Mode::Gar && args.graph.is_none() {
        return Err(UsageError("--mode gar needs --graph".into()).into());
    }
    if args.scorer.needs_qrels() && args.qrels.is_none() {
        return Err(UsageError(format!("scorer {} needs --qrels", args.scorer)).into());
    }
    let corpus = pipeline::corpus(&args.corpus.corpus, args.corpus.format)?;
    let queries = pipeline::queries(&args.queries)?;
    let jobs = pipeline::jobs(&args.run, &corpus, &queries)?;
    let graph = match (&args.graph, args.mode) {
        (Some(path), Mode::Gar) => Some(pipeline::graph(path, &corpus)?),
        _ => None,
    };
    let qrels = args.qrels.as_deref().map(pipeline::qrels).transpose()?.map(Arc::new);
    Ok(Loaded {
        corpus,
        jobs,
        graph,
        scorer_opts: ScorerOptions {
            spec: args.scorer.clone(),
            qrels,
            seed: args.seed,
            timeout: Duration::from_millis(args.timeout_ms),
            retries: args.retries,
            params,
        },
    })
}

fn cmd_rerank(args: RerankArgs, tag: Option<String>, out: &Path) -> Result<()> {
    let loaded = load_rerank(&args)?;
    let holder = ScorerHolder::new(&loaded.scorer_opts, &loaded.corpus);
    let scorer = holder.build(&loaded.scorer_opts, &loaded.corpus)?;
    let tag = tag.unwrap_or_else(|| args.mode.tag().to_owned());
    let entries = pipeline::rerank_all(
        &loaded.jobs,
        args.mode,
        loaded.graph.as_ref(),
        &loaded.corpus,
        scorer.as_ref(),
        &config(args.c, args.batch, args.k)?,
        &tag,
    )?;
    write_atomic(out, |w| Ok(write_run_to(&entries, w)?))
}

fn cmd_eval(run: &Path, qrels: &Path, list: &str, c: Option<usize>, out: Option<&Path>) -> Result<()> {
    let metrics = metrics(list, c)?;
    let entries = load_run(run).with_context(|| format!("loading run {}", run.display()))?;
    let qrels = pipeline::qrels(qrels)?;
    let report = evaluate(&entries, &qrels, &metrics);
    for q in &report.missing_from_run {
        log::warn!("query {q} has judgments but no run entries");
    }
    match out {
        Some(path) => write_atomic(path, |w| Ok(report.write_csv(w)?)),
        None => Ok(report.write_csv(io::stdout().lock())?),
    }
}

fn cmd_sweep(param: SweepParam, values: &[usize], args: RerankArgs, list: &str, out: &Path) -> Result<()> {
    let metrics = metrics(list, Some(args.c))?;
    let Some(qrels_path) = args.qrels.clone() else {
        return Err(UsageError("sweep needs --qrels for evaluation".into()).into());
    };
    let configs = values
        .iter()
        .map(|&v| match param {
            SweepParam::Batch => config(args.c, v, args.k),
            SweepParam::K => config(args.c, args.batch, v),
        })
        .collect::<Result<Vec<_>>>()?;
    let loaded = load_rerank(&args)?;
    let qrels = match &loaded.scorer_opts.qrels {
        Some(q) => Arc::clone(q),
        None => Arc::new(pipeline::qrels(&qrels_path)?),
    };
    let holder = ScorerHolder::new(&loaded.scorer_opts, &loaded.corpus);
    let scorer = holder.build(&loaded.scorer_opts, &loaded.corpus)?;

    let mut rows = Vec::with_capacity(values.len() * metrics.len());
    for (&value, config) in values.iter().zip(&configs) {
        let entries = pipeline::rerank_all(
            &loaded.jobs,
            args.mode,
            loaded.graph.as_ref(),
            &loaded.corpus,
            scorer.as_ref(),
            config,
            args.mode.tag(),
        )?;
        let report = evaluate(&entries, &qrels, &metrics);
        for (m, mean) in report.metrics.iter().zip(&report.means) {
            rows.push(format!("{param},{value},{m},{mean:.6}"));
        }
    }
    write_atomic(out, |w| {
        writeln!(w, "param,value,metric,score")?;
        for row in &rows {
            writeln!(w, "{row}")?;
        }
        Ok(())
    })
}

fn cmd_synth(spec: &str, out_dir: &Path) -> Result<()> {
    let text = if !spec.is_empty() && Path::new(spec).is_file() {
        fs::read_to_string(spec).with_context(|| format!("reading {spec}"))?
    } else {
        spec.to_owned()
    };
    let mut parsed = SynthSpec::default();
    parsed
        .apply_overrides(&text)
        .and_then(|()| parsed.validate())
        .map_err(|e| UsageError(e.to_string()))?;
    let instance = generate(&parsed)?;

    // Stage everything next to the destination, then move it in.
    let parent = match out_dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    let staging = tempfile::tempdir_in(parent).with_context(|| format!("creating a directory in {}", parent.display()))?;
    instance.write_to_dir(staging.path())?;
    let graph_path = staging.path().join("graph.bin");
    fs::write(&graph_path, instance.graph.to_bytes())?;
    gar_core::graph::write_id_map(&instance.corpus, id_map_path(&graph_path))?;

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for name in ["corpus.jsonl", "queries.tsv", "qrels.txt", "truth.tsv", "graph.bin", "graph.bin.ids"] {
        fs::rename(staging.path().join(name), out_dir.join(name))
            .with_context(|| format!("moving {name} into {}", out_dir.display()))?;
    }
    Ok(())
}
