//! Offline corpus graph: every document is linked to its top-`kmax` BM25
//! neighbours, found by issuing the document's own text as a query.
//!
//! On-disk layout, little-endian:
//!
//! ```text
//! offset 0   magic   b"GARG"
//! offset 4   version u32 = 1
//! offset 8   N       u32
//! offset 12  kmax    u32
//! offset 16  N records of kmax u32 slots; unused slots hold 0xFFFF_FFFF
//! ```
//!
//! The external id of internal id `i` lives on line `i` of a sibling text
//! file (see [`id_map_path`]).

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::corpus::{tokenize, CorpusHandle, DocId};
use crate::index::{Accumulator, Bm25Params, InvertedIndex};

pub const MAGIC: [u8; 4] = *b"GARG";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;
pub const EMPTY_SLOT: u32 = u32::MAX;
pub const DEFAULT_KMAX: usize = 128;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed graph file at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("document {doc} out of range (graph holds {len} documents)")]
    DocOutOfRange { doc: DocId, len: usize },
    #[error("invalid adjacency for document {doc}: {message}")]
    InvalidAdjacency { doc: DocId, message: String },
}

fn format_err(offset: usize, message: impl Into<String>) -> GraphError {
    GraphError::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

/// Per-document neighbour lists, stored compactly (CSR).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusGraph {
    kmax: usize,
    offsets: Vec<usize>,
    targets: Vec<DocId>,
}

impl CorpusGraph {
    /// Validates: no self loops, ids in range, no duplicates, `len <= kmax`.
    pub fn from_adjacency(kmax: usize, adjacency: Vec<Vec<DocId>>) -> Result<Self, GraphError> {
        let n = adjacency.len();
        if kmax == 0 || kmax > u32::MAX as usize || n >= u32::MAX as usize {
            return Err(GraphError::InvalidAdjacency {
                doc: DocId(0),
                message: format!("kmax must be in 1..=u32::MAX, got {kmax}"),
            });
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::with_capacity(adjacency.iter().map(Vec::len).sum());
        offsets.push(0);
        let mut seen = HashSet::new();
        for (d, list) in adjacency.into_iter().enumerate() {
            let doc = DocId(d as u32);
            let bad = |message: String| GraphError::InvalidAdjacency { doc, message };
            if list.len() > kmax {
                return Err(bad(format!("{} neighbours exceed kmax {kmax}", list.len())));
            }
            seen.clear();
            for &nb in &list {
                if nb == doc {
                    return Err(bad("self loop".into()));
                }
                if nb.index() >= n {
                    return Err(bad(format!("neighbour {nb} out of range")));
                }
                if !seen.insert(nb) {
                    return Err(bad(format!("duplicate neighbour {nb}")));
                }
            }
            targets.extend(list);
            offsets.push(targets.len());
        }
        Ok(Self {
            kmax,
            offsets,
            targets,
        })
    }

    /// A graph with `n` documents and no edges.
    pub fn empty(n: usize, kmax: usize) -> Result<Self, GraphError> {
        Self::from_adjacency(kmax, vec![Vec::new(); n])
    }

    pub fn num_docs(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    pub fn num_edges(&self) -> usize {
        self.targets.len()
    }

    /// The full stored list for `doc`, most similar first.
    pub fn adjacency(&self, doc: DocId) -> Result<&[DocId], GraphError> {
        let i = doc.index();
        if i >= self.num_docs() {
            return Err(GraphError::DocOutOfRange {
                doc,
                len: self.num_docs(),
            });
        }
        Ok(&self.targets[self.offsets[i]..self.offsets[i + 1]])
    }

    /// The first `min(k, stored)` neighbours of `doc`. Asking for more than
    /// `kmax` is allowed but logs a warning, since the graph cannot supply
    /// them.
    pub fn neighbors(&self, doc: DocId, k: usize) -> Result<&[DocId], GraphError> {
        if k > self.kmax {
            log::warn!(
                "requested {k} neighbours but the graph was built with kmax={}",
                self.kmax
            );
        }
        self.truncated(doc, k)
    }

    /// As [`neighbors`](Self::neighbors), without the warning.
    pub(crate) fn truncated(&self, doc: DocId, k: usize) -> Result<&[DocId], GraphError> {
        let list = self.adjacency(doc)?;
        Ok(&list[..k.min(list.len())])
    }

    pub fn to_adjacency(&self) -> Vec<Vec<DocId>> {
        (0..self.num_docs())
            .map(|i| self.targets[self.offsets[i]..self.offsets[i + 1]].to_vec())
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.num_docs();
        let mut out = Vec::with_capacity(HEADER_LEN + n * self.kmax * 4);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend_from_slice(&(self.kmax as u32).to_le_bytes());
        for i in 0..n {
            let list = &self.targets[self.offsets[i]..self.offsets[i + 1]];
            for nb in list {
                out.extend_from_slice(&nb.0.to_le_bytes());
            }
            for _ in list.len()..self.kmax {
                out.extend_from_slice(&EMPTY_SLOT.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GraphError> {
        let word = |offset: usize| -> Result<u32, GraphError> {
            bytes
                .get(offset..offset + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| format_err(offset, "file truncated"))
        };
        match bytes.get(..4) {
            Some(m) if m == MAGIC => {}
            Some(_) => return Err(format_err(0, "bad magic")),
            None => return Err(format_err(0, "file truncated")),
        }
        let version = word(4)?;
        if version != VERSION {
            return Err(format_err(4, format!("unsupported version {version}")));
        }
        let n = word(8)? as usize;
        let kmax = word(12)? as usize;
        if kmax == 0 {
            return Err(format_err(12, "kmax must be positive"));
        }
        let stride = kmax * 4;
        let expected = n
            .checked_mul(stride)
            .and_then(|body| body.checked_add(HEADER_LEN))
            .ok_or_else(|| format_err(8, "record table size overflows"))?;
        if bytes.len() < expected {
            let record = (bytes.len() - HEADER_LEN) / stride;
            return Err(format_err(
                HEADER_LEN + record * stride,
                format!("file truncated inside record {record} of {n}"),
            ));
        }
        if bytes.len() > expected {
            return Err(format_err(expected, "trailing bytes after last record"));
        }

        let mut adjacency = Vec::with_capacity(n);
        let mut seen = HashSet::new();
        for d in 0..n {
            let base = HEADER_LEN + d * stride;
            let mut list = Vec::new();
            let mut padding = false;
            seen.clear();
            for slot in 0..kmax {
                let offset = base + slot * 4;
                let v = word(offset)?;
                if v == EMPTY_SLOT {
                    padding = true;
                    continue;
                }
                if padding {
                    return Err(format_err(offset, "neighbour after an empty slot"));
                }
                if v as usize >= n || v as usize == d || !seen.insert(v) {
                    return Err(format_err(offset, format!("invalid neighbour id {v} for document {d}")));
                }
                list.push(DocId(v));
            }
            adjacency.push(list);
        }
        Self::from_adjacency(kmax, adjacency)
    }
}

/// Issue every document's text as a BM25 query and keep the top `kmax`
/// other documents. Documents are processed in parallel; the result does not
/// depend on the thread count.
pub fn build_graph(
    corpus: &CorpusHandle,
    index: &InvertedIndex,
    params: &Bm25Params,
    kmax: usize,
) -> Result<CorpusGraph, GraphError> {
    let n = corpus.len();
    let adjacency: Vec<Vec<DocId>> = (0..n as u32)
        .into_par_iter()
        .map_init(
            || Accumulator::new(n),
            |scratch, d| {
                let doc = DocId(d);
                let tokens = tokenize(&corpus.document(doc).text);
                let query = index.prepare(&tokens);
                index
                    .retrieve_prepared(params, &query, kmax, Some(doc), scratch)
                    .into_iter()
                    .map(|s| s.doc)
                    .collect()
            },
        )
        .collect();
    CorpusGraph::from_adjacency(kmax, adjacency)
}

pub fn write_graph(graph: &CorpusGraph, path: impl AsRef<Path>) -> Result<(), GraphError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(&graph.to_bytes())?;
    out.flush()?;
    Ok(())
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<CorpusGraph, GraphError> {
    CorpusGraph::from_bytes(&fs::read(path)?)
}

/// `<graph path>.ids`
pub fn id_map_path(graph_path: impl AsRef<Path>) -> PathBuf {
    let mut os = graph_path.as_ref().as_os_str().to_owned();
    os.push(".ids");
    PathBuf::from(os)
}

pub fn write_id_map(corpus: &CorpusHandle, path: impl AsRef<Path>) -> io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for doc in corpus.documents() {
        writeln!(out, "{}", doc.external_id)?;
    }
    out.flush()
}

pub fn read_id_map(path: impl AsRef<Path>) -> io::Result<Vec<String>> {
    BufReader::new(fs::File::open(path)?).lines().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::index::build_index;
    use proptest::prelude::*;

    fn corpus(texts: &[&str]) -> CorpusHandle {
        let docs = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document::new(format!("d{i}"), *t))
            .collect();
        CorpusHandle::from_documents(docs).unwrap()
    }

    fn ids(v: &[u32]) -> Vec<DocId> {
        v.iter().copied().map(DocId).collect()
    }

    const TOY: [&str; 6] = [
        "graph based reranking of documents",
        "bm25 retrieval of documents",
        "adaptive reranking with a corpus graph",
        "neural rerankers are expensive",
        "the corpus graph links similar documents",
        "bounded recall limits reranking",
    ];

    #[test]
    fn identical_pair_links_to_each_other() {
        let c = corpus(&["same words here", "same words here"]);
        let idx = build_index(&c);
        let g = build_graph(&c, &idx, &Bm25Params::default(), 4).unwrap();
        assert_eq!(g.adjacency(DocId(0)).unwrap(), &ids(&[1])[..]);
        assert_eq!(g.adjacency(DocId(1)).unwrap(), &ids(&[0])[..]);
    }

    #[test]
    fn single_document_has_no_neighbours() {
        let c = corpus(&["alone"]);
        let idx = build_index(&c);
        let g = build_graph(&c, &idx, &Bm25Params::default(), 4).unwrap();
        assert_eq!(g.to_adjacency(), vec![Vec::<DocId>::new()]);
    }

    #[test]
    fn unique_vocabulary_gets_empty_list() {
        let c = corpus(&["a b", "b c", "zzz"]);
        let idx = build_index(&c);
        let g = build_graph(&c, &idx, &Bm25Params::default(), 4).unwrap();
        assert!(g.adjacency(DocId(2)).unwrap().is_empty());
    }

    #[test]
    fn toy_graph_matches_all_pairs_scoring() {
        let c = corpus(&TOY);
        let idx = build_index(&c);
        let p = Bm25Params::default();
        let g = build_graph(&c, &idx, &p, 2).unwrap();
        for d in 0..c.len() as u32 {
            let tokens = tokenize(TOY[d as usize]);
            let mut pairs: Vec<(f64, u32)> = (0..c.len() as u32)
                .filter(|&o| o != d)
                .map(|o| (idx.bm25_score(&p, &tokens, DocId(o)).unwrap(), o))
                .filter(|(s, _)| *s > 0.0)
                .collect();
            pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let expected: Vec<DocId> = pairs.iter().take(2).map(|p| DocId(p.1)).collect();
            assert_eq!(g.adjacency(DocId(d)).unwrap(), &expected[..], "doc {d}");
        }
    }

    #[test]
    fn parallel_build_matches_sequential() {
        let c = corpus(&TOY);
        let idx = build_index(&c);
        let p = Bm25Params::default();
        let par = build_graph(&c, &idx, &p, 3).unwrap();
        let seq = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| build_graph(&c, &idx, &p, 3).unwrap());
        assert_eq!(par, seq);
    }

    #[test]
    fn neighbors_prefix_semantics() {
        let g = CorpusGraph::from_adjacency(5, vec![ids(&[1, 2, 3, 4, 5]), vec![], vec![], vec![], vec![], vec![]])
            .unwrap();
        assert_eq!(g.neighbors(DocId(0), 1).unwrap(), &ids(&[1])[..]);
        assert_eq!(g.neighbors(DocId(0), 5).unwrap(), &ids(&[1, 2, 3, 4, 5])[..]);
        assert_eq!(g.neighbors(DocId(0), 50).unwrap().len(), 5);
        assert!(matches!(
            g.neighbors(DocId(6), 1),
            Err(GraphError::DocOutOfRange { .. })
        ));
    }

    #[test]
    fn widest_ablation_value_returns_full_list() {
        let n = 130;
        let adjacency: Vec<Vec<DocId>> = (0..n)
            .map(|d| (0..n).filter(|&o| o != d).take(128).map(DocId).collect())
            .collect();
        let g = CorpusGraph::from_adjacency(128, adjacency).unwrap();
        assert_eq!(g.neighbors(DocId(0), 128).unwrap().len(), 128);
    }

    #[test]
    fn rejects_invalid_adjacency() {
        assert!(CorpusGraph::from_adjacency(2, vec![ids(&[0])]).is_err());
        assert!(CorpusGraph::from_adjacency(2, vec![ids(&[1, 1]), vec![]]).is_err());
        assert!(CorpusGraph::from_adjacency(2, vec![ids(&[3])]).is_err());
        assert!(CorpusGraph::from_adjacency(1, vec![ids(&[1, 2]), vec![], vec![]]).is_err());
        assert!(CorpusGraph::from_adjacency(0, vec![]).is_err());
    }

    #[test]
    fn empty_graph_is_header_only() {
        let g = CorpusGraph::empty(0, 128).unwrap();
        let bytes = g.to_bytes();
        assert_eq!(bytes.len(), HEADER_LEN);
        let back = CorpusGraph::from_bytes(&bytes).unwrap();
        assert_eq!(back.num_docs(), 0);
        assert_eq!(back, g);
    }

    #[test]
    fn byte_layout_is_exact() {
        let g = CorpusGraph::from_adjacency(2, vec![ids(&[1]), ids(&[0, 2]), vec![]]).unwrap();
        let bytes = g.to_bytes();
        let mut expected = b"GARG".to_vec();
        for w in [1u32, 3, 2, 1, u32::MAX, 0, 2, u32::MAX, u32::MAX] {
            expected.extend_from_slice(&w.to_le_bytes());
        }
        assert_eq!(bytes, expected);
    }

    #[test]
    fn corrupted_files_report_offsets() {
        let g = CorpusGraph::from_adjacency(2, vec![ids(&[1]), ids(&[0]), vec![]]).unwrap();
        let good = g.to_bytes();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(CorpusGraph::from_bytes(&bad), Err(GraphError::Format { offset: 0, .. })));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(CorpusGraph::from_bytes(&bad), Err(GraphError::Format { offset: 4, .. })));

        // Cut into the second record (starts at 16 + 8).
        let cut = &good[..HEADER_LEN + 8 + 3];
        assert!(matches!(CorpusGraph::from_bytes(cut), Err(GraphError::Format { offset: 24, .. })));
        assert!(matches!(CorpusGraph::from_bytes(&good[..10]), Err(GraphError::Format { offset: 8, .. })));
        assert!(matches!(CorpusGraph::from_bytes(&good[..2]), Err(GraphError::Format { offset: 0, .. })));

        let mut long = good.clone();
        long.push(0);
        assert!(matches!(
            CorpusGraph::from_bytes(&long),
            Err(GraphError::Format { offset, .. }) if offset == good.len() as u64
        ));

        // Self loop in record 1, slot 0.
        let mut bad = good.clone();
        bad[24..28].copy_from_slice(&1u32.to_le_bytes());
        assert!(matches!(CorpusGraph::from_bytes(&bad), Err(GraphError::Format { offset: 24, .. })));
    }

    #[test]
    fn file_round_trip_and_id_map() {
        let dir = tempfile::tempdir().unwrap();
        let c = corpus(&TOY);
        let g = build_graph(&c, &build_index(&c), &Bm25Params::default(), 3).unwrap();
        let path = dir.path().join("toy.garg");
        write_graph(&g, &path).unwrap();
        assert_eq!(read_graph(&path).unwrap(), g);

        let ids_path = id_map_path(&path);
        assert_eq!(ids_path.file_name().unwrap(), "toy.garg.ids");
        write_id_map(&c, &ids_path).unwrap();
        let map = read_id_map(&ids_path).unwrap();
        assert_eq!(map, (0..6).map(|i| format!("d{i}")).collect::<Vec<_>>());
    }

    fn arb_graph() -> impl Strategy<Value = CorpusGraph> {
        (0usize..40, 1usize..10).prop_flat_map(|(n, kmax)| {
            proptest::collection::vec(proptest::collection::vec(0..n.max(1) as u32, 0..=kmax), n).prop_map(
                move |raw| {
                    let adjacency = raw
                        .into_iter()
                        .enumerate()
                        .map(|(d, list)| {
                            let mut seen = HashSet::new();
                            list.into_iter()
                                .filter(|&v| v as usize != d && seen.insert(v))
                                .map(DocId)
                                .collect()
                        })
                        .collect();
                    CorpusGraph::from_adjacency(kmax, adjacency).unwrap()
                },
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn bytes_round_trip(g in arb_graph()) {
            prop_assert_eq!(CorpusGraph::from_bytes(&g.to_bytes()).unwrap(), g);
        }

        #[test]
        fn neighbor_prefixes_nest(g in arb_graph(), k1 in 1usize..12, extra in 0usize..12) {
            let k2 = k1 + extra;
            for d in 0..g.num_docs() as u32 {
                let short = g.truncated(DocId(d), k1).unwrap();
                let long = g.truncated(DocId(d), k2).unwrap();
                prop_assert_eq!(short, &long[..short.len()]);
            }
        }
    }
}
