//! Document and query ingestion, plus the tokenizer shared by the index,
//! the corpus graph and the lexical scorer.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

/// Dense internal document identifier, assigned in ingestion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DocId(pub u32);

impl DocId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub external_id: String,
    pub text: String,
}

impl Document {
    pub fn new(external_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            external_id: external_id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub query_id: String,
    pub text: String,
}

impl Query {
    pub fn new(query_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            query_id: query_id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
}

impl CorpusError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        CorpusError::Parse {
            line,
            message: message.into(),
        }
    }
}

/// On-disk corpus layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// One JSON object per line with string fields `doc_id` and `text`.
    Jsonl,
    /// `id<TAB>text`, no header.
    Tsv,
}

impl CorpusFormat {
    /// Guess from the file extension; anything other than `.tsv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("tsv") => CorpusFormat::Tsv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "tsv" => Ok(CorpusFormat::Tsv),
            other => Err(format!("unknown corpus format {other:?} (expected jsonl or tsv)")),
        }
    }
}

/// An immutable, ingested document collection.
///
/// Internal ids are dense (`0..len`) and follow ingestion order.
#[derive(Debug, Clone, Default)]
pub struct CorpusHandle {
    docs: Vec<Document>,
    ids: HashMap<String, DocId>,
}

impl CorpusHandle {
    pub fn from_documents(docs: Vec<Document>) -> Result<Self, CorpusError> {
        let mut ids = HashMap::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            if doc.external_id.is_empty() {
                return Err(CorpusError::parse(i + 1, "empty document id"));
            }
            let id = u32::try_from(i)
                .map_err(|_| CorpusError::parse(i + 1, "corpus exceeds u32::MAX documents"))?;
            if ids.insert(doc.external_id.clone(), DocId(id)).is_some() {
                return Err(CorpusError::DuplicateId(doc.external_id.clone()));
            }
        }
        Ok(Self { docs, ids })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    /// Panics if `id` is out of range.
    pub fn document(&self, id: DocId) -> &Document {
        &self.docs[id.index()]
    }

    pub fn get(&self, id: DocId) -> Option<&Document> {
        self.docs.get(id.index())
    }

    pub fn external_id(&self, id: DocId) -> &str {
        &self.docs[id.index()].external_id
    }

    pub fn internal_id(&self, external_id: &str) -> Option<DocId> {
        self.ids.get(external_id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (DocId, &Document)> {
        self.docs
            .iter()
            .enumerate()
            .map(|(i, d)| (DocId(i as u32), d))
    }
}

#[derive(Deserialize)]
struct JsonlRecord {
    doc_id: String,
    text: String,
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<CorpusHandle, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    read_corpus(reader, format)
}

pub fn read_corpus<R: BufRead>(reader: R, format: CorpusFormat) -> Result<CorpusHandle, CorpusError> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let doc = match format {
            CorpusFormat::Jsonl => {
                let rec: JsonlRecord = serde_json::from_str(line)
                    .map_err(|e| CorpusError::parse(line_no, e.to_string()))?;
                Document::new(rec.doc_id, rec.text)
            }
            CorpusFormat::Tsv => {
                let (id, text) = line
                    .split_once('\t')
                    .ok_or_else(|| CorpusError::parse(line_no, "expected `id<TAB>text`"))?;
                Document::new(id, text)
            }
        };
        if doc.external_id.is_empty() {
            return Err(CorpusError::parse(line_no, "empty document id"));
        }
        if doc.text.is_empty() {
            return Err(CorpusError::parse(line_no, "empty document text"));
        }
        docs.push(doc);
    }
    CorpusHandle::from_documents(docs)
}

/// Read `query_id<TAB>text` lines. Query ids must be unique.
pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<Query>, CorpusError> {
    read_queries(BufReader::new(File::open(path)?))
}

pub fn read_queries<R: BufRead>(reader: R) -> Result<Vec<Query>, CorpusError> {
    let mut seen = std::collections::HashSet::new();
    let mut queries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| CorpusError::parse(line_no, "expected `query_id<TAB>text`"))?;
        if id.is_empty() {
            return Err(CorpusError::parse(line_no, "empty query id"));
        }
        if !seen.insert(id.to_owned()) {
            return Err(CorpusError::DuplicateId(id.to_owned()));
        }
        queries.push(Query::new(id, text));
    }
    Ok(queries)
}

/// Lowercase, then split on every non-alphanumeric codepoint.
///
/// No stemming and no stopword removal.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}
