//! BEIR-layout collections: line-delimited corpus and queries, tab-separated qrels.
//!
//! Corpus lines look like `{"_id": "d1", "title": "...", "text": "..."}`, query
//! lines like `{"_id": "q1", "text": "..."}`. Qrels rows are either
//! `query-id <TAB> doc-id <TAB> grade` or the four-column TREC variant; the grade
//! is always read from the last column and the doc id from the one before it.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const QUERIES_FILE: &str = "queries.jsonl";
pub const QRELS_FILE: &str = "qrels.tsv";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("malformed qrels row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("query set is empty")]
    EmptyQueries,
    #[error("qrels reference unknown query {0:?}")]
    UnknownQuery(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<CorpusError>,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    #[serde(rename = "_id")]
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            text: text.into(),
        }
    }

    /// The string handed to encoders: `title + " " + text`, trimmed.
    pub fn encoder_input(&self) -> String {
        format!("{} {}", self.title, self.text).trim().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    #[serde(rename = "_id")]
    pub id: String,
    pub text: String,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// Graded judgments: query id -> doc id -> grade.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qrels(BTreeMap<String, BTreeMap<String, u32>>);

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a judgment; a repeated (query, doc) pair overwrites the earlier grade.
    pub fn insert(&mut self, query_id: impl Into<String>, doc_id: impl Into<String>, grade: u32) {
        self.0.entry(query_id.into()).or_default().insert(doc_id.into(), grade);
    }

    pub fn get(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.0.get(query_id)
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> Option<u32> {
        self.0.get(query_id).and_then(|m| m.get(doc_id)).copied()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeMap<String, u32>)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate_against(&self, queries: &[Query]) -> Result<(), CorpusError> {
        let known: HashSet<&str> = queries.iter().map(|q| q.id.as_str()).collect();
        match self.0.keys().find(|q| !known.contains(q.as_str())) {
            Some(q) => Err(CorpusError::UnknownQuery(q.clone())),
            None => Ok(()),
        }
    }
}

fn check_id(id: &str, line: usize) -> Result<(), CorpusError> {
    if id.is_empty() {
        return Err(CorpusError::MalformedLine {
            line,
            reason: "empty _id".into(),
        });
    }
    if id.chars().any(|c| c.is_whitespace() || c == '/' || c == '\\') {
        return Err(CorpusError::MalformedLine {
            line,
            reason: format!("_id {id:?} contains whitespace or a path separator"),
        });
    }
    Ok(())
}

fn json_lines<T, R>(reader: R) -> impl Iterator<Item = Result<(usize, T), CorpusError>>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
{
    reader.lines().enumerate().filter_map(|(i, line)| {
        let line_no = i + 1;
        match line {
            Err(e) => Some(Err(CorpusError::Io(e))),
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => {
                Some(
                    serde_json::from_str::<T>(&l)
                        .map(|v| (line_no, v))
                        .map_err(|e| CorpusError::MalformedLine {
                            line: line_no,
                            reason: e.to_string(),
                        }),
                )
            }
        }
    })
}

pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<Document>, CorpusError> {
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    for item in json_lines::<Document, _>(reader) {
        let (line, doc) = item?;
        check_id(&doc.id, line)?;
        if doc.title.trim().is_empty() && doc.text.trim().is_empty() {
            return Err(CorpusError::MalformedLine {
                line,
                reason: "title and text are both empty".into(),
            });
        }
        if !seen.insert(doc.id.clone()) {
            return Err(CorpusError::DuplicateId(doc.id));
        }
        docs.push(doc);
    }
    if docs.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(docs)
}

pub fn parse_queries<R: BufRead>(reader: R) -> Result<Vec<Query>, CorpusError> {
    let mut seen = HashSet::new();
    let mut queries = Vec::new();
    for item in json_lines::<Query, _>(reader) {
        let (line, query) = item?;
        check_id(&query.id, line)?;
        if query.text.trim().is_empty() {
            return Err(CorpusError::MalformedLine {
                line,
                reason: "empty query text".into(),
            });
        }
        if !seen.insert(query.id.clone()) {
            return Err(CorpusError::DuplicateId(query.id));
        }
        queries.push(query);
    }
    if queries.is_empty() {
        return Err(CorpusError::EmptyQueries);
    }
    Ok(queries)
}

pub fn parse_qrels<R: BufRead>(reader: R) -> Result<Qrels, CorpusError> {
    let mut qrels = Qrels::new();
    let mut first_row = true;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        let is_first = std::mem::replace(&mut first_row, false);
        if cols.len() < 3 {
            return Err(CorpusError::MalformedRow {
                line: line_no,
                reason: format!("expected at least 3 columns, found {}", cols.len()),
            });
        }
        let grade_col = cols[cols.len() - 1];
        let grade = match grade_col.parse::<u32>() {
            Ok(g) => g,
            // header row, e.g. `query-id  corpus-id  score`
            Err(_) if is_first && grade_col.parse::<i64>().is_err() => continue,
            Err(_) => {
                return Err(CorpusError::MalformedRow {
                    line: line_no,
                    reason: format!("grade {grade_col:?} is not a non-negative integer"),
                })
            }
        };
        let (query_id, doc_id) = (cols[0], cols[cols.len() - 2]);
        if query_id.is_empty() || doc_id.is_empty() {
            return Err(CorpusError::MalformedRow {
                line: line_no,
                reason: "empty query or doc id".into(),
            });
        }
        qrels.insert(query_id, doc_id, grade);
    }
    Ok(qrels)
}

pub fn write_corpus<W: Write>(docs: &[Document], mut sink: W) -> io::Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut sink, doc)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_queries<W: Write>(queries: &[Query], mut sink: W) -> io::Result<()> {
    for query in queries {
        serde_json::to_writer(&mut sink, query)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_qrels<W: Write>(qrels: &Qrels, mut sink: W) -> io::Result<()> {
    writeln!(sink, "query-id\tcorpus-id\tscore")?;
    for (q, docs) in qrels.iter() {
        for (d, g) in docs {
            writeln!(sink, "{q}\t{d}\t{g}")?;
        }
    }
    Ok(())
}

/// A collection directory: `corpus.jsonl` plus optional `queries.jsonl` and `qrels.tsv`.
#[derive(Debug, Clone)]
pub struct Collection {
    pub corpus: Vec<Document>,
    pub queries: Option<Vec<Query>>,
    pub qrels: Option<Qrels>,
}

impl Collection {
    pub fn load_dir(dir: &Path) -> Result<Self, CorpusError> {
        let corpus = read_file(&dir.join(CORPUS_FILE), parse_corpus)?;
        let queries_path = dir.join(QUERIES_FILE);
        let queries = if queries_path.exists() {
            Some(read_file(&queries_path, parse_queries)?)
        } else {
            None
        };
        let qrels_path = dir.join(QRELS_FILE);
        let qrels = if qrels_path.exists() {
            Some(read_file(&qrels_path, parse_qrels)?)
        } else {
            None
        };
        if let (Some(q), Some(r)) = (&queries, &qrels) {
            r.validate_against(q)?;
        }
        Ok(Self { corpus, queries, qrels })
    }

    pub fn save_dir(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        write_corpus(&self.corpus, io::BufWriter::new(File::create(dir.join(CORPUS_FILE))?))?;
        if let Some(q) = &self.queries {
            write_queries(q, io::BufWriter::new(File::create(dir.join(QUERIES_FILE))?))?;
        }
        if let Some(r) = &self.qrels {
            write_qrels(r, io::BufWriter::new(File::create(dir.join(QRELS_FILE))?))?;
        }
        Ok(())
    }
}

pub fn read_file<T>(
    path: &Path,
    parse: impl FnOnce(BufReader<File>) -> Result<T, CorpusError>,
) -> Result<T, CorpusError> {
    let wrap = |e: CorpusError| CorpusError::File {
        path: path.to_path_buf(),
        source: Box::new(e),
    };
    let file = File::open(path).map_err(|e| wrap(e.into()))?;
    parse(BufReader::new(file)).map_err(wrap)
}
