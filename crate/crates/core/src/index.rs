//! Keyword table and search-key matching.
//!
//! Each document is represented only by its keyword profile; a query matches
//! a document when any of its non-stopword tokens is one of those keywords.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textstat::{extract_keywords, tokenize, KeywordProfile, Stopwords, DEFAULT_KEYWORDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocId(pub u64);

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// What ingestion reports back. The body is not retained; only its keywords are.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub doc_id: DocId,
    pub uri: String,
    pub title: String,
}

/// One row of the keyword table, as persisted in `corpus.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexedDocument {
    pub doc_id: DocId,
    pub uri: String,
    pub title: String,
    pub keywords: KeywordProfile,
}

impl IndexedDocument {
    pub fn record(&self) -> DocumentRecord {
        DocumentRecord {
            doc_id: self.doc_id,
            uri: self.uri.clone(),
            title: self.title.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub doc_id: DocId,
    pub uri: String,
    pub title: String,
    /// Sum of the profile frequencies of the query tokens this document matched.
    pub match_strength: u32,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    docs: Vec<IndexedDocument>,
    by_uri: HashMap<String, usize>,
    postings: HashMap<String, Vec<(usize, u32)>>,
    stopwords: Stopwords,
    keywords_per_doc: usize,
}

impl Default for Corpus {
    fn default() -> Self {
        Corpus::new(Stopwords::default(), DEFAULT_KEYWORDS).expect("default keyword count is valid")
    }
}

impl Corpus {
    pub fn new(stopwords: Stopwords, keywords_per_doc: usize) -> Result<Self> {
        if keywords_per_doc == 0 {
            return Err(Error::invalid("keyword count must be at least 1"));
        }
        Ok(Corpus {
            docs: Vec::new(),
            by_uri: HashMap::new(),
            postings: HashMap::new(),
            stopwords,
            keywords_per_doc,
        })
    }

    pub fn stopwords(&self) -> &Stopwords {
        &self.stopwords
    }

    pub fn keywords_per_doc(&self) -> usize {
        self.keywords_per_doc
    }

    /// Applies to documents ingested from now on.
    pub fn set_keywords_per_doc(&mut self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::invalid("keyword count must be at least 1"));
        }
        self.keywords_per_doc = k;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Documents in ingestion (= doc id) order.
    pub fn documents(&self) -> &[IndexedDocument] {
        &self.docs
    }

    pub fn get(&self, doc_id: DocId) -> Option<&IndexedDocument> {
        self.docs
            .binary_search_by_key(&doc_id, |d| d.doc_id)
            .ok()
            .map(|i| &self.docs[i])
    }

    pub fn contains_uri(&self, uri: &str) -> bool {
        self.by_uri.contains_key(uri)
    }

    fn next_id(&self) -> DocId {
        DocId(self.docs.last().map_or(1, |d| d.doc_id.0 + 1))
    }

    /// Extracts the keyword profile of `body` and adds the document.
    pub fn ingest_document(
        &mut self,
        uri: &str,
        title: &str,
        body: &str,
    ) -> Result<DocumentRecord> {
        let keywords = extract_keywords(body, &self.stopwords, self.keywords_per_doc)?;
        let doc = IndexedDocument {
            doc_id: self.next_id(),
            uri: uri.to_owned(),
            title: title.to_owned(),
            keywords,
        };
        let record = doc.record();
        self.insert(doc)?;
        Ok(record)
    }

    /// Adds an already-profiled document, e.g. when reloading a store.
    pub fn insert(&mut self, doc: IndexedDocument) -> Result<()> {
        if doc.uri.is_empty() {
            return Err(Error::invalid("document uri must not be empty"));
        }
        if self.by_uri.contains_key(&doc.uri) {
            return Err(Error::Conflict(format!("uri {} already ingested", doc.uri)));
        }
        if doc.doc_id < self.next_id() {
            return Err(Error::Conflict(format!(
                "doc_id {} is not greater than existing ids",
                doc.doc_id
            )));
        }
        let slot = self.docs.len();
        for (token, freq) in doc.keywords.iter() {
            self.postings
                .entry(token.to_owned())
                .or_default()
                .push((slot, freq));
        }
        self.by_uri.insert(doc.uri.clone(), slot);
        self.docs.push(doc);
        Ok(())
    }

    /// Tokenizes, drops stopwords and joins with single spaces; the grouping key
    /// for a user's repeated searches. Empty when nothing searchable remains.
    pub fn normalize_query(&self, raw: &str) -> String {
        self.query_tokens(raw).join(" ")
    }

    fn query_tokens(&self, raw: &str) -> Vec<String> {
        tokenize(raw)
            .into_iter()
            .filter(|t| !self.stopwords.contains(t))
            .collect()
    }

    /// Documents whose profile contains any query token, strongest first,
    /// ties by ascending doc id.
    pub fn match_query(&self, query: &str) -> Result<Vec<MatchResult>> {
        let tokens: BTreeSet<String> = self.query_tokens(query).into_iter().collect();
        if tokens.is_empty() {
            return Err(Error::EmptyQuery);
        }
        let mut strength: HashMap<usize, u32> = HashMap::new();
        for token in &tokens {
            if let Some(postings) = self.postings.get(token) {
                for &(slot, freq) in postings {
                    *strength.entry(slot).or_default() += freq;
                }
            }
        }
        let mut hits: Vec<(usize, u32)> = strength.into_iter().collect();
        hits.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(hits
            .into_iter()
            .map(|(slot, match_strength)| {
                let d = &self.docs[slot];
                MatchResult {
                    doc_id: d.doc_id,
                    uri: d.uri.clone(),
                    title: d.title.clone(),
                    match_strength,
                }
            })
            .collect())
    }
}

/// A text file read from a corpus directory, not yet profiled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceDocument {
    pub uri: String,
    pub title: String,
    pub body: String,
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries =
        fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
        let path = entry.path();
        let kind = entry
            .file_type()
            .map_err(|e| Error::io(format!("inspecting {}", path.display()), e))?;
        if kind.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Reads every file under `dir` (recursively, sorted by relative path).
///
/// The uri is the `/`-separated path relative to `dir` and the title is the
/// first nonblank line. Fails on the first unreadable or non-UTF-8 file, before
/// anything is returned.
pub fn read_corpus_dir(dir: &Path) -> Result<Vec<SourceDocument>> {
    let mut files = Vec::new();
    collect_files(dir, &mut files)?;
    let mut docs = Vec::with_capacity(files.len());
    for path in files {
        let rel = path.strip_prefix(dir).unwrap_or(&path);
        let uri = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let body = fs::read_to_string(&path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let title = body
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .unwrap_or_default()
            .to_owned();
        docs.push(SourceDocument { uri, title, body });
    }
    docs.sort_by(|a, b| a.uri.cmp(&b.uri));
    Ok(docs)
}
