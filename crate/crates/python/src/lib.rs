use std::error::Error as _;
use std::path::PathBuf;

use persearch_core::index::{read_corpus_dir, SourceDocument};
use persearch_core::miner::{self, MinSupport, DEFAULT_SESSION_GAP_SECS};
use persearch_core::ranker::{self, DEFAULT_FLOOR};
use persearch_core::service::{Clock, SystemClock};
use persearch_core::store::{NewEvent, DEFAULT_TOKEN_TTL_SECS};
use persearch_core::textstat::{self, Stopwords, DEFAULT_KEYWORDS};
use persearch_core::{
    DocId, Error, NewUser, Sequence, SequenceItem, Store, UserId, WeightContext, Weighting,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyKeyError, PyOSError, PyPermissionError, PyValueError};
use pyo3::prelude::*;

create_exception!(
    persearch,
    StoreError,
    PyException,
    "Conflicting or corrupt store data."
);

fn py_err(e: Error) -> PyErr {
    let mut msg = e.to_string();
    let mut source = e.source();
    while let Some(s) = source {
        msg.push_str(": ");
        msg.push_str(&s.to_string());
        source = s.source();
    }
    match e {
        Error::InvalidArgument(_) | Error::EmptyQuery => PyValueError::new_err(msg),
        Error::Reference(_) => PyKeyError::new_err(msg),
        Error::AuthFailure | Error::Unauthorized => PyPermissionError::new_err(msg),
        Error::Io { .. } => PyOSError::new_err(msg),
        Error::Conflict(_) | Error::Corrupt { .. } | Error::Json(_) => StoreError::new_err(msg),
    }
}

/// Lowercased alphanumeric tokens.
#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    textstat::tokenize(text)
}

#[pyfunction]
fn count_syllables(word: &str) -> PyResult<usize> {
    textstat::count_syllables(word).map_err(py_err)
}

#[pyclass(frozen, get_all, name = "TextStats")]
struct PyTextStats {
    paragraphs: usize,
    words: usize,
    sentences: usize,
    printable_chars: usize,
    spaces: usize,
    tabs: usize,
    carriage_returns: usize,
    line_feeds: usize,
    nonprintable_others: usize,
    syllables: usize,
    words_per_sentence: Option<f64>,
    syllables_per_word: Option<f64>,
    flesch_index: Option<f64>,
    word_frequencies: Vec<(String, usize)>,
    report: String,
}

#[pymethods]
impl PyTextStats {
    fn __str__(&self) -> &str {
        &self.report
    }

    fn __repr__(&self) -> String {
        format!(
            "TextStats(words={}, sentences={}, flesch_index={:?})",
            self.words, self.sentences, self.flesch_index
        )
    }
}

#[pyfunction]
fn text_statistics(text: &str) -> PyTextStats {
    let s = textstat::text_statistics(text);
    PyTextStats {
        report: s.to_string(),
        paragraphs: s.paragraphs,
        words: s.words,
        sentences: s.sentences,
        printable_chars: s.printable_chars,
        spaces: s.spaces,
        tabs: s.tabs,
        carriage_returns: s.carriage_returns,
        line_feeds: s.line_feeds,
        nonprintable_others: s.nonprintable_others,
        syllables: s.syllables,
        words_per_sentence: s.words_per_sentence,
        syllables_per_word: s.syllables_per_word,
        flesch_index: s.flesch_index,
        word_frequencies: s.word_frequencies,
    }
}

/// Top-`k` non-stopword tokens with their counts. `stopwords=None` uses the
/// built-in list.
#[pyfunction]
#[pyo3(signature = (text, k = DEFAULT_KEYWORDS, stopwords = None))]
fn extract_keywords(
    text: &str,
    k: usize,
    stopwords: Option<Vec<String>>,
) -> PyResult<Vec<(String, u32)>> {
    let stopwords = stopwords.map_or_else(Stopwords::default, |s| s.into_iter().collect());
    Ok(textstat::extract_keywords(text, &stopwords, k)
        .map_err(py_err)?
        .0)
}

#[pyfunction]
#[pyo3(signature = (item_date, min_date, max_date, floor = DEFAULT_FLOOR))]
fn get_weight_time(item_date: i64, min_date: i64, max_date: i64, floor: f64) -> PyResult<f64> {
    let ctx = WeightContext::new(min_date, max_date, floor).map_err(py_err)?;
    ranker::get_weight_time(item_date, &ctx).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (dwell_minutes, window_minutes, floor = DEFAULT_FLOOR))]
fn get_weight_minutes(dwell_minutes: f64, window_minutes: f64, floor: f64) -> PyResult<f64> {
    ranker::get_weight_minutes(dwell_minutes, window_minutes, floor).map_err(py_err)
}

#[pyclass(frozen, get_all)]
struct Pattern {
    items: Vec<u64>,
    support: f64,
}

#[pymethods]
impl Pattern {
    fn __repr__(&self) -> String {
        format!(
            "Pattern(items={:?}, support={:?})",
            self.items, self.support
        )
    }
}

/// `2`, `1.5` or `"50%"`.
#[derive(FromPyObject)]
enum Threshold {
    Number(f64),
    Text(String),
}

impl Threshold {
    fn parse(self) -> PyResult<MinSupport> {
        match self {
            Threshold::Number(v) => format!("{v}").parse(),
            Threshold::Text(s) => s.parse(),
        }
        .map_err(py_err)
    }
}

/// A bare doc id, or `(doc_id, clicked_at, dwell_seconds)`.
#[derive(FromPyObject)]
enum Click {
    Full(u64, i64, i64),
    Doc(u64),
}

fn report(set: &miner::FrequentSet) -> Vec<Pattern> {
    set.report()
        .into_iter()
        .map(|p| Pattern {
            items: p.items.iter().map(|d| d.0).collect(),
            support: p.support,
        })
        .collect()
}

/// Mines frequent subsequences. Bare doc ids get their position as click
/// time and zero dwell. The weighting context spans every click time given.
#[pyfunction]
#[pyo3(signature = (sequences, min_sup, algo = "gsp", floor = DEFAULT_FLOOR))]
fn mine(
    py: Python<'_>,
    sequences: Vec<Vec<Click>>,
    min_sup: Threshold,
    algo: &str,
    floor: f64,
) -> PyResult<Vec<Pattern>> {
    let weighting: Weighting = algo.parse().map_err(py_err)?;
    let min_sup = min_sup.parse()?;
    let seqs: Vec<Sequence> = sequences
        .into_iter()
        .enumerate()
        .map(|(n, clicks)| Sequence {
            user_id: UserId(1),
            session_id: n as u32 + 1,
            items: clicks
                .into_iter()
                .enumerate()
                .map(|(i, c)| match c {
                    Click::Full(doc, at, dwell) => SequenceItem {
                        doc_id: DocId(doc),
                        clicked_at: at,
                        dwell_seconds: dwell,
                    },
                    Click::Doc(doc) => SequenceItem {
                        doc_id: DocId(doc),
                        clicked_at: i as i64,
                        dwell_seconds: 0,
                    },
                })
                .collect(),
        })
        .collect();
    let set = py.detach(|| {
        let times = seqs
            .iter()
            .flat_map(|s| s.items.iter().map(|i| i.clicked_at));
        let ctx = match WeightContext::spanning(times, floor)? {
            Some(ctx) => ctx,
            None => WeightContext::new(0, 0, floor)?,
        };
        miner::mine(&seqs, min_sup.resolve(seqs.len()), weighting, &ctx)
    });
    Ok(report(&set.map_err(py_err)?))
}

#[pyclass(frozen, get_all)]
struct SearchHit {
    doc_id: u64,
    uri: String,
    title: String,
    score: f64,
    base_strength: u32,
}

#[pymethods]
impl SearchHit {
    fn __repr__(&self) -> String {
        format!(
            "SearchHit(doc_id={}, uri={:?}, score={:?}, base_strength={})",
            self.doc_id, self.uri, self.score, self.base_strength
        )
    }
}

/// A search engine over an in-memory or on-disk store.
#[pyclass(frozen)]
struct Engine {
    store: Store,
    floor: f64,
}

fn now_or(now: Option<i64>) -> i64 {
    now.unwrap_or_else(|| SystemClock.now())
}

#[pymethods]
impl Engine {
    /// With `path`, opens (creating if needed) a store directory; otherwise
    /// everything lives in memory.
    #[new]
    #[pyo3(signature = (path = None, floor = DEFAULT_FLOOR, token_ttl_secs = DEFAULT_TOKEN_TTL_SECS))]
    fn new(path: Option<PathBuf>, floor: f64, token_ttl_secs: i64) -> PyResult<Self> {
        if floor.is_nan() || floor <= 0.0 {
            return Err(PyValueError::new_err("floor must be positive"));
        }
        let config = persearch_core::store::StoreConfig { token_ttl_secs };
        let store = match path {
            Some(dir) => {
                Store::init(&dir, None).map_err(py_err)?;
                Store::open(&dir, config).map_err(py_err)?
            }
            None => Store::in_memory(Default::default(), config),
        };
        Ok(Engine { store, floor })
    }

    /// Adds `(uri, title, body)` documents; returns their ids.
    #[pyo3(signature = (docs, keywords = DEFAULT_KEYWORDS))]
    fn ingest(
        &self,
        py: Python<'_>,
        docs: Vec<(String, String, String)>,
        keywords: usize,
    ) -> PyResult<Vec<u64>> {
        let docs: Vec<SourceDocument> = docs
            .into_iter()
            .map(|(uri, title, body)| SourceDocument { uri, title, body })
            .collect();
        let records = py
            .detach(|| self.store.ingest(&docs, keywords))
            .map_err(py_err)?;
        Ok(records.iter().map(|r| r.doc_id.0).collect())
    }

    #[pyo3(signature = (path, keywords = DEFAULT_KEYWORDS))]
    fn ingest_dir(&self, py: Python<'_>, path: PathBuf, keywords: usize) -> PyResult<Vec<u64>> {
        let records = py
            .detach(|| self.store.ingest(&read_corpus_dir(&path)?, keywords))
            .map_err(py_err)?;
        Ok(records.iter().map(|r| r.doc_id.0).collect())
    }

    #[pyo3(signature = (username, password, *, address = String::new(), occupation = String::new(),
                        qualification = String::new(), interests = Vec::new()))]
    #[allow(clippy::too_many_arguments)]
    fn register(
        &self,
        py: Python<'_>,
        username: String,
        password: String,
        address: String,
        occupation: String,
        qualification: String,
        interests: Vec<String>,
    ) -> PyResult<u64> {
        let new = NewUser {
            username,
            password,
            address,
            occupation,
            qualification,
            interests,
        };
        Ok(py
            .detach(|| self.store.register_user(&new))
            .map_err(py_err)?
            .0)
    }

    /// Returns a bearer token; raises PermissionError on bad credentials.
    #[pyo3(signature = (username, password, now = None))]
    fn authenticate(
        &self,
        py: Python<'_>,
        username: &str,
        password: &str,
        now: Option<i64>,
    ) -> PyResult<String> {
        let session = py
            .detach(|| self.store.authenticate(username, password, now_or(now)))
            .map_err(py_err)?;
        Ok(session.token)
    }

    /// The user id behind a live token.
    #[pyo3(signature = (token, now = None))]
    fn validate(&self, token: &str, now: Option<i64>) -> PyResult<u64> {
        Ok(self
            .store
            .validate_token(token, now_or(now))
            .map_err(py_err)?
            .0)
    }

    /// Personalized results for `user_id`. With `record`, the search itself
    /// is logged as a click-less event.
    #[pyo3(signature = (user_id, query, now = None, record = true))]
    fn search(
        &self,
        user_id: u64,
        query: &str,
        now: Option<i64>,
        record: bool,
    ) -> PyResult<Vec<SearchHit>> {
        let user_id = UserId(user_id);
        let snapshot = self.store.snapshot();
        if snapshot.user(user_id).is_none() {
            return Err(PyKeyError::new_err(format!("unknown user {user_id}")));
        }
        let results =
            ranker::personalized_search(&snapshot, user_id, query, self.floor).map_err(py_err)?;
        if record {
            let now = now_or(now);
            self.store
                .append_event(&NewEvent {
                    user_id,
                    query: query.to_owned(),
                    doc_id: None,
                    clicked_at: now,
                    left_at: now,
                })
                .map_err(py_err)?;
        }
        Ok(results
            .into_iter()
            .map(|r| SearchHit {
                doc_id: r.doc_id.0,
                uri: r.uri,
                title: r.title,
                score: r.score,
                base_strength: r.base_strength,
            })
            .collect())
    }

    /// Logs a click on `doc_id` from the results for `query`; returns the event id.
    fn click(
        &self,
        user_id: u64,
        query: String,
        doc_id: u64,
        clicked_at: i64,
        left_at: i64,
    ) -> PyResult<u64> {
        let id = self
            .store
            .append_event(&NewEvent {
                user_id: UserId(user_id),
                query,
                doc_id: Some(DocId(doc_id)),
                clicked_at,
                left_at,
            })
            .map_err(py_err)?;
        Ok(id.0)
    }

    /// Mines click sessions, for one user or (by default) everyone.
    #[pyo3(signature = (min_sup, algo = "gsp", user_id = None, session_gap_secs = DEFAULT_SESSION_GAP_SECS))]
    fn patterns(
        &self,
        py: Python<'_>,
        min_sup: Threshold,
        algo: &str,
        user_id: Option<u64>,
        session_gap_secs: i64,
    ) -> PyResult<Vec<Pattern>> {
        let weighting: Weighting = algo.parse().map_err(py_err)?;
        let min_sup = min_sup.parse()?;
        let snapshot = self.store.snapshot();
        let set = py.detach(|| {
            let seqs =
                miner::sequences_from_snapshot(&snapshot, user_id.map(UserId), session_gap_secs)?;
            let ctx = miner::snapshot_context(&snapshot, self.floor)?;
            miner::mine(&seqs, min_sup.resolve(seqs.len()), weighting, &ctx)
        });
        Ok(report(&set.map_err(py_err)?))
    }

    /// The event log in its on-disk JSON-lines form.
    fn events_jsonl(&self) -> PyResult<String> {
        self.store.snapshot().events_jsonl().map_err(py_err)
    }

    #[getter]
    fn document_count(&self) -> usize {
        self.store.snapshot().corpus().len()
    }

    #[getter]
    fn user_count(&self) -> usize {
        self.store.snapshot().users().len()
    }
}

#[pymodule]
pub fn persearch(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("StoreError", m.py().get_type::<StoreError>())?;
    m.add_class::<Engine>()?;
    m.add_class::<SearchHit>()?;
    m.add_class::<Pattern>()?;
    m.add_class::<PyTextStats>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(count_syllables, m)?)?;
    m.add_function(wrap_pyfunction!(text_statistics, m)?)?;
    m.add_function(wrap_pyfunction!(extract_keywords, m)?)?;
    m.add_function(wrap_pyfunction!(get_weight_time, m)?)?;
    m.add_function(wrap_pyfunction!(get_weight_minutes, m)?)?;
    m.add_function(wrap_pyfunction!(mine, m)?)?;
    Ok(())
}
