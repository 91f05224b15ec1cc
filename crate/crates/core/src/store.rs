//! User profiles, the append-only interaction log and the keyword table.
//!
//! On disk a store is a directory of newline-delimited JSON files:
//!
//! * `users.jsonl`  one registered user per line
//! * `events.jsonl` one click (or search record) per line, in append order
//! * `corpus.jsonl` one keyword-table row per document
//! * `stopwords.txt` the stopword list the corpus was profiled with
//!
//! All writes go through a single lock. Readers take [`StoreSnapshot`]s, which
//! share the current collections by reference count and are never mutated:
//! a writer that finds a collection shared copies it before appending.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use argon2::{Algorithm, Argon2, Params, Version};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use subtle::ConstantTimeEq;

use crate::error::{Error, Result};
use crate::index::{Corpus, DocId, DocumentRecord, IndexedDocument, SourceDocument};
use crate::textstat::Stopwords;
use crate::Timestamp;

pub const USERS_FILE: &str = "users.jsonl";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const STOPWORDS_FILE: &str = "stopwords.txt";

pub const DEFAULT_TOKEN_TTL_SECS: i64 = 24 * 60 * 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u64);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventId(pub u64);

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: UserId,
    pub username: String,
    /// Hex-encoded password hash.
    pub digest: String,
    /// Hex-encoded per-user random salt.
    pub salt: String,
    /// Hash algorithm and parameters used for `digest`.
    pub scheme: String,
    pub address: String,
    pub occupation: String,
    pub qualification: String,
    pub interests: Vec<String>,
}

/// Registration input. The password is redacted from `Debug` output.
#[derive(Clone, Default, Deserialize)]
pub struct NewUser {
    pub username: String,
    pub password: String,
    #[serde(default)]
    pub address: String,
    #[serde(default)]
    pub occupation: String,
    #[serde(default)]
    pub qualification: String,
    #[serde(default)]
    pub interests: Vec<String>,
}

impl fmt::Debug for NewUser {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NewUser")
            .field("username", &self.username)
            .field("password", &"<redacted>")
            .field("address", &self.address)
            .field("occupation", &self.occupation)
            .field("qualification", &self.qualification)
            .field("interests", &self.interests)
            .finish()
    }
}

impl NewUser {
    pub fn new(username: impl Into<String>, password: impl Into<String>) -> Self {
        NewUser {
            username: username.into(),
            password: password.into(),
            ..Default::default()
        }
    }
}

/// One logged interaction. A `doc_id` of `None` records a search without a click.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchEvent {
    pub event_id: EventId,
    pub user_id: UserId,
    /// Normalized search key.
    pub query: String,
    pub doc_id: Option<DocId>,
    pub clicked_at: Timestamp,
    pub left_at: Timestamp,
}

impl SearchEvent {
    pub fn dwell_seconds(&self) -> i64 {
        self.left_at - self.clicked_at
    }

    pub fn dwell_minutes(&self) -> f64 {
        self.dwell_seconds() as f64 / 60.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewEvent {
    pub user_id: UserId,
    /// Raw search key; normalized on append.
    pub query: String,
    pub doc_id: Option<DocId>,
    pub clicked_at: Timestamp,
    pub left_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionToken {
    pub token: String,
    pub user_id: UserId,
    pub expires_at: Timestamp,
}

/// An immutable point-in-time view of the whole store.
#[derive(Debug, Clone)]
pub struct StoreSnapshot {
    users: Arc<Vec<UserProfile>>,
    events: Arc<Vec<SearchEvent>>,
    corpus: Arc<Corpus>,
}

impl PartialEq for StoreSnapshot {
    fn eq(&self, other: &Self) -> bool {
        self.users == other.users
            && self.events == other.events
            && self.corpus.documents() == other.corpus.documents()
            && self.corpus.stopwords() == other.corpus.stopwords()
    }
}

impl StoreSnapshot {
    pub fn empty(corpus: Corpus) -> Self {
        StoreSnapshot {
            users: Arc::default(),
            events: Arc::default(),
            corpus: Arc::new(corpus),
        }
    }

    pub fn users(&self) -> &[UserProfile] {
        &self.users
    }

    /// All events in append order.
    pub fn events(&self) -> &[SearchEvent] {
        &self.events
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn user(&self, user_id: UserId) -> Option<&UserProfile> {
        user_index(user_id).and_then(|i| self.users.get(i))
    }

    pub fn user_by_name(&self, username: &str) -> Option<&UserProfile> {
        self.users.iter().find(|u| u.username == username)
    }

    /// How many times `user_id` searched for the normalized key `query`.
    pub fn search_count(&self, user_id: UserId, query: &str) -> usize {
        self.events
            .iter()
            .filter(|e| e.user_id == user_id && e.query == query && e.doc_id.is_none())
            .count()
    }

    /// Newline-delimited JSON of the event log, byte-identical to `events.jsonl`.
    pub fn events_jsonl(&self) -> Result<String> {
        to_jsonl(self.events.iter())
    }
}

fn to_jsonl<'a, T: Serialize + 'a>(rows: impl Iterator<Item = &'a T>) -> Result<String> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    Ok(out)
}

fn user_index(user_id: UserId) -> Option<usize> {
    usize::try_from(user_id.0).ok()?.checked_sub(1)
}

#[derive(Debug, Clone)]
pub struct StoreConfig {
    pub token_ttl_secs: i64,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            token_ttl_secs: DEFAULT_TOKEN_TTL_SECS,
        }
    }
}

const HASH_LEN: usize = 32;
const SALT_LEN: usize = 16;

/// Argon2id parameters, serialized into each user record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct HashScheme {
    m_cost: u32,
    t_cost: u32,
    p_cost: u32,
}

impl Default for HashScheme {
    fn default() -> Self {
        HashScheme {
            m_cost: Params::DEFAULT_M_COST,
            t_cost: Params::DEFAULT_T_COST,
            p_cost: Params::DEFAULT_P_COST,
        }
    }
}

impl HashScheme {
    fn name(&self) -> String {
        format!(
            "argon2id$v=19$m={},t={},p={}",
            self.m_cost, self.t_cost, self.p_cost
        )
    }

    fn parse(s: &str) -> Option<Self> {
        let params = s.strip_prefix("argon2id$v=19$")?;
        let mut scheme = HashScheme::default();
        for kv in params.split(',') {
            let (k, v) = kv.split_once('=')?;
            let v: u32 = v.parse().ok()?;
            match k {
                "m" => scheme.m_cost = v,
                "t" => scheme.t_cost = v,
                "p" => scheme.p_cost = v,
                _ => return None,
            }
        }
        Some(scheme)
    }

    fn hash(&self, password: &str, salt: &[u8]) -> Result<[u8; HASH_LEN]> {
        let params = Params::new(self.m_cost, self.t_cost, self.p_cost, Some(HASH_LEN))
            .map_err(|e| Error::invalid(format!("password hash parameters: {e}")))?;
        let mut out = [0u8; HASH_LEN];
        Argon2::new(Algorithm::Argon2id, Version::V0x13, params)
            .hash_password_into(password.as_bytes(), salt, &mut out)
            .map_err(|e| Error::invalid(format!("password hashing: {e}")))?;
        Ok(out)
    }
}

fn verify_password(user: &UserProfile, password: &str) -> bool {
    let (Some(scheme), Ok(salt), Ok(expected)) = (
        HashScheme::parse(&user.scheme),
        hex::decode(&user.salt),
        hex::decode(&user.digest),
    ) else {
        return false;
    };
    match scheme.hash(password, &salt) {
        Ok(actual) => actual.ct_eq(expected.as_slice()).into(),
        Err(_) => false,
    }
}

fn random_hex(len: usize) -> String {
    let mut buf = vec![0u8; len];
    rand::rng().fill_bytes(&mut buf);
    hex::encode(buf)
}

struct Inner {
    users: Arc<Vec<UserProfile>>,
    usernames: HashMap<String, UserId>,
    events: Arc<Vec<SearchEvent>>,
    corpus: Arc<Corpus>,
}

pub struct Store {
    dir: Option<PathBuf>,
    config: StoreConfig,
    inner: Mutex<Inner>,
    sessions: Mutex<HashMap<String, SessionToken>>,
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Store")
            .field("dir", &self.dir)
            .finish_non_exhaustive()
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(format!("opening {}", path.display()), e)),
    };
    let mut rows = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| Error::Corrupt {
            path: path.to_owned(),
            line: n + 1,
            reason: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

fn append_lines(path: &Path, lines: &str) -> Result<()> {
    let ctx = || format!("appending to {}", path.display());
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(ctx(), e))?;
    file.write_all(lines.as_bytes())
        .map_err(|e| Error::io(ctx(), e))?;
    file.sync_data().map_err(|e| Error::io(ctx(), e))
}

impl Store {
    /// A store that lives only in memory.
    pub fn in_memory(corpus: Corpus, config: StoreConfig) -> Self {
        Store {
            dir: None,
            config,
            inner: Mutex::new(Inner {
                users: Arc::default(),
                usernames: HashMap::new(),
                events: Arc::default(),
                corpus: Arc::new(corpus),
            }),
            sessions: Mutex::new(HashMap::new()),
        }
    }

    /// Creates `dir` if needed and records the stopword list the corpus is
    /// profiled with. An existing store keeps its list; asking for a
    /// different one is a conflict.
    pub fn init(dir: &Path, stopwords: Option<&Stopwords>) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let path = dir.join(STOPWORDS_FILE);
        if path.exists() {
            if let Some(requested) = stopwords {
                if &Stopwords::load(&path)? != requested {
                    return Err(Error::Conflict(format!(
                        "{} was profiled with a different stopword list",
                        dir.display()
                    )));
                }
            }
            return Ok(());
        }
        let list = stopwords.cloned().unwrap_or_default();
        fs::write(&path, list.to_file_contents())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    /// Loads an existing store directory, validating every record.
    pub fn open(dir: &Path, config: StoreConfig) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::io(
                format!("opening store {}", dir.display()),
                std::io::Error::new(std::io::ErrorKind::NotFound, "no such store directory"),
            ));
        }
        let stop_path = dir.join(STOPWORDS_FILE);
        let stopwords = if stop_path.exists() {
            Stopwords::load(&stop_path)?
        } else {
            Stopwords::default()
        };
        let mut corpus = Corpus::new(stopwords, crate::textstat::DEFAULT_KEYWORDS)?;
        let corpus_path = dir.join(CORPUS_FILE);
        for (n, doc) in read_jsonl::<IndexedDocument>(&corpus_path)?
            .into_iter()
            .enumerate()
        {
            corpus.insert(doc).map_err(|e| Error::Corrupt {
                path: corpus_path.clone(),
                line: n + 1,
                reason: e.to_string(),
            })?;
        }

        let users_path = dir.join(USERS_FILE);
        let users: Vec<UserProfile> = read_jsonl(&users_path)?;
        let mut usernames = HashMap::new();
        for (n, u) in users.iter().enumerate() {
            let corrupt = |reason: &str| Error::Corrupt {
                path: users_path.clone(),
                line: n + 1,
                reason: reason.to_owned(),
            };
            if u.user_id != UserId(n as u64 + 1) {
                return Err(corrupt("user ids must be 1, 2, 3, ... in file order"));
            }
            if usernames.insert(u.username.clone(), u.user_id).is_some() {
                return Err(corrupt("duplicate username"));
            }
        }

        let events_path = dir.join(EVENTS_FILE);
        let events: Vec<SearchEvent> = read_jsonl(&events_path)?;
        for (n, e) in events.iter().enumerate() {
            let corrupt = |reason: &str| Error::Corrupt {
                path: events_path.clone(),
                line: n + 1,
                reason: reason.to_owned(),
            };
            if e.event_id != EventId(n as u64 + 1) {
                return Err(corrupt("event ids must be 1, 2, 3, ... in file order"));
            }
            if e.left_at < e.clicked_at {
                return Err(corrupt("left_at precedes clicked_at"));
            }
            if user_index(e.user_id).is_none_or(|i| i >= users.len()) {
                return Err(corrupt("unknown user_id"));
            }
            if e.doc_id.is_some_and(|d| corpus.get(d).is_none()) {
                return Err(corrupt("unknown doc_id"));
            }
        }

        Ok(Store {
            dir: Some(dir.to_owned()),
            config,
            inner: Mutex::new(Inner {
                users: Arc::new(users),
                usernames,
                events: Arc::new(events),
                corpus: Arc::new(corpus),
            }),
            sessions: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn snapshot(&self) -> StoreSnapshot {
        let inner = lock(&self.inner);
        StoreSnapshot {
            users: Arc::clone(&inner.users),
            events: Arc::clone(&inner.events),
            corpus: Arc::clone(&inner.corpus),
        }
    }

    fn persist(&self, file: &str, lines: &str) -> Result<()> {
        match &self.dir {
            Some(dir) => append_lines(&dir.join(file), lines),
            None => Ok(()),
        }
    }

    /// Profiles and adds a batch of documents with `keywords` keywords each.
    /// Either the whole batch is added or none of it.
    pub fn ingest(&self, docs: &[SourceDocument], keywords: usize) -> Result<Vec<DocumentRecord>> {
        let mut inner = lock(&self.inner);
        let mut corpus = Corpus::clone(&inner.corpus);
        corpus.set_keywords_per_doc(keywords)?;
        let mut records = Vec::with_capacity(docs.len());
        for doc in docs {
            records.push(corpus.ingest_document(&doc.uri, &doc.title, &doc.body)?);
        }
        let rows = records
            .iter()
            .map(|r| corpus.get(r.doc_id).expect("just ingested"));
        self.persist(CORPUS_FILE, &to_jsonl(rows)?)?;
        inner.corpus = Arc::new(corpus);
        Ok(records)
    }

    pub fn register_user(&self, new: &NewUser) -> Result<UserId> {
        if new.username.trim().is_empty() {
            return Err(Error::invalid("username must not be empty"));
        }
        if new.password.is_empty() {
            return Err(Error::invalid("password must not be empty"));
        }
        if lock(&self.inner).usernames.contains_key(&new.username) {
            return Err(Error::Conflict(format!(
                "username {} is taken",
                new.username
            )));
        }

        // Hash outside the lock; it is deliberately slow.
        let scheme = HashScheme::default();
        let mut salt = [0u8; SALT_LEN];
        rand::rng().fill_bytes(&mut salt);
        let digest = scheme.hash(&new.password, &salt)?;

        let mut inner = lock(&self.inner);
        if inner.usernames.contains_key(&new.username) {
            return Err(Error::Conflict(format!(
                "username {} is taken",
                new.username
            )));
        }
        let user_id = UserId(inner.users.len() as u64 + 1);
        let profile = UserProfile {
            user_id,
            username: new.username.clone(),
            digest: hex::encode(digest),
            salt: hex::encode(salt),
            scheme: scheme.name(),
            address: new.address.clone(),
            occupation: new.occupation.clone(),
            qualification: new.qualification.clone(),
            interests: new.interests.clone(),
        };
        self.persist(USERS_FILE, &to_jsonl(std::iter::once(&profile))?)?;
        inner.usernames.insert(profile.username.clone(), user_id);
        Arc::make_mut(&mut inner.users).push(profile);
        Ok(user_id)
    }

    /// Issues a session token valid for the configured lifetime.
    ///
    /// Unknown users and wrong passwords fail identically, and both pay for a
    /// full password hash.
    pub fn authenticate(
        &self,
        username: &str,
        password: &str,
        now: Timestamp,
    ) -> Result<SessionToken> {
        let user = {
            let inner = lock(&self.inner);
            inner
                .usernames
                .get(username)
                .and_then(|&id| user_index(id))
                .map(|i| inner.users[i].clone())
        };
        let ok = match &user {
            Some(u) => verify_password(u, password),
            None => {
                let _ = HashScheme::default().hash(password, &[0u8; SALT_LEN]);
                false
            }
        };
        let Some(user) = user.filter(|_| ok) else {
            return Err(Error::AuthFailure);
        };
        let token = SessionToken {
            token: random_hex(32),
            user_id: user.user_id,
            expires_at: now.saturating_add(self.config.token_ttl_secs),
        };
        lock(&self.sessions).insert(token.token.clone(), token.clone());
        Ok(token)
    }

    /// Resolves a bearer token; expired tokens are dropped and rejected.
    pub fn validate_token(&self, token: &str, now: Timestamp) -> Result<UserId> {
        let mut sessions = lock(&self.sessions);
        match sessions.get(token) {
            Some(s) if now < s.expires_at => Ok(s.user_id),
            Some(_) => {
                sessions.remove(token);
                Err(Error::Unauthorized)
            }
            None => Err(Error::Unauthorized),
        }
    }

    pub fn append_event(&self, event: &NewEvent) -> Result<EventId> {
        Ok(self.append_events(std::slice::from_ref(event))?[0])
    }

    /// Validates every event, then appends them all; ids are consecutive.
    pub fn append_events(&self, events: &[NewEvent]) -> Result<Vec<EventId>> {
        let mut inner = lock(&self.inner);
        let first = inner.events.len() as u64 + 1;
        let mut rows = Vec::with_capacity(events.len());
        for (next, ev) in (first..).zip(events) {
            if ev.left_at < ev.clicked_at {
                return Err(Error::invalid(format!(
                    "left_at {} precedes clicked_at {}",
                    ev.left_at, ev.clicked_at
                )));
            }
            if user_index(ev.user_id).is_none_or(|i| i >= inner.users.len()) {
                return Err(Error::Reference(format!("user {}", ev.user_id)));
            }
            if let Some(doc) = ev.doc_id {
                if inner.corpus.get(doc).is_none() {
                    return Err(Error::Reference(format!("document {doc}")));
                }
            }
            rows.push(SearchEvent {
                event_id: EventId(next),
                user_id: ev.user_id,
                query: inner.corpus.normalize_query(&ev.query),
                doc_id: ev.doc_id,
                clicked_at: ev.clicked_at,
                left_at: ev.left_at,
            });
        }
        self.persist(EVENTS_FILE, &to_jsonl(rows.iter())?)?;
        let ids = rows.iter().map(|r| r.event_id).collect();
        Arc::make_mut(&mut inner.events).extend(rows);
        Ok(ids)
    }

    /// An in-memory copy of the current state, for what-if replays.
    pub fn fork(&self) -> Store {
        let inner = lock(&self.inner);
        Store {
            dir: None,
            config: self.config.clone(),
            inner: Mutex::new(Inner {
                users: Arc::clone(&inner.users),
                usernames: inner.usernames.clone(),
                events: Arc::clone(&inner.events),
                corpus: Arc::clone(&inner.corpus),
            }),
            sessions: Mutex::new(HashMap::new()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::DocId;

    fn corpus() -> Corpus {
        let mut c = Corpus::default();
        c.ingest_document("d1", "One", "card card").unwrap();
        c.ingest_document("d2", "Two", "game game game").unwrap();
        c
    }

    fn click(user: UserId, doc: u64, at: i64, left: i64) -> NewEvent {
        NewEvent {
            user_id: user,
            query: "Card".into(),
            doc_id: Some(DocId(doc)),
            clicked_at: at,
            left_at: left,
        }
    }

    #[test]
    fn register_and_authenticate() {
        let store = Store::in_memory(corpus(), StoreConfig::default());
        let mut alice = NewUser::new("alice", "pw1");
        alice.interests = vec!["cards".into()];
        let id = store.register_user(&alice).unwrap();
        assert_eq!(id, UserId(1));

        let snap = store.snapshot();
        let profile = snap.user(id).unwrap();
        assert_ne!(profile.digest, "pw1");
        assert!(!profile.digest.contains("pw1"));
        assert!(verify_password(profile, "pw1"));
        assert!(!verify_password(profile, "pw2"));
        assert!(profile.scheme.starts_with("argon2id"));

        assert!(matches!(
            store.register_user(&alice),
            Err(Error::Conflict(_))
        ));
        assert!(matches!(
            store.register_user(&NewUser::new("", "x")),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            store.register_user(&NewUser::new("bob", "")),
            Err(Error::InvalidArgument(_))
        ));

        let tok = store.authenticate("alice", "pw1", 1000).unwrap();
        assert_eq!(tok.user_id, id);
        assert_eq!(tok.expires_at, 1000 + DEFAULT_TOKEN_TTL_SECS);
        assert_eq!(tok.token.len(), 64);
        assert_eq!(store.validate_token(&tok.token, 1001).unwrap(), id);
        assert!(matches!(
            store.validate_token(&tok.token, tok.expires_at),
            Err(Error::Unauthorized)
        ));

        let wrong = store.authenticate("alice", "wrong", 0).unwrap_err();
        let nobody = store.authenticate("nobody", "pw", 0).unwrap_err();
        assert!(matches!(wrong, Error::AuthFailure));
        assert_eq!(wrong.to_string(), nobody.to_string());
    }

    #[test]
    fn new_user_debug_hides_password() {
        let dbg = format!("{:?}", NewUser::new("alice", "s3cret-pw"));
        assert!(!dbg.contains("s3cret-pw"));
    }

    #[test]
    fn events_get_monotone_ids_and_validation() {
        let store = Store::in_memory(corpus(), StoreConfig::default());
        let u = store.register_user(&NewUser::new("u", "p")).unwrap();
        assert_eq!(store.append_event(&click(u, 1, 0, 5)).unwrap(), EventId(1));
        assert_eq!(
            store.append_event(&click(u, 2, 10, 10)).unwrap(),
            EventId(2)
        );
        assert!(matches!(
            store.append_event(&click(u, 1, 10, 9)),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            store.append_event(&click(u, 9999, 0, 1)),
            Err(Error::Reference(_))
        ));
        assert!(matches!(
            store.append_event(&click(UserId(7), 1, 0, 1)),
            Err(Error::Reference(_))
        ));
        let snap = store.snapshot();
        assert_eq!(snap.events().len(), 2);
        assert_eq!(snap.events()[0].query, "card");
        assert_eq!(snap.events()[0].dwell_seconds(), 5);
    }

    #[test]
    fn batch_append_is_all_or_nothing() {
        let store = Store::in_memory(corpus(), StoreConfig::default());
        let u = store.register_user(&NewUser::new("u", "p")).unwrap();
        let batch = [click(u, 1, 0, 1), click(u, 42, 0, 1)];
        assert!(store.append_events(&batch).is_err());
        assert!(store.snapshot().events().is_empty());
    }

    #[test]
    fn snapshots_are_isolated() {
        let store = Store::in_memory(Corpus::default(), StoreConfig::default());
        let empty = store.snapshot();
        assert!(empty.users().is_empty() && empty.events().is_empty() && empty.corpus().is_empty());

        store
            .ingest(
                &[SourceDocument {
                    uri: "d1".into(),
                    title: "t".into(),
                    body: "card".into(),
                }],
                10,
            )
            .unwrap();
        let u = store.register_user(&NewUser::new("u", "p")).unwrap();
        let a = store.snapshot();
        let b = store.snapshot();
        assert_eq!(a, b);
        store.append_event(&click(u, 1, 0, 1)).unwrap();
        assert!(a.events().is_empty());
        assert_eq!(store.snapshot().events().len(), 1);
        assert!(empty.corpus().is_empty());
    }

    #[test]
    fn search_count_is_derived_from_records() {
        let store = Store::in_memory(corpus(), StoreConfig::default());
        let u = store.register_user(&NewUser::new("u", "p")).unwrap();
        for t in 0..3 {
            store
                .append_event(&NewEvent {
                    user_id: u,
                    query: "the CARD".into(),
                    doc_id: None,
                    clicked_at: t,
                    left_at: t,
                })
                .unwrap();
        }
        store.append_event(&click(u, 1, 5, 6)).unwrap();
        assert_eq!(store.snapshot().search_count(u, "card"), 3);
    }

    #[test]
    fn reload_reproduces_snapshot_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store");
        Store::init(&path, None).unwrap();
        let store = Store::open(&path, StoreConfig::default()).unwrap();
        store
            .ingest(
                &[
                    SourceDocument {
                        uri: "a".into(),
                        title: "A".into(),
                        body: "card card".into(),
                    },
                    SourceDocument {
                        uri: "b".into(),
                        title: "B".into(),
                        body: "game".into(),
                    },
                ],
                10,
            )
            .unwrap();
        let u = store.register_user(&NewUser::new("alice", "pw")).unwrap();
        store.append_event(&click(u, 2, 100, 160)).unwrap();
        store.append_event(&click(u, 1, 200, 200)).unwrap();
        let before = store.snapshot();
        drop(store);

        let reopened = Store::open(&path, StoreConfig::default()).unwrap();
        let after = reopened.snapshot();
        assert_eq!(before, after);
        let on_disk = fs::read_to_string(path.join(EVENTS_FILE)).unwrap();
        assert_eq!(on_disk, after.events_jsonl().unwrap());
        assert!(reopened.authenticate("alice", "pw", 0).is_ok());

        // Ingest continues numbering after reload.
        let recs = reopened
            .ingest(
                &[SourceDocument {
                    uri: "c".into(),
                    title: "C".into(),
                    body: "x".into(),
                }],
                10,
            )
            .unwrap();
        assert_eq!(recs[0].doc_id, DocId(3));
        let again = Store::open(&path, StoreConfig::default()).unwrap();
        assert_eq!(again.snapshot().corpus().len(), 3);
    }

    #[test]
    fn persisted_field_order() {
        let dir = tempfile::tempdir().unwrap();
        Store::init(dir.path(), None).unwrap();
        let store = Store::open(dir.path(), StoreConfig::default()).unwrap();
        store
            .ingest(
                &[SourceDocument {
                    uri: "a".into(),
                    title: "A".into(),
                    body: "card".into(),
                }],
                10,
            )
            .unwrap();
        let u = store.register_user(&NewUser::new("alice", "pw")).unwrap();
        store.append_event(&click(u, 1, 1, 2)).unwrap();
        let users = fs::read_to_string(dir.path().join(USERS_FILE)).unwrap();
        let keys: Vec<&str> = [
            "user_id",
            "username",
            "digest",
            "salt",
            "scheme",
            "address",
            "occupation",
            "qualification",
            "interests",
        ]
        .to_vec();
        let positions: Vec<usize> = keys
            .iter()
            .map(|k| users.find(&format!("\"{k}\"")).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        let events = fs::read_to_string(dir.path().join(EVENTS_FILE)).unwrap();
        assert_eq!(
            events,
            "{\"event_id\":1,\"user_id\":1,\"query\":\"card\",\"doc_id\":1,\"clicked_at\":1,\"left_at\":2}\n"
        );
        let corpus = fs::read_to_string(dir.path().join(CORPUS_FILE)).unwrap();
        assert_eq!(
            corpus,
            "{\"doc_id\":1,\"uri\":\"a\",\"title\":\"A\",\"keywords\":[[\"card\",1]]}\n"
        );
    }

    #[test]
    fn open_rejects_missing_dir_and_corrupt_logs() {
        let dir = tempfile::tempdir().unwrap();
        assert!(Store::open(&dir.path().join("nope"), StoreConfig::default()).is_err());
        fs::write(
            dir.path().join(EVENTS_FILE),
            "{\"event_id\":2,\"user_id\":1,\"query\":\"q\",\"doc_id\":null,\"clicked_at\":0,\"left_at\":0}\n",
        )
        .unwrap();
        assert!(matches!(
            Store::open(dir.path(), StoreConfig::default()),
            Err(Error::Corrupt { line: 1, .. })
        ));
    }

    #[test]
    fn init_refuses_a_different_stopword_list() {
        let dir = tempfile::tempdir().unwrap();
        let custom: Stopwords = ["foo"].into_iter().collect();
        Store::init(dir.path(), Some(&custom)).unwrap();
        Store::init(dir.path(), Some(&custom)).unwrap();
        Store::init(dir.path(), None).unwrap();
        assert!(matches!(
            Store::init(dir.path(), Some(&Stopwords::default())),
            Err(Error::Conflict(_))
        ));
        let store = Store::open(dir.path(), StoreConfig::default()).unwrap();
        assert!(store.snapshot().corpus().stopwords().contains("foo"));
    }
}
