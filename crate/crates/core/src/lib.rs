//! Personalized keyword search over a local corpus.
//!
//! Documents are reduced to small keyword profiles ([`textstat`], [`index`]).
//! Users search those profiles, and their clicks and dwell times are kept in an
//! append-only log ([`store`]). The [`ranker`] turns that log into per-link
//! weights that move previously used links to the top of the next identical
//! search, while never dropping the links the user ignored. The [`miner`] runs
//! GSP and its date- and dwell-weighted variants over the same click log, and
//! [`service`] exposes everything over an authenticated JSON API.

pub mod error;
pub mod index;
pub mod miner;
pub mod ranker;
pub mod service;
pub mod store;
pub mod textstat;

pub use error::{Error, Result};
pub use index::{Corpus, DocId, DocumentRecord, IndexedDocument, MatchResult};
pub use miner::{FrequentSet, MinSupport, Pattern, Sequence, SequenceItem, Weighting};
pub use ranker::{LinkScore, RankedResult, WeightContext};
pub use store::{
    NewEvent, NewUser, SearchEvent, SessionToken, Store, StoreSnapshot, UserId, UserProfile,
};
pub use textstat::{KeywordProfile, Stopwords, TextStats};

/// Integer UTC seconds.
pub type Timestamp = i64;
