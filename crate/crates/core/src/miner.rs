//! Sequential pattern mining over click sessions.
//!
//! One level-wise GSP loop serves all three algorithms; they differ only in
//! what a supporting sequence adds to a candidate's support:
//!
//! * [`Weighting::Unit`] (GSP) adds 1.
//! * [`Weighting::ByDate`] (WTGSP) adds the recency weight of the mean click
//!   time of the pattern's leftmost embedding in the sequence.
//! * [`Weighting::ByMinutes`] (WMGSP) adds the dwell weight of the mean dwell
//!   of that embedding, normalized by the context window in minutes.
//!
//! Items are single documents. Candidates of length `k > 2` come from joining
//! two frequent `(k-1)`-patterns that overlap in `k-2` items; candidates with a
//! contiguous `(k-1)`-subsequence that is not frequent are pruned.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::DocId;
use crate::ranker::{get_weight_minutes, recency_weight, WeightContext};
use crate::store::{SearchEvent, StoreSnapshot, UserId};
use crate::Timestamp;

pub const DEFAULT_SESSION_GAP_SECS: i64 = 30 * 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceItem {
    pub doc_id: DocId,
    pub clicked_at: Timestamp,
    pub dwell_seconds: i64,
}

/// One user session: clicks in time order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sequence {
    pub user_id: UserId,
    pub session_id: u32,
    pub items: Vec<SequenceItem>,
}

impl Sequence {
    pub fn doc_ids(&self) -> impl Iterator<Item = DocId> + '_ {
        self.items.iter().map(|i| i.doc_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub items: Vec<DocId>,
    pub support: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Weighting {
    /// GSP
    Unit,
    /// WTGSP
    ByDate,
    /// WMGSP
    ByMinutes,
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gsp" | "unit" => Ok(Weighting::Unit),
            "wtgsp" | "by_date" => Ok(Weighting::ByDate),
            "wmgsp" | "by_minutes" => Ok(Weighting::ByMinutes),
            _ => Err(Error::invalid(format!(
                "unknown weighting {s:?}; expected gsp, wtgsp or wmgsp"
            ))),
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Unit => "gsp",
            Weighting::ByDate => "wtgsp",
            Weighting::ByMinutes => "wmgsp",
        })
    }
}

/// A support threshold: absolute (`"2"`, `"1.5"`) or a share of the
/// sequence count (`"50%"`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinSupport {
    Absolute(f64),
    Fraction(f64),
}

impl MinSupport {
    pub fn resolve(self, sequence_count: usize) -> f64 {
        match self {
            MinSupport::Absolute(v) => v,
            MinSupport::Fraction(f) => f * sequence_count as f64,
        }
    }
}

impl FromStr for MinSupport {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::invalid(format!("invalid min support {s:?}"));
        let parsed = match s.strip_suffix('%') {
            Some(pct) => {
                MinSupport::Fraction(pct.trim().parse::<f64>().map_err(|_| bad())? / 100.0)
            }
            None => MinSupport::Absolute(s.parse().map_err(|_| bad())?),
        };
        let v = match parsed {
            MinSupport::Absolute(v) | MinSupport::Fraction(v) => v,
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(bad());
        }
        Ok(parsed)
    }
}

/// Splits each user's clicks into sessions wherever two consecutive clicks are
/// more than `session_gap_secs` apart. Search records without a click are
/// skipped. Output is ordered by user id, then session.
pub fn build_sequences(events: &[SearchEvent], session_gap_secs: i64) -> Result<Vec<Sequence>> {
    if session_gap_secs <= 0 {
        return Err(Error::invalid("session gap must be positive"));
    }
    let mut per_user: BTreeMap<UserId, Vec<&SearchEvent>> = BTreeMap::new();
    for e in events.iter().filter(|e| e.doc_id.is_some()) {
        per_user.entry(e.user_id).or_default().push(e);
    }

    let mut sequences = Vec::new();
    for (user_id, mut clicks) in per_user {
        clicks.sort_by_key(|e| (e.clicked_at, e.event_id));
        let mut session_id = 0;
        let mut current: Vec<SequenceItem> = Vec::new();
        for e in clicks {
            if let Some(last) = current.last() {
                if e.clicked_at - last.clicked_at > session_gap_secs {
                    session_id += 1;
                    sequences.push(Sequence {
                        user_id,
                        session_id,
                        items: std::mem::take(&mut current),
                    });
                }
            }
            current.push(SequenceItem {
                doc_id: e.doc_id.expect("filtered above"),
                clicked_at: e.clicked_at,
                dwell_seconds: e.dwell_seconds(),
            });
        }
        if !current.is_empty() {
            session_id += 1;
            sequences.push(Sequence {
                user_id,
                session_id,
                items: current,
            });
        }
    }
    Ok(sequences)
}

/// Sessions from a snapshot, optionally restricted to one user.
pub fn sequences_from_snapshot(
    snapshot: &StoreSnapshot,
    user: Option<UserId>,
    session_gap_secs: i64,
) -> Result<Vec<Sequence>> {
    let mut seqs = build_sequences(snapshot.events(), session_gap_secs)?;
    if let Some(u) = user {
        seqs.retain(|s| s.user_id == u);
    }
    Ok(seqs)
}

/// Weight context spanning every click in the snapshot.
pub fn snapshot_context(snapshot: &StoreSnapshot, floor: f64) -> Result<WeightContext> {
    let ctx = WeightContext::spanning(
        snapshot
            .events()
            .iter()
            .filter(|e| e.doc_id.is_some())
            .map(|e| e.clicked_at),
        floor,
    )?;
    match ctx {
        Some(ctx) => Ok(ctx),
        None => WeightContext::new(0, 0, floor),
    }
}

/// Positions of the greedy leftmost embedding of `pattern` in `items`.
fn leftmost_embedding(items: &[SequenceItem], pattern: &[DocId]) -> Option<Vec<usize>> {
    let mut positions = Vec::with_capacity(pattern.len());
    let mut from = 0;
    for want in pattern {
        let offset = items[from..].iter().position(|i| i.doc_id == *want)?;
        positions.push(from + offset);
        from += offset + 1;
    }
    Some(positions)
}

/// Whether `pattern` occurs in `seq` in order, not necessarily contiguously.
pub fn contains(seq: &Sequence, pattern: &[DocId]) -> bool {
    leftmost_embedding(&seq.items, pattern).is_some()
}

fn check_uniform_length<'a, I: IntoIterator<Item = &'a Vec<DocId>>>(patterns: I) -> Result<usize> {
    let mut len = None;
    for p in patterns {
        if p.is_empty() {
            return Err(Error::invalid("patterns must be nonempty"));
        }
        match len {
            None => len = Some(p.len()),
            Some(l) if l != p.len() => {
                return Err(Error::invalid(format!(
                    "mixed pattern lengths {l} and {}",
                    p.len()
                )))
            }
            Some(_) => {}
        }
    }
    Ok(len.unwrap_or(0))
}

/// Length-`k` candidates from the frequent `(k-1)`-patterns.
pub fn generate_candidates(frequent: &BTreeSet<Vec<DocId>>) -> Result<BTreeSet<Vec<DocId>>> {
    let prev_len = check_uniform_length(frequent)?;
    let mut out = BTreeSet::new();
    if prev_len == 0 {
        return Ok(out);
    }
    if prev_len == 1 {
        for x in frequent {
            for y in frequent {
                out.insert(vec![x[0], y[0]]);
            }
        }
        return Ok(out);
    }

    let mut by_prefix: HashMap<&[DocId], Vec<&Vec<DocId>>> = HashMap::new();
    for s in frequent {
        by_prefix.entry(&s[..prev_len - 1]).or_default().push(s);
    }
    for s1 in frequent {
        let Some(partners) = by_prefix.get(&s1[1..]) else {
            continue;
        };
        for s2 in partners {
            let mut cand = s1.clone();
            cand.push(*s2.last().expect("nonempty"));
            let keeps_frequent_subsequences = frequent.contains(&cand[1..].to_vec())
                && frequent.contains(&cand[..prev_len].to_vec());
            if keeps_frequent_subsequences {
                out.insert(cand);
            }
        }
    }
    Ok(out)
}

/// Frequent patterns grouped by length.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequentSet {
    pub by_length: BTreeMap<usize, Vec<Pattern>>,
    pub min_sup: f64,
}

/// One line of a pattern report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternReport {
    pub items: Vec<DocId>,
    pub support: f64,
    pub k: usize,
}

impl FrequentSet {
    pub fn is_empty(&self) -> bool {
        self.by_length.values().all(Vec::is_empty)
    }

    pub fn len(&self) -> usize {
        self.by_length.values().map(Vec::len).sum()
    }

    pub fn patterns(&self) -> impl Iterator<Item = &Pattern> {
        self.by_length.values().flatten()
    }

    pub fn support(&self, items: &[DocId]) -> Option<f64> {
        self.by_length
            .get(&items.len())?
            .iter()
            .find(|p| p.items == items)
            .map(|p| p.support)
    }

    /// Sorted by length, then descending support, then items.
    pub fn report(&self) -> Vec<PatternReport> {
        let mut rows: Vec<PatternReport> = self
            .patterns()
            .map(|p| PatternReport {
                items: p.items.clone(),
                support: p.support,
                k: p.items.len(),
            })
            .collect();
        rows.sort_by(|a, b| {
            a.k.cmp(&b.k)
                .then(b.support.total_cmp(&a.support))
                .then_with(|| a.items.cmp(&b.items))
        });
        rows
    }

    /// The report as newline-delimited JSON.
    pub fn to_ndjson(&self) -> Result<String> {
        let mut out = String::new();
        for row in self.report() {
            out.push_str(&serde_json::to_string(&row)?);
            out.push('\n');
        }
        Ok(out)
    }
}

fn mean<I: ExactSizeIterator<Item = f64>>(values: I) -> f64 {
    let n = values.len() as f64;
    values.sum::<f64>() / n
}

fn contribution(
    seq: &Sequence,
    pattern: &[DocId],
    weighting: Weighting,
    ctx: &WeightContext,
) -> Result<Option<f64>> {
    let Some(pos) = leftmost_embedding(&seq.items, pattern) else {
        return Ok(None);
    };
    let w = match weighting {
        Weighting::Unit => 1.0,
        Weighting::ByDate => {
            let t = mean(pos.iter().map(|&i| seq.items[i].clicked_at as f64));
            recency_weight(t.clamp(ctx.min_date as f64, ctx.max_date as f64), ctx)
        }
        Weighting::ByMinutes => {
            let dwell = mean(
                pos.iter()
                    .map(|&i| seq.items[i].dwell_seconds as f64 / 60.0),
            );
            get_weight_minutes(dwell, ctx.window_minutes(), ctx.floor)?
        }
    };
    Ok(Some(w))
}

fn count_level(
    sequences: &[Sequence],
    candidates: &BTreeSet<Vec<DocId>>,
    min_sup: f64,
    weighting: Weighting,
    ctx: &WeightContext,
) -> Result<Vec<Pattern>> {
    let mut support: BTreeMap<&Vec<DocId>, f64> = candidates.iter().map(|c| (c, 0.0)).collect();
    for seq in sequences {
        for (cand, sup) in support.iter_mut() {
            if let Some(w) = contribution(seq, cand, weighting, ctx)? {
                *sup += w;
            }
        }
    }
    Ok(support
        .into_iter()
        .filter(|&(_, s)| s >= min_sup)
        .map(|(items, support)| Pattern {
            items: items.clone(),
            support,
        })
        .collect())
}

/// Level-wise mining of every pattern whose (weighted) support reaches `min_sup`.
///
/// Recency weights clamp each mean click time into `ctx`'s date range, so a
/// zero-width context gives every occurrence weight `ctx.floor`.
pub fn mine(
    sequences: &[Sequence],
    min_sup: f64,
    weighting: Weighting,
    ctx: &WeightContext,
) -> Result<FrequentSet> {
    if !(min_sup.is_finite() && min_sup > 0.0) {
        return Err(Error::invalid(format!(
            "min_sup must be positive, got {min_sup}"
        )));
    }
    let mut by_length = BTreeMap::new();

    let singles: BTreeSet<Vec<DocId>> = sequences
        .iter()
        .flat_map(|s| s.doc_ids())
        .map(|d| vec![d])
        .collect();
    let mut frequent = count_level(sequences, &singles, min_sup, weighting, ctx)?;
    let mut k = 1;
    while !frequent.is_empty() {
        let keys: BTreeSet<Vec<DocId>> = frequent.iter().map(|p| p.items.clone()).collect();
        by_length.insert(k, frequent);
        k += 1;
        let candidates = generate_candidates(&keys)?;
        frequent = count_level(sequences, &candidates, min_sup, weighting, ctx)?;
    }
    Ok(FrequentSet { by_length, min_sup })
}
