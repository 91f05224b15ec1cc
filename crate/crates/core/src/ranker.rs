//! Link weights from clicks and dwell time, and the personalized ordering.
//!
//! Every click a user makes on a result contributes one weight of the form
//! `dwell / window + floor`, so the click count enters through the sum and the
//! time spent through the normalized term. The window of a click is the span of
//! that user's click times for the same search key, over the clicks logged up
//! to and including it. Weights are therefore fixed when a click is logged and
//! later clicks only ever add to a link's score.
//!
//! Links the user has clicked are listed first, heaviest first; links never
//! clicked keep their base order after them. Nothing is filtered out.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{DocId, MatchResult};
use crate::store::{StoreSnapshot, UserId};
use crate::Timestamp;

pub const DEFAULT_FLOOR: f64 = 0.3;

/// Date range for recency weighting plus the constant every weight starts from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightContext {
    pub min_date: Timestamp,
    pub max_date: Timestamp,
    pub floor: f64,
}

fn check_floor(floor: f64) -> Result<()> {
    if floor.is_finite() && floor > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "floor constant must be positive, got {floor}"
        )))
    }
}

impl WeightContext {
    pub fn new(min_date: Timestamp, max_date: Timestamp, floor: f64) -> Result<Self> {
        if max_date < min_date {
            return Err(Error::invalid(format!(
                "max_date {max_date} precedes min_date {min_date}"
            )));
        }
        check_floor(floor)?;
        Ok(WeightContext {
            min_date,
            max_date,
            floor,
        })
    }

    /// The smallest context covering every timestamp; `None` if there are none.
    pub fn spanning<I: IntoIterator<Item = Timestamp>>(
        dates: I,
        floor: f64,
    ) -> Result<Option<Self>> {
        let mut range: Option<(Timestamp, Timestamp)> = None;
        for t in dates {
            range = Some(match range {
                None => (t, t),
                Some((lo, hi)) => (lo.min(t), hi.max(t)),
            });
        }
        range.map(|(lo, hi)| Self::new(lo, hi, floor)).transpose()
    }

    /// `max_date - min_date`, in seconds.
    pub fn window(&self) -> i64 {
        self.max_date - self.min_date
    }

    pub fn window_minutes(&self) -> f64 {
        self.window() as f64 / 60.0
    }
}

/// Recency weight: `(item - min) / (max - min) + floor`, or `floor` for an
/// empty window.
pub fn get_weight_time(item_date: Timestamp, ctx: &WeightContext) -> Result<f64> {
    if item_date < ctx.min_date || item_date > ctx.max_date {
        return Err(Error::invalid(format!(
            "date {item_date} outside [{}, {}]",
            ctx.min_date, ctx.max_date
        )));
    }
    Ok(recency_weight(item_date as f64, ctx))
}

/// The recency formula for an in-range, possibly fractional, time.
pub(crate) fn recency_weight(t: f64, ctx: &WeightContext) -> f64 {
    let window = ctx.window();
    if window == 0 {
        return ctx.floor;
    }
    (t - ctx.min_date as f64) / window as f64 + ctx.floor
}

/// Dwell weight: `min(dwell, window) / window + floor`, or `floor` for an
/// empty window.
pub fn get_weight_minutes(dwell_minutes: f64, window_minutes: f64, floor: f64) -> Result<f64> {
    let non_negative = |v: f64| v >= 0.0; // false for NaN
    if !non_negative(dwell_minutes) || !non_negative(window_minutes) {
        return Err(Error::invalid(format!(
            "dwell {dwell_minutes} and window {window_minutes} must be non-negative"
        )));
    }
    check_floor(floor)?;
    if window_minutes == 0.0 {
        return Ok(floor);
    }
    Ok(dwell_minutes.min(window_minutes) / window_minutes + floor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkScore {
    pub user_id: UserId,
    pub query: String,
    pub doc_id: DocId,
    pub click_count: u32,
    pub total_dwell_minutes: f64,
    pub score: f64,
}

/// Accumulated weights of every link `user_id` clicked for `query`, by doc id.
///
/// `query` is normalized with the snapshot's stopwords before grouping.
pub fn link_scores(
    user_id: UserId,
    query: &str,
    snapshot: &StoreSnapshot,
    floor: f64,
) -> Result<Vec<LinkScore>> {
    check_floor(floor)?;
    let key = snapshot.corpus().normalize_query(query);
    let mut span: Option<(Timestamp, Timestamp)> = None;
    let mut scores: BTreeMap<DocId, LinkScore> = BTreeMap::new();
    let clicks = snapshot
        .events()
        .iter()
        .filter(|e| e.user_id == user_id && e.query == key);
    for event in clicks {
        let Some(doc_id) = event.doc_id else { continue };
        let (lo, hi) = match span {
            None => (event.clicked_at, event.clicked_at),
            Some((lo, hi)) => (lo.min(event.clicked_at), hi.max(event.clicked_at)),
        };
        span = Some((lo, hi));
        let window_minutes = (hi - lo) as f64 / 60.0;
        let weight = get_weight_minutes(event.dwell_minutes(), window_minutes, floor)?;

        let entry = scores.entry(doc_id).or_insert_with(|| LinkScore {
            user_id,
            query: key.clone(),
            doc_id,
            click_count: 0,
            total_dwell_minutes: 0.0,
            score: 0.0,
        });
        entry.click_count += 1;
        entry.total_dwell_minutes += event.dwell_minutes();
        entry.score += weight;
    }
    Ok(scores.into_values().collect())
}

/// One line of a personalized result list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub doc_id: DocId,
    pub uri: String,
    pub title: String,
    /// Accumulated link weight; 0 for links never clicked.
    pub score: f64,
    pub base_strength: u32,
}

/// Reorders base-ordered matches: scored links first by descending score
/// (ties keep base order), then unscored links in base order.
pub fn personalized_order(matches: &[MatchResult], scores: &[LinkScore]) -> Vec<RankedResult> {
    let by_doc: HashMap<DocId, f64> = scores.iter().map(|s| (s.doc_id, s.score)).collect();
    let mut ranked: Vec<(usize, RankedResult)> = matches
        .iter()
        .enumerate()
        .map(|(base, m)| {
            (
                base,
                RankedResult {
                    doc_id: m.doc_id,
                    uri: m.uri.clone(),
                    title: m.title.clone(),
                    score: by_doc.get(&m.doc_id).copied().unwrap_or(0.0),
                    base_strength: m.match_strength,
                },
            )
        })
        .collect();
    ranked.sort_by(|(ia, a), (ib, b)| {
        let clicked_a = a.score > 0.0;
        let clicked_b = b.score > 0.0;
        clicked_b
            .cmp(&clicked_a)
            .then_with(|| {
                if clicked_a && clicked_b {
                    b.score.total_cmp(&a.score)
                } else {
                    Ordering::Equal
                }
            })
            .then(ia.cmp(ib))
    });
    ranked.into_iter().map(|(_, r)| r).collect()
}

/// Matches `query` against the corpus and orders the hits for `user_id`.
pub fn personalized_search(
    snapshot: &StoreSnapshot,
    user_id: UserId,
    query: &str,
    floor: f64,
) -> Result<Vec<RankedResult>> {
    let matches = snapshot.corpus().match_query(query)?;
    let scores = link_scores(user_id, query, snapshot, floor)?;
    Ok(personalized_order(&matches, &scores))
}
