//! Expected activity of a user towards a topic at a given hour.
//!
//! ```text
//! v(c_s, K) / v(K)  *  v(s, h) / v(c_s, h)  *  v(K, d, h) / |D|
//! ```
//!
//! where `c_s` is the user's community and `K` sums over the topic's
//! hashtags. The last factor divides a single day's count by the number of
//! days; [`LinkPredictionMode::MeanDay`] uses `v(K, h) / |D|` instead.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{dims, DetectError};
use crate::cube::{CubeOp, CubeStore, Partition, Selector, Trace};

const UNASSIGNED: &str = "(unassigned)";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkPredictionMode {
    /// `v(K, d, h) / |D|`.
    #[default]
    Literal,
    /// `v(K, h) / |D|`: the topic's mean volume at hour h.
    MeanDay,
}

impl std::str::FromStr for LinkPredictionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(Self::Literal),
            "mean-day" => Ok(Self::MeanDay),
            other => Err(format!("unknown link prediction mode `{other}` (expected literal or mean-day)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkPrediction {
    pub spreader: String,
    pub community: String,
    pub hashtags: Vec<String>,
    pub day: String,
    pub hour: u8,
    pub mode: LinkPredictionMode,
    /// `v(c_s, K) / v(K)`; `None` when `v(K) = 0`.
    pub community_topic_share: Option<f64>,
    /// `v(s, h) / v(c_s, h)`; `None` when the community is silent at h.
    pub user_hour_share: Option<f64>,
    /// Topic volume factor.
    pub topic_volume: f64,
    /// Product of the three factors; `None` when unsupported.
    pub expected: Option<f64>,
    pub unsupported: bool,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn keep_only(store: &CubeStore, prefix: Trace, keep: &[&str]) -> Trace {
    prefix.then(CubeOp::aggregate(
        store
            .base()
            .dims()
            .iter()
            .map(|d| d.name())
            .filter(|n| !keep.contains(n)),
    ))
}

pub fn predict_user_topic(
    store: &CubeStore,
    communities: &BTreeMap<String, String>,
    spreader: &str,
    topic: &[String],
    day: &str,
    hour: u8,
    mode: LinkPredictionMode,
) -> Result<LinkPrediction, DetectError> {
    let base = store.base();
    for d in [dims::SPREADER, dims::HASHTAG, dims::DAY, dims::HOUR] {
        base.dim_index(d)?;
    }
    if hour > 23 {
        return Err(DetectError::InvalidHour(hour as u32));
    }
    let community = communities
        .get(spreader)
        .ok_or_else(|| DetectError::UnknownEntity {
            kind: "community member",
            name: spreader.to_owned(),
        })?
        .clone();
    let hashtag_dim = base.dim(dims::HASHTAG)?;
    let topic: BTreeSet<&str> = topic.iter().map(String::as_str).collect();
    if topic.is_empty() {
        return Err(DetectError::UnknownEntity {
            kind: "hashtag",
            name: String::new(),
        });
    }
    if let Some(missing) = topic.iter().find(|k| hashtag_dim.id(k).is_none()) {
        return Err(DetectError::UnknownEntity {
            kind: "hashtag",
            name: (*missing).to_owned(),
        });
    }

    let s_idx = base.dim_index(dims::SPREADER)?;
    let s_dim = &base.dims()[s_idx];
    let mut classes: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for id in base.observed_values(s_idx) {
        let label = s_dim.label(id);
        let class = communities.get(label).map(String::as_str).unwrap_or(UNASSIGNED);
        classes.entry(class).or_default().insert(label.to_owned());
    }
    classes.entry(community.as_str()).or_default();
    let partition = classes
        .into_iter()
        .fold(Partition::new(dims::SPREADER), |p, (c, members)| p.with_class(c, members));

    let on_topic = Trace::new().then(CubeOp::Filter(Selector::keep_all().with(dims::HASHTAG, topic.iter().copied())));
    let by_community = CubeOp::Partition(partition);
    let hour_label = hour.to_string();

    let v_c_k = store
        .materialize(&keep_only(store, on_topic.clone().then(by_community.clone()), &[dims::SPREADER]))?
        .cell_value(&[&community])?;
    let v_k = store.materialize(&keep_only(store, on_topic.clone(), &[]))?.grand_total();
    let v_s_h = store
        .materialize(&keep_only(store, Trace::new(), &[dims::SPREADER, dims::HOUR]))?
        .cell_value(&[spreader, &hour_label])?;
    let v_c_h = store
        .materialize(&keep_only(store, Trace::new().then(by_community), &[dims::SPREADER, dims::HOUR]))?
        .cell_value(&[&community, &hour_label])?;
    let v_topic = match mode {
        LinkPredictionMode::Literal => store
            .materialize(&keep_only(store, on_topic, &[dims::DAY, dims::HOUR]))?
            .cell_value(&[day, &hour_label])?,
        LinkPredictionMode::MeanDay => store
            .materialize(&keep_only(store, on_topic, &[dims::HOUR]))?
            .cell_value(&[&hour_label])?,
    };
    let days = base.observed_values(base.dim_index(dims::DAY)?).len() as f64;

    let community_topic_share = ratio(v_c_k, v_k);
    let user_hour_share = ratio(v_s_h, v_c_h);
    let topic_volume = if days > 0.0 { v_topic as f64 / days } else { 0.0 };
    let expected = match (community_topic_share, user_hour_share) {
        (Some(a), Some(b)) if days > 0.0 => Some(a * b * topic_volume),
        _ => None,
    };
    Ok(LinkPrediction {
        spreader: spreader.to_owned(),
        community,
        hashtags: topic.iter().map(|k| (*k).to_owned()).collect(),
        day: day.to_owned(),
        hour,
        mode,
        community_topic_share,
        user_hour_share,
        topic_volume,
        unsupported: expected.is_none(),
        expected,
    })
}
