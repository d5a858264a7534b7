//! Topics: hashtag sets sharing abnormal spreaders and abnormal authors.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use super::{dims, DetectError};
use crate::cube::{CubeOp, CubeStore, Selector, Trace};
use crate::deviation::{ContextEvaluation, DeviationFunction, OutlierPolicy};
use crate::estimator::{expected_ratio_product, CoordinateProjection, EstimatorSpec, Term};

/// Spreaders and authors that are positive outliers for one hashtag in at
/// least one (day, hour).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EntityAnomalies {
    pub hashtag: String,
    pub spreaders: BTreeSet<String>,
    pub authors: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Topic {
    pub hashtags: Vec<String>,
    /// Abnormal for every hashtag of the topic.
    pub spreaders: Vec<String>,
    pub authors: Vec<String>,
}

fn all_but(store: &CubeStore, keep: &[&str]) -> CubeOp {
    CubeOp::aggregate(
        store
            .base()
            .dims()
            .iter()
            .map(|d| d.name())
            .filter(|n| !keep.contains(n)),
    )
}

/// Per-(entity, day, hour) usage of `hashtag` against the hashtag's volume
/// at (d, h) split by the entity's usual share of hour h:
/// `v(k, d, h) v(x, h) / v(h)`.
fn abnormal_entities(
    store: &CubeStore,
    hashtag: &str,
    entity: &str,
    function: DeviationFunction,
    policy: OutlierPolicy,
) -> Result<BTreeSet<String>, DetectError> {
    let only_k = CubeOp::Filter(Selector::keep_all().with(dims::HASHTAG, [hashtag]));
    let obs_trace = Trace::new()
        .then(only_k.clone())
        .then(all_but(store, &[entity, dims::DAY, dims::HOUR]));
    let obs = store.materialize(&obs_trace)?;
    if obs.is_empty() {
        return Ok(BTreeSet::new());
    }
    let spec = EstimatorSpec::new(vec![
        Term::numerator(
            Trace::new()
                .then(only_k)
                .then(all_but(store, &[dims::HASHTAG, dims::DAY, dims::HOUR])),
            CoordinateProjection::new()
                .fixed(dims::HASHTAG, hashtag)
                .copy(dims::DAY)
                .copy(dims::HOUR),
        ),
        Term::numerator(
            Trace::new().then(all_but(store, &[entity, dims::HOUR])),
            CoordinateProjection::new().copy(entity).copy(dims::HOUR),
        ),
        Term::denominator(
            Trace::new().then(all_but(store, &[dims::HOUR])),
            CoordinateProjection::new().copy(dims::HOUR),
        ),
    ]);
    let field = expected_ratio_product(store, &obs, &spec)?;
    let eval = ContextEvaluation::from_field(&field, function, policy);
    let idx = eval.dim_index(entity).expect("entity dimension");
    Ok(eval
        .outliers()
        .positive()
        .map(|o| eval.dims[idx].label(eval.cells[o.index].coord[idx]).to_owned())
        .collect())
}

pub fn hashtag_entity_anomalies(
    store: &CubeStore,
    hashtag: &str,
    function: DeviationFunction,
    policy: OutlierPolicy,
) -> Result<EntityAnomalies, DetectError> {
    let base = store.base();
    for d in [dims::SPREADER, dims::AUTHOR, dims::HASHTAG, dims::DAY, dims::HOUR] {
        base.dim_index(d)?;
    }
    if base.dim(dims::HASHTAG)?.id(hashtag).is_none() {
        return Err(DetectError::UnknownEntity {
            kind: "hashtag",
            name: hashtag.to_owned(),
        });
    }
    Ok(EntityAnomalies {
        hashtag: hashtag.to_owned(),
        spreaders: abnormal_entities(store, hashtag, dims::SPREADER, function, policy)?,
        authors: abnormal_entities(store, hashtag, dims::AUTHOR, function, policy)?,
    })
}

fn topic_of(members: &[&EntityAnomalies], spreaders: BTreeSet<String>, authors: BTreeSet<String>) -> Topic {
    Topic {
        hashtags: members.iter().map(|m| m.hashtag.clone()).collect(),
        spreaders: spreaders.into_iter().collect(),
        authors: authors.into_iter().collect(),
    }
}

fn meet(a: &BTreeSet<String>, b: &BTreeSet<String>) -> BTreeSet<String> {
    a.intersection(b).cloned().collect()
}

/// Every `n`-subset of `sets` whose spreader and author intersections are
/// both non-empty. Pairs with an empty intersection are pruned up front and
/// a branch stops as soon as a running intersection empties, which is sound
/// because intersections only shrink as hashtags are added.
pub fn enumerate_topics(sets: &[EntityAnomalies], n: usize) -> Vec<Topic> {
    let mut sorted: Vec<&EntityAnomalies> = sets
        .iter()
        .filter(|s| !s.spreaders.is_empty() && !s.authors.is_empty())
        .collect();
    sorted.sort_by(|a, b| a.hashtag.cmp(&b.hashtag));
    sorted.dedup_by(|a, b| a.hashtag == b.hashtag);
    let m = sorted.len();
    if n == 0 || n > m {
        return Vec::new();
    }
    let linked: Vec<Vec<bool>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    !sorted[i].spreaders.is_disjoint(&sorted[j].spreaders)
                        && !sorted[i].authors.is_disjoint(&sorted[j].authors)
                })
                .collect()
        })
        .collect();

    struct Walk<'a> {
        sets: Vec<&'a EntityAnomalies>,
        linked: Vec<Vec<bool>>,
        n: usize,
        chosen: Vec<usize>,
        out: Vec<Topic>,
    }

    fn extend(w: &mut Walk<'_>, start: usize, spreaders: &BTreeSet<String>, authors: &BTreeSet<String>) {
        if w.chosen.len() == w.n {
            let members: Vec<&EntityAnomalies> = w.chosen.iter().map(|&i| w.sets[i]).collect();
            w.out.push(topic_of(&members, spreaders.clone(), authors.clone()));
            return;
        }
        let remaining = w.n - w.chosen.len();
        for j in start..=w.sets.len() - remaining {
            if !w.chosen.iter().all(|&i| w.linked[i][j]) {
                continue;
            }
            let s = meet(spreaders, &w.sets[j].spreaders);
            if s.is_empty() {
                continue;
            }
            let a = meet(authors, &w.sets[j].authors);
            if a.is_empty() {
                continue;
            }
            w.chosen.push(j);
            extend(w, j + 1, &s, &a);
            w.chosen.pop();
        }
    }

    let mut walk = Walk {
        sets: sorted,
        linked,
        n,
        chosen: Vec::with_capacity(n),
        out: Vec::new(),
    };
    for i in 0..=m - n {
        let (s, a) = (walk.sets[i].spreaders.clone(), walk.sets[i].authors.clone());
        walk.chosen.push(i);
        extend(&mut walk, i + 1, &s, &a);
        walk.chosen.pop();
    }
    walk.out
}

/// Exhaustive reference: intersects every `n`-combination, no pruning.
pub fn brute_force_topics(sets: &[EntityAnomalies], n: usize) -> Vec<Topic> {
    let mut sorted: Vec<&EntityAnomalies> = sets.iter().collect();
    sorted.sort_by(|a, b| a.hashtag.cmp(&b.hashtag));
    sorted.dedup_by(|a, b| a.hashtag == b.hashtag);
    let m = sorted.len();
    let mut out = Vec::new();
    if n == 0 || n > m {
        return out;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let members: Vec<&EntityAnomalies> = idx.iter().map(|&i| sorted[i]).collect();
        let mut s = members[0].spreaders.clone();
        let mut a = members[0].authors.clone();
        for m in &members[1..] {
            s = meet(&s, &m.spreaders);
            a = meet(&a, &m.authors);
        }
        if !s.is_empty() && !a.is_empty() {
            out.push(topic_of(&members, s, a));
        }
        // next combination in lexicographic order
        let Some(i) = (0..n).rev().find(|&i| idx[i] != i + m - n) else {
            break;
        };
        idx[i] += 1;
        for j in i + 1..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
    out
}

/// Topics of size `n` among `candidates`, in lexicographic hashtag order.
pub fn discover_topics(
    store: &CubeStore,
    candidates: &[String],
    n: usize,
    function: DeviationFunction,
    policy: OutlierPolicy,
) -> Result<Vec<Topic>, DetectError> {
    let unique: BTreeSet<&String> = candidates.iter().collect();
    if n == 0 || n > unique.len() {
        return Err(DetectError::TopicSize {
            n,
            candidates: unique.len(),
        });
    }
    let sets = unique
        .into_par_iter()
        .map(|k| hashtag_entity_anomalies(store, k, function, policy))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(enumerate_topics(&sets, n))
}
