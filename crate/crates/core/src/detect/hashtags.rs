//! Abnormal hashtags, over the whole period and within one event.

use serde::Serialize;

use super::drill::share_during_event;
use super::{dims, DetectError, Event};
use crate::cube::{CubeOp, CubeStore, Selector, Trace};
use crate::deviation::{ContextEvaluation, DeviationFunction, OutlierPolicy, OutlierSet};
use crate::estimator::{expected_ratio_product, CoordinateProjection, EstimatorSpec, Term};

/// One abnormal hashtag cell. `day`/`hour` are absent in event-local
/// results, which score whole hashtags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HashtagAnomaly {
    pub hashtag: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub day: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hour: Option<u8>,
    pub observed: u64,
    pub expected: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone)]
pub struct HashtagAnalysis {
    pub evaluation: ContextEvaluation,
    pub outliers: OutlierSet,
    /// Positive outliers, most deviant first.
    pub anomalies: Vec<HashtagAnomaly>,
}

fn keep_only(store: &CubeStore, keep: &[&str]) -> Trace {
    let drop: Vec<&str> = store
        .base()
        .dims()
        .iter()
        .map(|d| d.name())
        .filter(|n| !keep.contains(n))
        .collect();
    if drop.is_empty() {
        Trace::new()
    } else {
        Trace::new().then(CubeOp::aggregate(drop))
    }
}

fn anomalies(eval: &ContextEvaluation, outliers: &OutlierSet) -> Vec<HashtagAnomaly> {
    let k = eval.dim_index(dims::HASHTAG).expect("hashtag context");
    let d = eval.dim_index(dims::DAY);
    let h = eval.dim_index(dims::HOUR);
    let mut out: Vec<HashtagAnomaly> = outliers
        .positive()
        .map(|o| {
            let c = &eval.cells[o.index];
            HashtagAnomaly {
                hashtag: eval.dims[k].label(c.coord[k]).to_owned(),
                day: d.map(|d| eval.dims[d].label(c.coord[d]).to_owned()),
                hour: h.map(|h| eval.dims[h].label(c.coord[h]).parse().expect("hour label")),
                observed: c.observed,
                expected: c.expected,
                deviation: c.deviation.value().unwrap_or(f64::NAN),
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.deviation
            .total_cmp(&a.deviation)
            .then_with(|| (&a.hashtag, &a.day, a.hour).cmp(&(&b.hashtag, &b.day, b.hour)))
    });
    out
}

/// Hashtag usage per (hashtag, day, hour) against the hashtag's daily
/// volume spread over the global hour-of-day profile:
/// `v(k, d) v(h) / v()`.
pub fn abnormal_hashtags_global(
    store: &CubeStore,
    function: DeviationFunction,
    policy: OutlierPolicy,
) -> Result<HashtagAnalysis, DetectError> {
    let base = store.base();
    for d in [dims::HASHTAG, dims::DAY, dims::HOUR] {
        base.dim_index(d)?;
    }
    let obs = store.materialize(&keep_only(store, &[dims::HASHTAG, dims::DAY, dims::HOUR]))?;
    let spec = EstimatorSpec::new(vec![
        Term::numerator(
            keep_only(store, &[dims::HASHTAG, dims::DAY]),
            CoordinateProjection::new().copy(dims::HASHTAG).copy(dims::DAY),
        ),
        Term::numerator(keep_only(store, &[dims::HOUR]), CoordinateProjection::new().copy(dims::HOUR)),
        Term::denominator(keep_only(store, &[]), CoordinateProjection::new()),
    ]);
    let field = expected_ratio_product(store, &obs, &spec)?;
    let evaluation = ContextEvaluation::from_field(&field, function, policy);
    let outliers = evaluation.outliers();
    Ok(HashtagAnalysis {
        anomalies: anomalies(&evaluation, &outliers),
        evaluation,
        outliers,
    })
}

/// Hashtags of one event against their usual share of the same hours of
/// day: `v(e) v(k, H_e) / v(H_e)`.
pub fn abnormal_hashtags_for_event(
    store: &CubeStore,
    event: &Event,
    function: DeviationFunction,
    policy: OutlierPolicy,
) -> Result<HashtagAnalysis, DetectError> {
    let (obs, spec, _) = share_during_event(store, event, Selector::keep_all(), dims::HASHTAG)?;
    if obs.is_empty() {
        return Err(DetectError::EventNotInData);
    }
    let field = expected_ratio_product(store, &obs, &spec)?;
    let evaluation = ContextEvaluation::from_field(&field, function, policy);
    let outliers = evaluation.outliers();
    Ok(HashtagAnalysis {
        anomalies: anomalies(&evaluation, &outliers),
        evaluation,
        outliers,
    })
}
