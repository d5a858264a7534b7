//! Author and spreader drill-down for one event.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{dims, DetectError, Event};
use crate::cube::{Cube, CubeOp, CubeStore, Partition, Selector, Trace, HOURS_PER_DAY};
use crate::deviation::{ContextEvaluation, DeviationFunction, OutlierPolicy, OutlierSet};
use crate::estimator::{expected_ratio_product, CoordinateProjection, EstimatorSpec, Term};

pub const DEFAULT_GAP_FACTOR: f64 = 3.0;
pub const DEFAULT_SHARE_SINGLE: f64 = 0.5;
pub const DEFAULT_SHARE_GROUP: f64 = 0.10;

const IN_EVENT: &str = "in-event";
const OUTSIDE: &str = "outside";

/// Deviation function, outlier policy and classification thresholds shared
/// by the drill-down steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrillConfig {
    pub function: DeviationFunction,
    pub policy: OutlierPolicy,
    pub gap_factor: f64,
    pub share_single: f64,
    pub share_group: f64,
}

impl Default for DrillConfig {
    fn default() -> Self {
        Self {
            function: DeviationFunction::poisson(),
            policy: OutlierPolicy::default(),
            gap_factor: DEFAULT_GAP_FACTOR,
            share_single: DEFAULT_SHARE_SINGLE,
            share_group: DEFAULT_SHARE_GROUP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CauseKind {
    OneMain,
    SeveralMain,
    NoMain,
}

/// A positive outlier of a one-dimensional context.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MainEntity {
    pub entity: String,
    pub deviation: f64,
    pub observed: u64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CauseClassification {
    pub kind: CauseKind,
    pub main_entities: Vec<MainEntity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeKind {
    GlobalPhenomenon,
    ActivistGroup,
    SingleActivist,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpreaderRegime {
    pub kind: RegimeKind,
    pub group: Vec<MainEntity>,
    /// Fraction of the event's retweets of the author made by `group`.
    pub share: f64,
}

#[derive(Debug, Clone)]
pub struct AuthorAnalysis {
    pub evaluation: ContextEvaluation,
    pub outliers: OutlierSet,
    pub classification: CauseClassification,
    /// Retweets during the event.
    pub event_total: u64,
}

#[derive(Debug, Clone)]
pub struct SpreaderAnalysis {
    pub author: String,
    pub evaluation: ContextEvaluation,
    pub outliers: OutlierSet,
    pub regime: SpreaderRegime,
    /// Retweets of the author during the event.
    pub event_total: u64,
}

/// Positive outliers, most deviant first (ties broken by entity label).
fn ranked_positive(eval: &ContextEvaluation, outliers: &OutlierSet) -> Vec<MainEntity> {
    let mut out: Vec<MainEntity> = outliers
        .positive()
        .map(|o| {
            let c = &eval.cells[o.index];
            MainEntity {
                entity: eval.labels(&c.coord).join("/"),
                deviation: c.deviation.value().unwrap_or(f64::NAN),
                observed: c.observed,
                expected: c.expected,
            }
        })
        .collect();
    out.sort_by(|a, b| b.deviation.total_cmp(&a.deviation).then_with(|| a.entity.cmp(&b.entity)));
    out
}

/// One main entity when the top positive outlier dominates the runner-up by
/// `gap_factor`; several when it does not; none without positive outliers.
pub fn classify_cause(eval: &ContextEvaluation, outliers: &OutlierSet, gap_factor: f64) -> CauseClassification {
    let mut ranked = ranked_positive(eval, outliers);
    let kind = match ranked.as_slice() {
        [] => CauseKind::NoMain,
        [_] => CauseKind::OneMain,
        [top, second, ..] if top.deviation >= gap_factor * second.deviation => CauseKind::OneMain,
        _ => CauseKind::SeveralMain,
    };
    if kind == CauseKind::OneMain {
        ranked.truncate(1);
    }
    CauseClassification {
        kind,
        main_entities: ranked,
    }
}

/// Single activist when exactly one spreader is a positive outlier and it
/// holds at least `share_single` of the event; activist group when the
/// positive outliers jointly hold at least `share_group`; otherwise a global
/// phenomenon.
pub fn classify_regime(
    eval: &ContextEvaluation,
    outliers: &OutlierSet,
    event_total: u64,
    share_single: f64,
    share_group: f64,
) -> SpreaderRegime {
    let group = ranked_positive(eval, outliers);
    let held: u64 = group.iter().map(|e| e.observed).sum();
    let share = if event_total == 0 {
        0.0
    } else {
        (held as f64 / event_total as f64).min(1.0)
    };
    let kind = if group.len() == 1 && share >= share_single {
        RegimeKind::SingleActivist
    } else if !group.is_empty() && share >= share_group {
        RegimeKind::ActivistGroup
    } else {
        RegimeKind::GlobalPhenomenon
    };
    SpreaderRegime { kind, group, share }
}

/// Hour of day split into the event's hours and the rest.
fn hour_partition(hours: &BTreeSet<u8>) -> Partition {
    let inside = hours.iter().map(u8::to_string);
    let outside: Vec<String> = (0..HOURS_PER_DAY as u8)
        .filter(|h| !hours.contains(h))
        .map(|h| h.to_string())
        .collect();
    let p = Partition::new(dims::HOUR).with_class(IN_EVENT, inside);
    if outside.is_empty() {
        p
    } else {
        p.with_class(OUTSIDE, outside)
    }
}

fn all_but(base: &Cube, keep: &[&str]) -> CubeOp {
    CubeOp::aggregate(
        base.dims()
            .iter()
            .map(|d| d.name())
            .filter(|n| !keep.contains(n)),
    )
}

/// `prefix`, restricted to the event's hours of day and reduced to `keep`
/// plus the (single-class) hour dimension.
fn during_hours_of_day(base: &Cube, prefix: &Trace, event: &Event, keep: &[&str]) -> Trace {
    let mut keep_hour = keep.to_vec();
    keep_hour.push(dims::HOUR);
    prefix
        .clone()
        .then(CubeOp::Partition(hour_partition(&event.hours_of_day())))
        .then(CubeOp::Filter(Selector::keep_all().with(dims::HOUR, [IN_EVENT])))
        .then(all_but(base, &keep_hour))
}

/// `v(e) * v(x, H_e) / v(H_e)` over the one-dimensional `entity` cube of the
/// event, where everything is first restricted by `scope`.
pub(super) fn share_during_event(
    store: &CubeStore,
    event: &Event,
    scope: Selector,
    entity: &str,
) -> Result<(std::sync::Arc<Cube>, EstimatorSpec, Trace), DetectError> {
    if event.hours.is_empty() {
        return Err(DetectError::EmptyEvent);
    }
    let base = store.base();
    for d in [entity, dims::DAY, dims::HOUR] {
        base.dim_index(d)?;
    }
    let mut in_event = event.selector();
    in_event.values = scope.values.clone();
    let scoped = if scope.is_keep_all() {
        Trace::new()
    } else {
        Trace::new().then(CubeOp::Filter(scope))
    };
    let obs_trace = Trace::new()
        .then(CubeOp::Filter(in_event.clone()))
        .then(all_but(base, &[entity]));
    let event_apex = Trace::new()
        .then(CubeOp::Filter(in_event))
        .then(all_but(base, &[]));
    let entity_he = during_hours_of_day(base, &scoped, event, &[entity]);
    let he = during_hours_of_day(base, &scoped, event, &[]);
    let spec = EstimatorSpec::new(vec![
        Term::numerator(event_apex, CoordinateProjection::new()),
        Term::numerator(
            entity_he,
            CoordinateProjection::new().copy(entity).fixed(dims::HOUR, IN_EVENT),
        ),
        Term::denominator(he.clone(), CoordinateProjection::new().fixed(dims::HOUR, IN_EVENT)),
    ]);
    Ok((store.materialize(&obs_trace)?, spec, he))
}

/// Author context of an event: each author's retweets during the event
/// against the event volume split by the author's usual share of the same
/// hours of day.
pub fn explain_event_authors(
    store: &CubeStore,
    event: &Event,
    config: &DrillConfig,
) -> Result<AuthorAnalysis, DetectError> {
    let (obs, spec, _) = share_during_event(store, event, Selector::keep_all(), dims::AUTHOR)?;
    if obs.is_empty() {
        return Err(DetectError::EventNotInData);
    }
    let field = expected_ratio_product(store, &obs, &spec)?;
    let evaluation = ContextEvaluation::from_field(&field, config.function, config.policy);
    let outliers = evaluation.outliers();
    let classification = classify_cause(&evaluation, &outliers, config.gap_factor);
    Ok(AuthorAnalysis {
        event_total: obs.grand_total(),
        evaluation,
        outliers,
        classification,
    })
}

/// Spreader context of `author` during an event: who retweeted the author
/// more than their usual share of the author's audience at these hours.
pub fn explain_event_spreaders(
    store: &CubeStore,
    event: &Event,
    author: &str,
    config: &DrillConfig,
) -> Result<SpreaderAnalysis, DetectError> {
    let base = store.base();
    if base.dim(dims::AUTHOR)?.id(author).is_none() {
        return Err(DetectError::UnknownEntity {
            kind: "author",
            name: author.to_owned(),
        });
    }
    let scope = Selector::keep_all().with(dims::AUTHOR, [author]);
    let (obs, spec, he) = share_during_event(store, event, scope, dims::SPREADER)?;
    if store.materialize(&he)?.grand_total() == 0 {
        return Err(DetectError::InactiveAuthor(author.to_owned()));
    }
    let field = expected_ratio_product(store, &obs, &spec)?;
    let evaluation = ContextEvaluation::from_field(&field, config.function, config.policy);
    let outliers = evaluation.outliers();
    let event_total = obs.grand_total();
    let regime = classify_regime(
        &evaluation,
        &outliers,
        event_total,
        config.share_single,
        config.share_group,
    );
    Ok(SpreaderAnalysis {
        author: author.to_owned(),
        evaluation,
        outliers,
        regime,
        event_total,
    })
}
