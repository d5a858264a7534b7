//! The analysis pipeline built on cubes, estimators and deviations.
//!
//! Hours are scored first ([`evaluate_hours`]); runs of abnormal hours
//! become [`Event`]s ([`detect_events`]). An event is then drilled into
//! authors ([`explain_event_authors`]), the spreaders of its main author
//! ([`explain_event_spreaders`]) and its hashtags. Hashtag-level anomalies
//! feed topic discovery and the user-topic link predictor.
//!
//! Every detector reads "abnormal" as a positive outlier: low activity is
//! never an anomaly here.

mod drill;
mod hashtags;
mod linkpred;
mod report;
mod topics;

use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cube::{Cube, CubeError, CubeOp, CubeStore, DimKind, Selector, Trace};
use crate::deviation::{ContextEvaluation, DeviationFunction, OutlierPolicy, OutlierSet};
use crate::estimator::{
    aggregative_spec, basic_spec, day_hour_profile_spec, expected_ratio_product, EstimatorError,
};
pub use crate::ingest::dims;

pub use drill::{
    classify_cause, classify_regime, explain_event_authors, explain_event_spreaders, AuthorAnalysis,
    CauseClassification, CauseKind, DrillConfig, MainEntity, RegimeKind, SpreaderAnalysis,
    SpreaderRegime, DEFAULT_GAP_FACTOR, DEFAULT_SHARE_GROUP, DEFAULT_SHARE_SINGLE,
};
pub use hashtags::{
    abnormal_hashtags_for_event, abnormal_hashtags_global, HashtagAnalysis, HashtagAnomaly,
};
pub use linkpred::{predict_user_topic, LinkPrediction, LinkPredictionMode};
pub use report::{
    cell_report, cells_table, default_bin_width, entities_table, event_summaries, events_table,
    render_table, CellReport, EvaluationSummary, EventSummary, Table,
};
pub use topics::{
    brute_force_topics, discover_topics, enumerate_topics, hashtag_entity_anomalies, EntityAnomalies,
    Topic,
};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error(transparent)]
    Cube(#[from] CubeError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("day label `{0}` is neither a YYYY-MM-DD date nor an integer")]
    UnorderedDay(String),
    #[error("hour {0} is outside 0..=23")]
    InvalidHour(u32),
    #[error("event has no hours")]
    EmptyEvent,
    #[error("none of the event's hours occur in the data")]
    EventNotInData,
    #[error("unknown {kind} `{name}`")]
    UnknownEntity { kind: &'static str, name: String },
    #[error("author `{0}` has no activity during the event's hours of day")]
    InactiveAuthor(String),
    #[error("topic size {n} must be between 1 and the number of candidates ({candidates})")]
    TopicSize { n: usize, candidates: usize },
    #[error("cube has no `{0}` dimension")]
    MissingDimension(&'static str),
}

/// One hour of the wall clock.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HourSlot {
    pub day: String,
    pub hour: u8,
}

impl HourSlot {
    pub fn new(day: impl Into<String>, hour: u8) -> Self {
        Self {
            day: day.into(),
            hour,
        }
    }
}

/// Position of a day label on the calendar. Dates count days since the
/// common era; plain integers are taken as day numbers.
pub fn day_ordinal(label: &str) -> Result<i64, DetectError> {
    if let Ok(date) = NaiveDate::parse_from_str(label, "%Y-%m-%d") {
        return Ok(chrono::Datelike::num_days_from_ce(&date) as i64);
    }
    label
        .parse::<i64>()
        .map_err(|_| DetectError::UnorderedDay(label.to_owned()))
}

fn wall_clock(slot: &HourSlot) -> Result<i64, DetectError> {
    if slot.hour > 23 {
        return Err(DetectError::InvalidHour(slot.hour as u32));
    }
    Ok(day_ordinal(&slot.day)? * 24 + slot.hour as i64)
}

/// Maximal run of wall-clock-consecutive abnormal hours.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub id: usize,
    pub hours: Vec<HourSlot>,
}

impl Event {
    /// Hour-of-day values spanned by the event.
    pub fn hours_of_day(&self) -> BTreeSet<u8> {
        self.hours.iter().map(|s| s.hour).collect()
    }

    pub fn first(&self) -> &HourSlot {
        &self.hours[0]
    }

    pub fn last(&self) -> &HourSlot {
        self.hours.last().expect("events are non-empty")
    }

    /// `2016-11-24 20h-22h`, or `12 22h - 13 1h` across midnight.
    pub fn label(&self) -> String {
        let (a, b) = (self.first(), self.last());
        if a == b {
            format!("{} {}h", a.day, a.hour)
        } else if a.day == b.day {
            format!("{} {}h-{}h", a.day, a.hour, b.hour)
        } else {
            format!("{} {}h - {} {}h", a.day, a.hour, b.day, b.hour)
        }
    }

    /// Filter keeping exactly the event's hours.
    pub fn selector(&self) -> Selector {
        Selector::keep_all().with_slots(
            dims::DAY,
            dims::HOUR,
            self.hours.iter().map(|s| (s.day.clone(), s.hour.to_string())),
        )
    }
}

/// Groups hours into maximal wall-clock runs, in chronological order.
/// Duplicates are ignored; 23h followed by 0h of the next day is consecutive.
pub fn group_consecutive(slots: &[HourSlot]) -> Result<Vec<Event>, DetectError> {
    let mut keyed: Vec<(i64, &HourSlot)> = slots
        .iter()
        .map(|s| Ok((wall_clock(s)?, s)))
        .collect::<Result<_, DetectError>>()?;
    keyed.sort();
    keyed.dedup_by_key(|(t, _)| *t);
    let mut events: Vec<Event> = Vec::new();
    let mut prev: Option<i64> = None;
    for (t, slot) in keyed {
        match (prev, events.last_mut()) {
            (Some(p), Some(e)) if t == p + 1 => e.hours.push(slot.clone()),
            _ => events.push(Event {
                id: events.len(),
                hours: vec![slot.clone()],
            }),
        }
        prev = Some(t);
    }
    Ok(events)
}

/// Events from a `(day, hour)` evaluation: its positive outliers grouped
/// into maximal runs. Hours missing from the evaluation break runs.
pub fn detect_events(hour_eval: &ContextEvaluation) -> Result<Vec<Event>, DetectError> {
    detect_events_with(hour_eval, &hour_eval.outliers())
}

pub fn detect_events_with(
    hour_eval: &ContextEvaluation,
    outliers: &OutlierSet,
) -> Result<Vec<Event>, DetectError> {
    let di = hour_eval
        .dims
        .iter()
        .position(|d| d.kind() == DimKind::Day)
        .ok_or(DetectError::MissingDimension("day"))?;
    let hi = hour_eval
        .dims
        .iter()
        .position(|d| d.kind() == DimKind::HourOfDay)
        .ok_or(DetectError::MissingDimension("hour"))?;
    let slots: Vec<HourSlot> = outliers
        .positive()
        .map(|o| {
            let c = &hour_eval.cells[o.index].coord;
            let hour: u8 = hour_eval.dims[hi].label(c[hi]).parse().expect("hour labels are 0..23");
            HourSlot::new(hour_eval.dims[di].label(c[di]), hour)
        })
        .collect();
    group_consecutive(&slots)
}

/// The three hour-level contexts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HourContext {
    /// Grand total spread evenly over every (day, hour).
    Basic,
    /// Each day's total spread evenly over its 24 hours.
    Aggregative,
    /// Day total times the hour-of-day profile: `v(d) v(h) / v()`.
    #[default]
    #[serde(rename = "multiagg")]
    MultiAggregative,
}

impl std::str::FromStr for HourContext {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "basic" => Ok(Self::Basic),
            "aggregative" => Ok(Self::Aggregative),
            "multiagg" | "multi-aggregative" => Ok(Self::MultiAggregative),
            other => Err(format!(
                "unknown hour context `{other}` (expected basic, aggregative or multiagg)"
            )),
        }
    }
}

/// Trace of the `(day, hour)` cuboid: every other dimension summed out.
pub fn hour_trace(base: &Cube) -> Result<Trace, DetectError> {
    for d in [dims::DAY, dims::HOUR] {
        if !base.has_dim(d) {
            return Err(DetectError::MissingDimension(if d == dims::DAY { "day" } else { "hour" }));
        }
    }
    let others: Vec<&str> = base
        .dims()
        .iter()
        .map(|d| d.name())
        .filter(|n| *n != dims::DAY && *n != dims::HOUR)
        .collect();
    Ok(if others.is_empty() {
        Trace::new()
    } else {
        Trace::new().then(CubeOp::aggregate(others))
    })
}

/// Scores every (day, hour) of the store's base in the chosen context.
pub fn evaluate_hours(
    store: &CubeStore,
    context: HourContext,
    function: DeviationFunction,
    policy: OutlierPolicy,
) -> Result<ContextEvaluation, DetectError> {
    let obs = store.materialize(&hour_trace(store.base())?)?;
    if obs.is_empty() {
        return Err(EstimatorError::EmptyCube.into());
    }
    let spec = match context {
        HourContext::Basic => basic_spec(&obs)?,
        HourContext::Aggregative => aggregative_spec(&obs, &[dims::HOUR])?,
        HourContext::MultiAggregative => day_hour_profile_spec(&obs, dims::DAY, dims::HOUR),
    };
    let field = expected_ratio_product(store, &obs, &spec)?;
    Ok(ContextEvaluation::from_field(&field, function, policy))
}

/// Hour evaluation plus the events it yields, numbered chronologically.
pub fn events_for(
    store: &CubeStore,
    function: DeviationFunction,
    policy: OutlierPolicy,
) -> Result<(ContextEvaluation, Vec<Event>), DetectError> {
    let eval = evaluate_hours(store, HourContext::MultiAggregative, function, policy)?;
    let events = detect_events(&eval)?;
    Ok((eval, events))
}
