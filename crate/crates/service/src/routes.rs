//! Endpoints. Query strings are parsed by hand so that every rejection is
//! a JSON error body.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::str::FromStr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use cubelens_core::cube::{Cube, CubeOp, CubeStore, Selector, Trace};
use cubelens_core::detect::{
    abnormal_hashtags_for_event, abnormal_hashtags_global, dims, discover_topics,
    explain_event_authors, explain_event_spreaders, predict_user_topic, CauseKind, DrillConfig,
    EvaluationSummary, LinkPredictionMode,
};
use cubelens_core::deviation::{
    Center, ContextEvaluation, DeviationFunction, DeviationKind, OutlierPolicy, Side, Survival,
};
use cubelens_core::estimator::{
    aggregative_spec, basic_spec, day_hour_profile_spec, expected_ratio_product, parse_spec, Catalog,
    EstimatorError,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::{ApiError, EventIndex, SessionState};

/// Cells per page when the request does not say.
pub const DEFAULT_LIMIT: usize = 500;
pub const MAX_LIMIT: usize = 100_000;

const ANALYSIS: [&str; 5] = ["deviation", "survival", "sigma", "side", "center"];
const PAGING: [&str; 3] = ["offset", "limit", "bins"];

pub fn router(state: Arc<SessionState>) -> Router {
    Router::new()
        .route("/schema", get(schema))
        .route("/evaluate", post(evaluate))
        .route("/events", get(events))
        .route("/events/{id}/authors", get(event_authors))
        .route("/events/{id}/spreaders", get(event_spreaders))
        .route("/events/{id}/hashtags", get(event_hashtags))
        .route("/hashtags", get(hashtags))
        .route("/topics", get(topics))
        .route("/predict", get(predict))
        .fallback(|uri: Uri| async move {
            ApiError::not_found("no_route", format!("no endpoint at {}", uri.path())).into_response()
        })
        .with_state(state)
}

struct Params(Vec<(String, String)>);

impl Params {
    fn allow(&self, names: &[&[&str]]) -> Result<(), ApiError> {
        match self.0.iter().find(|(k, _)| !names.iter().any(|g| g.contains(&k.as_str()))) {
            Some((k, _)) => Err(ApiError::bad_request(format!("unknown parameter `{k}`"))),
            None => Ok(()),
        }
    }

    fn get(&self, name: &str) -> Option<&str> {
        self.0.iter().rev().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    fn required(&self, name: &str) -> Result<&str, ApiError> {
        self.get(name)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| ApiError::bad_request(format!("missing parameter `{name}`")))
    }

    /// Every value of a repeatable, comma-separable parameter.
    fn list(&self, name: &str) -> Vec<String> {
        self.0
            .iter()
            .filter(|(k, _)| k == name)
            .flat_map(|(_, v)| v.split(','))
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(str::to_owned)
            .collect()
    }

    fn parse<T: FromStr>(&self, name: &str) -> Result<Option<T>, ApiError>
    where
        T::Err: Display,
    {
        self.get(name)
            .map(|v| {
                v.parse()
                    .map_err(|e| ApiError::bad_request(format!("parameter `{name}`: {e}")))
            })
            .transpose()
    }

    /// Canonical cache key: path plus sorted parameters.
    fn key(&self, path: &str) -> String {
        let mut pairs = self.0.clone();
        pairs.sort();
        serde_json::to_string(&(path, pairs)).expect("key serializes")
    }

    fn analysis(&self, state: &SessionState) -> Result<(DeviationFunction, OutlierPolicy), ApiError> {
        let d = state.defaults();
        let mut function = d.function;
        let mut policy = d.policy;
        if let Some(v) = self.get("deviation") {
            function.kind = parse_deviation(v)?;
        }
        if let Some(v) = self.get("survival") {
            function.survival = parse_survival(v)?;
        }
        if let Some(sigma) = self.parse::<f64>("sigma")? {
            policy.sigma_multiplier = checked_sigma(sigma)?;
        }
        if let Some(v) = self.get("side") {
            policy.side = match v {
                "both" => Side::Both,
                "positive" => Side::Positive,
                "negative" => Side::Negative,
                _ => return Err(ApiError::bad_request("side must be both, positive or negative")),
            };
        }
        if let Some(v) = self.get("center") {
            policy.center = match v {
                "mean" => Center::Mean,
                "median" => Center::Median,
                _ => return Err(ApiError::bad_request("center must be mean or median")),
            };
        }
        Ok((function, policy))
    }

    fn page(&self) -> Result<Page, ApiError> {
        let limit = self.parse::<usize>("limit")?.unwrap_or(DEFAULT_LIMIT);
        if limit > MAX_LIMIT {
            return Err(ApiError::bad_request(format!("limit is capped at {MAX_LIMIT}")));
        }
        Ok(Page {
            offset: self.parse("offset")?.unwrap_or(0),
            limit,
            bins: checked_bins(self.parse("bins")?)?,
        })
    }
}

fn parse_deviation(v: &str) -> Result<DeviationKind, ApiError> {
    match v {
        "poisson" => Ok(DeviationKind::Poisson),
        "ratio" => Ok(DeviationKind::Ratio),
        _ => Err(ApiError::bad_request("deviation must be poisson or ratio")),
    }
}

fn parse_survival(v: &str) -> Result<Survival, ApiError> {
    match v {
        "gt" => Ok(Survival::Greater),
        "geq" => Ok(Survival::GreaterOrEqual),
        _ => Err(ApiError::bad_request("survival must be gt or geq")),
    }
}

fn checked_sigma(sigma: f64) -> Result<f64, ApiError> {
    OutlierPolicy::new(sigma)
        .map(|p| p.sigma_multiplier)
        .map_err(|e| ApiError::bad_request(e.to_string()))
}

fn checked_bins(bins: Option<f64>) -> Result<Option<f64>, ApiError> {
    match bins {
        Some(w) if !(w > 0.0 && w.is_finite()) => Err(ApiError::bad_request("bins must be a positive width")),
        other => Ok(other),
    }
}

#[derive(Debug, Clone, Copy)]
struct Page {
    offset: usize,
    limit: usize,
    bins: Option<f64>,
}

impl Page {
    fn summary(&self, eval: &ContextEvaluation) -> EvaluationSummary {
        EvaluationSummary::new(eval, &eval.outliers(), self.bins, self.offset, self.limit)
    }
}

fn json_body(value: &Value) -> String {
    serde_json::to_string(value).expect("JSON body serializes")
}

fn ok(body: &str) -> Response {
    (StatusCode::OK, [(header::CONTENT_TYPE, "application/json")], body.to_owned()).into_response()
}

/// Serves a cached body, or computes one off the async workers and caches
/// it. Errors are never cached.
async fn respond<F>(state: Arc<SessionState>, key: String, compute: F) -> Response
where
    F: FnOnce(&SessionState) -> Result<Value, ApiError> + Send + 'static,
{
    if let Some(body) = state.cached_body(&key) {
        return ok(&body);
    }
    let worker = Arc::clone(&state);
    match tokio::task::spawn_blocking(move || compute(&worker)).await {
        Ok(Ok(value)) => {
            let body = Arc::new(json_body(&value));
            state.store_body(key, Arc::clone(&body));
            ok(&body)
        }
        Ok(Err(e)) => e.into_response(),
        Err(e) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()).into_response(),
    }
}

type Q = Query<Vec<(String, String)>>;

fn dims_json(cube: &Cube) -> Value {
    Value::Array(
        cube.dims()
            .iter()
            .enumerate()
            .map(|(i, d)| {
                json!({
                    "name": d.name(),
                    "kind": d.kind(),
                    "cardinality": cube.observed_values(i).len(),
                })
            })
            .collect(),
    )
}

async fn schema(State(state): State<Arc<SessionState>>, uri: Uri, Query(q): Q) -> Response {
    let p = Params(q);
    respond(state, p.key(uri.path()), move |s| {
        p.allow(&[])?;
        let data = s.dataset()?;
        let base = data.interactions.base();
        let mut days: Vec<&str> = base
            .dim_index(dims::DAY)
            .map(|i| base.observed_values(i).into_iter().map(|id| base.dims()[i].label(id)).collect())
            .unwrap_or_default();
        days.sort_unstable();
        Ok(json!({
            "records": data.records,
            "hashtag_records": data.hashtag_records,
            "interactions": dims_json(base),
            "hashtags": data.hashtags.as_ref().map(|h| dims_json(h.base())),
            "communities": data.communities.as_ref().map(|c| c.values().collect::<BTreeSet<_>>().len()),
            "days": {
                "count": days.len(),
                "first": days.first(),
                "last": days.last(),
            },
            "defaults": {
                "function": s.defaults().function,
                "policy": s.defaults().policy,
                "limit": DEFAULT_LIMIT,
            },
        }))
    })
    .await
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum CubeKind {
    #[default]
    Interactions,
    Hashtags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Preset {
    Basic,
    Aggregative,
    Multiagg,
}

/// Body of `POST /evaluate`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateRequest {
    #[serde(default)]
    cube: CubeKind,
    /// Full derivation of the observed cube; excludes `keep` and `filter`.
    #[serde(default)]
    trace: Option<Trace>,
    /// Dimensions of the observed cube; all others are summed out.
    #[serde(default)]
    keep: Option<Vec<String>>,
    #[serde(default)]
    filter: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    preset: Option<Preset>,
    /// Dimensions the aggregative preset spreads over (default `hour`).
    #[serde(default)]
    spread: Option<Vec<String>>,
    #[serde(default)]
    spec: Option<String>,
    #[serde(default)]
    deviation: Option<DeviationKind>,
    #[serde(default)]
    survival: Option<Survival>,
    #[serde(default)]
    policy: Option<OutlierPolicy>,
    #[serde(default)]
    bin_width: Option<f64>,
    #[serde(default)]
    offset: usize,
    #[serde(default)]
    limit: Option<usize>,
}

fn observed_trace(store: &CubeStore, req: &EvaluateRequest) -> Result<Trace, ApiError> {
    if let Some(trace) = &req.trace {
        if req.keep.is_some() || !req.filter.is_empty() {
            return Err(ApiError::bad_request("`trace` excludes `keep` and `filter`"));
        }
        return Ok(trace.clone());
    }
    let base = store.base();
    let mut trace = Trace::new();
    if !req.filter.is_empty() {
        for d in req.filter.keys() {
            base.dim_index(d)?;
        }
        let selector = req
            .filter
            .iter()
            .fold(Selector::keep_all(), |s, (d, values)| s.with(d.as_str(), values.iter().cloned()));
        trace = trace.then(CubeOp::Filter(selector));
    }
    if let Some(keep) = &req.keep {
        for d in keep {
            base.dim_index(d)?;
        }
        let drop: Vec<&str> = base
            .dims()
            .iter()
            .map(|d| d.name())
            .filter(|n| !keep.iter().any(|k| k == n))
            .collect();
        if !drop.is_empty() {
            trace = trace.then(CubeOp::aggregate(drop));
        }
    }
    Ok(trace)
}

fn run_evaluate(s: &SessionState, req: &EvaluateRequest) -> Result<Value, ApiError> {
    let data = s.dataset()?;
    let store = match req.cube {
        CubeKind::Interactions => &data.interactions,
        CubeKind::Hashtags => data.hashtags.as_ref().ok_or_else(|| ApiError::not_loaded("hashtag data"))?,
    };
    let mut function = s.defaults().function;
    if let Some(kind) = req.deviation {
        function.kind = kind;
    }
    if let Some(survival) = req.survival {
        function.survival = survival;
    }
    let policy = match req.policy {
        Some(p) => {
            checked_sigma(p.sigma_multiplier)?;
            p
        }
        None => s.defaults().policy,
    };
    let page = Page {
        offset: req.offset,
        limit: req.limit.unwrap_or(DEFAULT_LIMIT),
        bins: checked_bins(req.bin_width)?,
    };
    if page.limit > MAX_LIMIT {
        return Err(ApiError::bad_request(format!("limit is capped at {MAX_LIMIT}")));
    }

    let obs = store.materialize(&observed_trace(store, req)?)?;
    if obs.is_empty() {
        return Err(EstimatorError::EmptyCube.into());
    }
    let spec = match (&req.preset, &req.spec) {
        (Some(Preset::Basic), None) => basic_spec(&obs)?,
        (Some(Preset::Aggregative), None) => {
            let spread = req.spread.clone().unwrap_or_else(|| vec![dims::HOUR.to_owned()]);
            let spread: Vec<&str> = spread.iter().map(String::as_str).collect();
            aggregative_spec(&obs, &spread)?
        }
        (Some(Preset::Multiagg), None) => {
            for d in [dims::DAY, dims::HOUR] {
                obs.dim_index(d)?;
            }
            day_hour_profile_spec(&obs, dims::DAY, dims::HOUR)
        }
        (None, Some(text)) => parse_spec(text)
            .map_err(EstimatorError::from)?
            .compile(&obs, store, &Catalog::new())?,
        _ => return Err(ApiError::bad_request("give exactly one of `preset` and `spec`")),
    };
    let field = expected_ratio_product(store, &obs, &spec)?;
    let eval = ContextEvaluation::from_field(&field, function, policy);
    Ok(json!({
        "function": function,
        "policy": policy,
        "summary": page.summary(&eval),
    }))
}

async fn evaluate(State(state): State<Arc<SessionState>>, body: Bytes) -> Response {
    let req: EvaluateRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return ApiError::new(StatusCode::BAD_REQUEST, "malformed_request", e.to_string()).into_response(),
    };
    let key = format!("POST /evaluate {}", serde_json::to_string(&req).expect("request serializes"));
    respond(state, key, move |s| run_evaluate(s, &req)).await
}

fn event_id(index: &EventIndex, id: &str) -> Result<usize, ApiError> {
    id.parse::<usize>()
        .ok()
        .filter(|i| *i < index.events.len())
        .ok_or_else(|| ApiError::not_found("unknown_event", format!("no event `{id}`")))
}

fn drill_config(s: &SessionState, function: DeviationFunction, policy: OutlierPolicy) -> DrillConfig {
    DrillConfig {
        function,
        policy,
        ..s.defaults().drill
    }
}

async fn events(State(state): State<Arc<SessionState>>, uri: Uri, Query(q): Q) -> Response {
    let p = Params(q);
    respond(state, p.key(uri.path()), move |s| {
        p.allow(&[&ANALYSIS, &PAGING])?;
        let (function, policy) = p.analysis(s)?;
        let page = p.page()?;
        let index = s.event_index(function, policy)?;
        Ok(json!({
            "function": function,
            "policy": policy,
            "count": index.events.len(),
            "events": index.summaries,
            "hours": page.summary(&index.evaluation),
        }))
    })
    .await
}

async fn event_authors(
    State(state): State<Arc<SessionState>>,
    Path(id): Path<String>,
    uri: Uri,
    Query(q): Q,
) -> Response {
    let p = Params(q);
    respond(state, p.key(uri.path()), move |s| {
        p.allow(&[&ANALYSIS, &PAGING])?;
        let (function, policy) = p.analysis(s)?;
        let page = p.page()?;
        let index = s.event_index(function, policy)?;
        let i = event_id(&index, &id)?;
        let store = &s.dataset()?.interactions;
        let a = explain_event_authors(store, &index.events[i], &drill_config(s, function, policy))?;
        Ok(json!({
            "event": index.summaries[i],
            "event_total": a.event_total,
            "cause": a.classification,
            "summary": page.summary(&a.evaluation),
        }))
    })
    .await
}

async fn event_spreaders(
    State(state): State<Arc<SessionState>>,
    Path(id): Path<String>,
    uri: Uri,
    Query(q): Q,
) -> Response {
    let p = Params(q);
    respond(state, p.key(uri.path()), move |s| {
        p.allow(&[&ANALYSIS, &PAGING, &["author"]])?;
        let (function, policy) = p.analysis(s)?;
        let page = p.page()?;
        let index = s.event_index(function, policy)?;
        let i = event_id(&index, &id)?;
        let store = &s.dataset()?.interactions;
        let config = drill_config(s, function, policy);
        let event = &index.events[i];
        let author = match p.get("author").filter(|a| !a.is_empty()) {
            Some(a) => a.to_owned(),
            None => {
                let c = explain_event_authors(store, event, &config)?.classification;
                match c.kind {
                    CauseKind::OneMain => c.main_entities[0].entity.clone(),
                    _ => {
                        return Err(ApiError::new(
                            StatusCode::BAD_REQUEST,
                            "author_required",
                            "the event has no single main author; pass `author`",
                        ))
                    }
                }
            }
        };
        let a = explain_event_spreaders(store, event, &author, &config)?;
        Ok(json!({
            "event": index.summaries[i],
            "author": a.author,
            "event_total": a.event_total,
            "regime": a.regime,
            "summary": page.summary(&a.evaluation),
        }))
    })
    .await
}

fn hashtag_store(s: &SessionState) -> Result<&CubeStore, ApiError> {
    s.dataset()?
        .hashtags
        .as_ref()
        .ok_or_else(|| ApiError::not_loaded("hashtag data"))
}

async fn event_hashtags(
    State(state): State<Arc<SessionState>>,
    Path(id): Path<String>,
    uri: Uri,
    Query(q): Q,
) -> Response {
    let p = Params(q);
    respond(state, p.key(uri.path()), move |s| {
        p.allow(&[&ANALYSIS, &PAGING])?;
        let (function, policy) = p.analysis(s)?;
        let page = p.page()?;
        let index = s.event_index(function, policy)?;
        let i = event_id(&index, &id)?;
        let h = abnormal_hashtags_for_event(hashtag_store(s)?, &index.events[i], function, policy)?;
        Ok(json!({
            "event": index.summaries[i],
            "anomalies": h.anomalies,
            "summary": page.summary(&h.evaluation),
        }))
    })
    .await
}

async fn hashtags(State(state): State<Arc<SessionState>>, uri: Uri, Query(q): Q) -> Response {
    let p = Params(q);
    respond(state, p.key(uri.path()), move |s| {
        p.allow(&[&ANALYSIS, &PAGING])?;
        let (function, policy) = p.analysis(s)?;
        let page = p.page()?;
        let h = abnormal_hashtags_global(hashtag_store(s)?, function, policy)?;
        Ok(json!({
            "anomalies": h.anomalies,
            "summary": page.summary(&h.evaluation),
        }))
    })
    .await
}

async fn topics(State(state): State<Arc<SessionState>>, uri: Uri, Query(q): Q) -> Response {
    let p = Params(q);
    respond(state, p.key(uri.path()), move |s| {
        p.allow(&[&ANALYSIS, &["n", "candidates"]])?;
        let (function, policy) = p.analysis(s)?;
        let n: usize = p
            .parse("n")?
            .ok_or_else(|| ApiError::bad_request("missing parameter `n`"))?;
        if n == 0 {
            return Err(ApiError::bad_request("n must be at least 1"));
        }
        let store = hashtag_store(s)?;
        let explicit = p.list("candidates");
        let candidates: Vec<String> = if explicit.is_empty() {
            let h = abnormal_hashtags_global(store, function, policy)?;
            h.anomalies
                .into_iter()
                .map(|a| a.hashtag)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        } else {
            explicit.into_iter().collect::<BTreeSet<_>>().into_iter().collect()
        };
        // Fewer candidates than n: no topic of that size exists.
        let topics = if n > candidates.len() && p.get("candidates").is_none() {
            Vec::new()
        } else {
            discover_topics(store, &candidates, n, function, policy)?
        };
        Ok(json!({
            "n": n,
            "candidates": candidates,
            "topics": topics,
        }))
    })
    .await
}

async fn predict(State(state): State<Arc<SessionState>>, uri: Uri, Query(q): Q) -> Response {
    let p = Params(q);
    respond(state, p.key(uri.path()), move |s| {
        p.allow(&[&["s", "k", "d", "h", "mode"]])?;
        let spreader = p.required("s")?.to_owned();
        let topic = p.list("k");
        if topic.is_empty() {
            return Err(ApiError::bad_request("missing parameter `k`"));
        }
        let day = p.required("d")?.to_owned();
        let hour: u8 = p
            .parse::<u8>("h")?
            .ok_or_else(|| ApiError::bad_request("missing parameter `h`"))?;
        let mode = match p.get("mode") {
            Some(m) => m.parse::<LinkPredictionMode>().map_err(ApiError::bad_request)?,
            None => s.defaults().linkpred,
        };
        let store = hashtag_store(s)?;
        let communities = s
            .dataset()?
            .communities
            .as_ref()
            .ok_or_else(|| ApiError::not_loaded("community file"))?;
        let day_dim = store.base().dim(dims::DAY).map_err(ApiError::from)?;
        if day_dim.id(&day).is_none() {
            return Err(ApiError::not_found("unknown_entity", format!("unknown day `{day}`")));
        }
        let prediction = predict_user_topic(store, communities, &spreader, &topic, &day, hour, mode)?;
        Ok(serde_json::to_value(prediction).expect("prediction serializes"))
    })
    .await
}
