use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use cubelens_core::ingest::ParsedLog;
use cubelens_core::synth::{generate, Manifest, Plant, ScenarioSpec};
use cubelens_service::{router, Dataset, Defaults, SessionState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture() -> &'static (ParsedLog, Manifest) {
    static LOG: OnceLock<(ParsedLog, Manifest)> = OnceLock::new();
    LOG.get_or_init(|| {
        let log = generate(&ScenarioSpec::fixture()).unwrap();
        (log.parsed(), log.manifest)
    })
}

fn communities() -> BTreeMap<String, String> {
    (1..=2000).map(|i| (format!("user-{i}"), format!("c{}", i % 4))).collect()
}

fn state() -> Arc<SessionState> {
    let dataset = Dataset::from_log(&fixture().0, Some(communities())).unwrap();
    Arc::new(SessionState::new(Some(dataset), Defaults::default()))
}

fn shared() -> &'static Arc<SessionState> {
    static STATE: OnceLock<Arc<SessionState>> = OnceLock::new();
    STATE.get_or_init(state)
}

async fn send(app: Router, req: Request<Body>) -> (StatusCode, String) {
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn get_raw(state: &Arc<SessionState>, uri: &str) -> (StatusCode, String) {
    send(router(Arc::clone(state)), Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn get(uri: &str) -> (StatusCode, Value) {
    let (s, b) = get_raw(shared(), uri).await;
    (s, serde_json::from_str(&b).unwrap())
}

async fn post(state: &Arc<SessionState>, body: Value) -> (StatusCode, Value) {
    let req = Request::post("/evaluate")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (s, b) = send(router(Arc::clone(state)), req).await;
    (s, serde_json::from_str(&b).unwrap())
}

fn planted_starts() -> Vec<(String, u64)> {
    let mut out: Vec<(String, u64)> = fixture()
        .1
        .plants
        .iter()
        .filter(|p| matches!(p.plant, Plant::HourSpike { .. }))
        .map(|p| (p.slots[0].day.clone(), p.slots[0].hour as u64))
        .collect();
    out.sort();
    out
}

fn event_id_at(events: &Value, day: &str) -> usize {
    events["events"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["start"]["day"] == day)
        .unwrap()["id"]
        .as_u64()
        .unwrap() as usize
}

#[tokio::test]
async fn events_are_the_planted_spikes() {
    let (s, v) = get("/events").await;
    assert_eq!(s, StatusCode::OK);
    let found: Vec<(String, u64)> = v["events"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e["start"]["day"].as_str().unwrap().to_owned(), e["start"]["hour"].as_u64().unwrap()))
        .collect();
    assert_eq!(found, planted_starts());
    assert_eq!(v["count"], 10);
    // 31 x 24 hour cells, first page only
    assert_eq!(v["hours"]["cell_count"], 744);
    assert_eq!(v["hours"]["cells"].as_array().unwrap().len(), 500);
}

#[tokio::test]
async fn pagination_windows_the_cell_list() {
    let (_, v) = get("/events?offset=700&limit=100").await;
    assert_eq!(v["hours"]["cells"].as_array().unwrap().len(), 44);
    assert_eq!(v["hours"]["offset"], 700);
    let (s, _) = get("/events?limit=1000000").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn repeated_gets_are_byte_identical_and_cache_transparent() {
    let cold = state();
    let (_, first) = get_raw(&cold, "/events/3/authors").await;
    let cached = cold.cached_responses();
    let (_, second) = get_raw(&cold, "/events/3/authors").await;
    assert_eq!(first, second);
    assert_eq!(cold.cached_responses(), cached);
    let (_, other) = get_raw(&state(), "/events/3/authors").await;
    assert_eq!(first, other);
}

#[tokio::test]
async fn authors_carry_the_cause_kind() {
    let (_, events) = get("/events").await;
    let id = event_id_at(&events, "2016-11-15");
    let (s, v) = get(&format!("/events/{id}/authors")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["cause"]["kind"], "one-main");
    assert_eq!(v["cause"]["main_entities"][0]["entity"], "mayor");
    assert!(v["summary"]["histogram"].as_array().unwrap().len() > 1);
    let total: f64 = v["event_total"].as_f64().unwrap();
    assert!(total > 0.0);
}

#[tokio::test]
async fn spreaders_default_to_the_main_author() {
    let (_, events) = get("/events").await;
    let single = event_id_at(&events, "2016-11-15");
    let (s, v) = get(&format!("/events/{single}/spreaders")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["author"], "mayor");
    assert_eq!(v["regime"]["kind"], "single-activist");
    assert_eq!(v["regime"]["group"][0]["entity"], "user-77");

    let group = event_id_at(&events, "2016-11-12");
    let (_, v) = get(&format!("/events/{group}/spreaders?author=newsdesk")).await;
    assert_eq!(v["regime"]["kind"], "activist-group");
    assert!(v["regime"]["group"].as_array().unwrap().len() >= 10);
}

#[tokio::test]
async fn spreaders_need_an_author_without_a_single_main_one() {
    let (_, events) = get("/events").await;
    let id = event_id_at(&events, "2016-11-24");
    let (s, v) = get(&format!("/events/{id}/spreaders")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "author_required");
}

#[tokio::test]
async fn event_hashtags_find_the_hot_hashtag() {
    let (_, events) = get("/events").await;
    let id = event_id_at(&events, "2016-11-24");
    let (s, v) = get(&format!("/events/{id}/hashtags")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["anomalies"][0]["hashtag"], "debate");
}

#[tokio::test]
async fn unknown_things_are_404() {
    assert_eq!(get("/events/99/authors").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get("/events/x/authors").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get("/events/0/spreaders?author=nobody").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get("/nowhere").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get("/predict?s=ghost&k=debate&d=2016-11-24&h=22").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get("/predict?s=user-5&k=nope&d=2016-11-24&h=22").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn bad_parameters_are_400() {
    let (s, v) = get("/events?sigma=-1").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "bad_request");
    assert_eq!(get("/events?colour=red").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get("/events?deviation=zscore").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get("/topics").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get("/topics?n=0").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get("/predict?s=user-5&k=debate&d=2016-11-24&h=24").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn sigma_changes_the_event_list() {
    let (_, strict) = get("/events?sigma=6").await;
    let (_, loose) = get("/events?sigma=3").await;
    assert!(strict["count"].as_u64().unwrap() <= loose["count"].as_u64().unwrap());
    assert_eq!(strict["policy"]["sigma_multiplier"], 6.0);
}

#[tokio::test]
async fn topics_of_size_one_are_abnormal_hashtags() {
    let (s, v) = get("/topics?n=1").await;
    assert_eq!(s, StatusCode::OK);
    let topics = v["topics"].as_array().unwrap();
    let candidates = v["candidates"].as_array().unwrap();
    assert!(candidates.contains(&json!("debate")));
    assert!(!topics.is_empty());
    for t in topics {
        assert!(candidates.contains(&t["hashtags"][0]));
        assert!(!t["spreaders"].as_array().unwrap().is_empty());
        assert!(!t["authors"].as_array().unwrap().is_empty());
    }
    // more than the candidates: vacuously empty
    let (s, v) = get("/topics?n=500").await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["topics"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn predict_multiplies_the_three_factors() {
    let (s, v) = get("/predict?s=user-5&k=debate&d=2016-11-24&h=22").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["community"], "c1");
    let product = v["community_topic_share"].as_f64().unwrap()
        * v["user_hour_share"].as_f64().unwrap()
        * v["topic_volume"].as_f64().unwrap();
    assert!((v["expected"].as_f64().unwrap() - product).abs() < 1e-12);
    let (_, mean) = get("/predict?s=user-5&k=debate&d=2016-11-24&h=22&mode=mean-day").await;
    assert_eq!(mean["mode"], "mean-day");
}

#[tokio::test]
async fn predict_without_communities_is_409() {
    let dataset = Dataset::from_log(&fixture().0, None).unwrap();
    let st = Arc::new(SessionState::new(Some(dataset), Defaults::default()));
    let (s, b) = get_raw(&st, "/predict?s=user-5&k=debate&d=2016-11-24&h=22").await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert!(b.contains("not_loaded"));
}

#[tokio::test]
async fn schema_lists_both_cubes() {
    let (s, v) = get("/schema").await;
    assert_eq!(s, StatusCode::OK);
    let names: Vec<&str> = v["interactions"].as_array().unwrap().iter().map(|d| d["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["spreader", "author", "day", "hour"]);
    assert_eq!(v["hashtags"].as_array().unwrap().len(), 5);
    assert_eq!(v["days"]["count"], 31);
    assert_eq!(v["communities"], 4);
}

#[tokio::test]
async fn evaluate_presets_and_spec_text_agree() {
    let st = shared();
    let (s, preset) = post(st, json!({"keep": ["day", "hour"], "preset": "multiagg"})).await;
    assert_eq!(s, StatusCode::OK);
    let (s, text) = post(st, json!({"keep": ["day", "hour"], "spec": "expect = cube(day) * cube(hour) / cube()"})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(preset["summary"], text["summary"]);
    assert_eq!(preset["summary"]["cell_count"], 744);

    let (s, basic) = post(st, json!({"keep": ["day", "hour"], "preset": "basic", "deviation": "ratio", "limit": 3})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(basic["function"]["kind"], "ratio");
    assert_eq!(basic["summary"]["cells"].as_array().unwrap().len(), 3);

    let (s, agg) = post(
        st,
        json!({"keep": ["author", "hour"], "filter": {"author": ["mayor", "newsdesk"]}, "preset": "aggregative"}),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(agg["summary"]["cell_count"], 48);
}

#[tokio::test]
async fn evaluate_accepts_a_full_trace() {
    let (s, v) = post(
        shared(),
        json!({
            "trace": [{"op": "aggregate", "dims": ["spreader", "author"]}],
            "preset": "aggregative",
            "spread": ["hour"],
            "policy": {"sigma_multiplier": 2.0}
        }),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["policy"]["sigma_multiplier"], 2.0);
}

#[tokio::test]
async fn evaluate_errors() {
    let st = shared();
    let (s, v) = post(st, json!({"keep": ["day", "hour"], "spec": "expect = cube(day) *"})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "malformed_spec");
    let (s, _) = post(st, json!({"keep": ["day", "hour"], "spec": "cube()", "preset": "basic"})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = post(st, json!({"keep": ["planet"], "preset": "basic"})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = post(st, json!({"preset": "basic", "surprise": 1})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, v) = post(st, json!({"filter": {"author": ["nobody"]}, "preset": "basic"})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"]["code"], "empty");

    let req = Request::post("/evaluate").body(Body::from("{not json")).unwrap();
    let (s, b) = send(router(Arc::clone(st)), req).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(b.contains("malformed_request"));
}

#[tokio::test]
async fn nothing_loaded_is_409_everywhere() {
    let st = Arc::new(SessionState::new(None, Defaults::default()));
    for uri in ["/schema", "/events", "/events/0/authors", "/hashtags", "/topics?n=1"] {
        let (s, b) = get_raw(&st, uri).await;
        assert_eq!(s, StatusCode::CONFLICT, "{uri}");
        assert!(b.contains("not_loaded"));
    }
    let (s, v) = post(&st, json!({"preset": "basic"})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"]["code"], "not_loaded");
}

#[tokio::test]
async fn empty_log_evaluates_to_409_empty() {
    let dataset = Dataset::from_log(&ParsedLog::default(), None).unwrap();
    let st = Arc::new(SessionState::new(Some(dataset), Defaults::default()));
    let (s, v) = post(&st, json!({"preset": "basic"})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"]["code"], "empty");
    let (s, _) = get_raw(&st, "/events").await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[test]
fn openapi_describes_every_route() {
    let doc = include_str!("../openapi.yaml");
    for path in [
        "/schema:",
        "/evaluate:",
        "/events:",
        "/events/{id}/authors:",
        "/events/{id}/spreaders:",
        "/events/{id}/hashtags:",
        "/hashtags:",
        "/topics:",
        "/predict:",
    ] {
        assert!(doc.contains(&format!("  {path}\n")), "{path}");
    }
}
