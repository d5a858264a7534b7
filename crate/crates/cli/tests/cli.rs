use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cubelens_core::detect::{group_consecutive, HourSlot};
use serde_json::Value;
use tempfile::TempDir;

fn cubelens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cubelens"))
        .args(args)
        .env_remove("CUBELENS_THREADS")
        .output()
        .expect("run cubelens")
}

fn ok(args: &[&str]) -> String {
    let out = cubelens(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&ok(args)).expect("json stdout")
}

fn synth(preset: &str) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    ok(&["synth", "--out", dir.path().to_str().unwrap(), "--preset", preset]);
    let log = dir.path().join("interactions.csv");
    (dir, log)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn planted_slots(dir: &TempDir, kind: &str) -> Vec<(String, u64)> {
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    manifest["plants"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|p| p["plant"]["kind"] == kind)
        .map(|p| {
            let slot = &p["slots"][0];
            (slot["day"].as_str().unwrap().to_owned(), slot["hour"].as_u64().unwrap())
        })
        .collect()
}

#[test]
fn events_recover_the_planted_spikes() {
    let (dir, log) = synth("fixture");
    let out = json(&["events", "-i", s(&log), "--format", "json"]);
    let found: Vec<(String, u64)> = out["events"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e["start"]["day"].as_str().unwrap().to_owned(), e["start"]["hour"].as_u64().unwrap()))
        .collect();
    let planted = planted_slots(&dir, "hour-spike");
    assert_eq!(planted.len(), 10);
    for p in &planted {
        assert!(found.contains(p), "missed planted spike {p:?}; found {found:?}");
    }
    assert_eq!(out["count"], out["events"].as_array().unwrap().len());
}

#[test]
fn events_are_runs_of_positive_multiagg_outliers() {
    let (_dir, log) = synth("fixture");
    let hours = json(&["hours", "-i", s(&log), "--context", "multiagg", "--format", "json"]);
    let mut slots: Vec<HourSlot> = hours["summary"]["outliers"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["sign"] == "positive")
        .map(|c| {
            let coord = c["coord"].as_array().unwrap();
            HourSlot::new(coord[0].as_str().unwrap(), coord[1].as_str().unwrap().parse().unwrap())
        })
        .collect();
    slots.sort();
    let expected: Vec<String> = group_consecutive(&slots).unwrap().iter().map(|e| e.label()).collect();
    let events = json(&["events", "-i", s(&log), "--format", "json"]);
    let labels: Vec<String> = events["events"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["label"].as_str().unwrap().to_owned())
        .collect();
    assert_eq!(labels, expected);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (_dir, log) = synth("fixture");
    for format in ["json", "table"] {
        let a = ok(&["events", "-i", s(&log), "--format", format]);
        let b = ok(&["events", "-i", s(&log), "--format", format]);
        assert_eq!(a, b);
    }
    let one = cubelens(&["events", "-i", s(&log), "--format", "json"]);
    let many = Command::new(env!("CARGO_BIN_EXE_cubelens"))
        .args(["events", "-i", s(&log), "--format", "json"])
        .env("CUBELENS_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(one.stdout, many.stdout);
}

#[test]
fn synth_is_seeded() {
    let (a, _) = synth("planted-events");
    let (b, _) = synth("planted-events");
    let read = |d: &TempDir| std::fs::read(d.path().join("interactions.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    let c = TempDir::new().unwrap();
    ok(&["synth", "--out", s(c.path()), "--preset", "planted-events", "--seed", "9"]);
    assert_ne!(read(&a), read(&c));
}

#[test]
fn explain_names_the_mayor_and_its_single_activist() {
    let (dir, log) = synth("fixture");
    let (day, hour) = planted_slots(&dir, "single-activist").remove(0);
    let events = json(&["events", "-i", s(&log), "--format", "json"]);
    let id = events["events"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["start"]["day"] == day.as_str() && e["start"]["hour"] == hour)
        .expect("mayor event detected")["id"]
        .as_u64()
        .unwrap()
        .to_string();
    let out = json(&["explain", "-i", s(&log), "--event", &id, "--format", "json"]);
    assert_eq!(out["authors"]["cause"]["kind"], "one-main");
    assert_eq!(out["authors"]["cause"]["main_entities"][0]["entity"], "mayor");
    assert_eq!(out["spreaders"]["author"], "mayor");
    assert_eq!(out["spreaders"]["regime"]["kind"], "single-activist");
    assert_eq!(out["spreaders"]["regime"]["group"][0]["entity"], "user-77");

    let table = ok(&["explain", "-i", s(&log), "--event", &id]);
    assert!(table.contains("one-main") && table.contains("single-activist"), "{table}");
}

#[test]
fn explain_with_hashtags_finds_the_hot_hashtag() {
    let (dir, log) = synth("fixture");
    let (day, hour) = planted_slots(&dir, "hot-hashtag").remove(0);
    let events = json(&["events", "-i", s(&log), "--format", "json"]);
    let id = events["events"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["start"]["day"] == day.as_str() && e["start"]["hour"] == hour)
        .unwrap()["id"]
        .to_string();
    let out = json(&["hashtags", "-i", s(&log), "--event", &id, "--format", "json"]);
    assert_eq!(out["anomalies"][0]["hashtag"], "debate");
}

#[test]
fn basic_ratio_histogram_is_bimodal() {
    let (_dir, log) = synth("planted-events");
    let out = json(&[
        "hours", "-i", s(&log), "--context", "basic", "--deviation", "ratio", "--bins", "0.1", "--format", "json",
    ]);
    let bins = out["summary"]["histogram"].as_array().unwrap();
    let counts_in = |lo: f64, hi: f64| -> Vec<u64> {
        bins.iter()
            .filter(|b| {
                let x = b["lo"].as_f64().unwrap();
                x >= lo - 1e-9 && x < hi - 1e-9
            })
            .map(|b| b["count"].as_u64().unwrap())
            .collect()
    };
    // A night mode well below the grand mean, a daytime mode above it and
    // a trough between.
    let night = *counts_in(0.2, 0.6).iter().max().unwrap();
    let trough = *counts_in(0.6, 0.9).iter().min().unwrap();
    let day = *counts_in(1.0, 1.5).iter().max().unwrap();
    assert!(night as f64 > 1.5 * trough as f64, "night {night} trough {trough}");
    assert!(day as f64 > 1.5 * trough as f64, "day {day} trough {trough}");
}

#[test]
fn basic_ratio_context_misses_nocturnal_spikes() {
    let (dir, log) = synth("planted-events");
    let out = json(&[
        "hours", "-i", s(&log), "--context", "basic", "--deviation", "ratio", "--limit", "0", "--format", "json",
    ]);
    let flagged: Vec<(String, u64)> = out["summary"]["outliers"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["coord"][0].as_str().unwrap().to_owned(), c["coord"][1].as_str().unwrap().parse().unwrap()))
        .collect();
    let night: Vec<_> = planted_slots(&dir, "hour-spike").into_iter().filter(|(_, h)| *h < 6).collect();
    assert_eq!(night.len(), 3);
    for slot in &night {
        assert!(!flagged.contains(slot), "{slot:?} flagged");
    }
}

#[test]
fn spec_text_matches_the_multiagg_preset() {
    let (_dir, log) = synth("planted-events");
    let preset = json(&["hours", "-i", s(&log), "--context", "multiagg", "--format", "json"]);
    let text = json(&[
        "hours", "-i", s(&log), "--spec", "expect = cube(day) * cube(hour) / cube()", "--format", "json",
    ]);
    assert_eq!(preset["summary"], text["summary"]);
}

#[test]
fn topics_without_hashtags_is_empty() {
    let dir = TempDir::new().unwrap();
    let log = dir.path().join("plain.csv");
    std::fs::write(&log, "1478000000,a,b\n1478003600,c,b\n1478007200,a,d\n").unwrap();
    let out = json(&["topics", "-i", s(&log), "--n", "1", "--format", "json", "--log-format", "triplet"]);
    assert_eq!(out["topics"], Value::Array(vec![]));
}

#[test]
fn topics_from_explicit_candidates() {
    let (_dir, log) = synth("fixture");
    let out = json(&["topics", "-i", s(&log), "--n", "1", "--candidates", "tag1,tag2,tag1", "--format", "json"]);
    assert_eq!(out["candidates"], serde_json::json!(["tag1", "tag2"]));
    let topics = out["topics"].as_array().unwrap();
    assert_eq!(topics.len(), 2);
    assert_eq!(topics[0]["hashtags"], serde_json::json!(["tag1"]));
    assert!(!topics[0]["spreaders"].as_array().unwrap().is_empty());
}

#[test]
fn predict_reports_the_three_factors() {
    let (dir, log) = synth("fixture");
    let communities = dir.path().join("communities.csv");
    let lines: String = (0..2000).map(|i| format!("user-{i},c{}\n", i % 4)).collect();
    std::fs::write(&communities, lines).unwrap();
    let out = json(&[
        "predict", "-i", s(&log), "--communities", s(&communities), "--spreader", "user-5", "--topic", "debate",
        "--day", "2016-11-24", "--hour", "22", "--format", "json",
    ]);
    assert_eq!(out["community"], "c1");
    let product = out["community_topic_share"].as_f64().unwrap()
        * out["user_hour_share"].as_f64().unwrap()
        * out["topic_volume"].as_f64().unwrap();
    assert!((out["expected"].as_f64().unwrap() - product).abs() < 1e-12);

    let unknown = cubelens(&[
        "predict", "-i", s(&log), "--communities", s(&communities), "--spreader", "user-5", "--topic", "debate",
        "--day", "1999-01-01", "--hour", "22",
    ]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn ingest_summarizes_and_anonymizes() {
    let dir = TempDir::new().unwrap();
    let log = dir.path().join("log.csv");
    std::fs::write(
        &log,
        "# comment\n1478000000,alice,bob,#Débat;x\nnot a line\n1478003600,carol,bob\n",
    )
    .unwrap();
    let out = cubelens(&["ingest", "-i", s(&log), "--format", "json"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["records"], 2);
    assert_eq!(report["hashtag_records"], 2);
    assert_eq!(report["malformed_lines"], 1);
    assert_eq!(report["authors"], 1);

    let anon = dir.path().join("anon.csv");
    ok(&["ingest", "-i", s(&log), "--anonymize", s(&anon), "--salt", "pepper"]);
    let text = std::fs::read_to_string(&anon).unwrap();
    assert!(!text.contains("alice") && !text.contains("bob") && !text.contains("carol"));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("1478000000,") && lines[0].ends_with(",#Débat;x"));
    // The same name maps to the same alias everywhere.
    let author = |l: &str| l.split(',').nth(2).unwrap().to_owned();
    assert_eq!(author(lines[0]), author(lines[1]));
    let again = dir.path().join("again.csv");
    ok(&["ingest", "-i", s(&log), "--anonymize", s(&again), "--salt", "pepper"]);
    assert_eq!(text, std::fs::read_to_string(&again).unwrap());
}

#[test]
fn exit_codes_separate_usage_from_data_errors() {
    let (_dir, log) = synth("planted-events");
    assert_eq!(cubelens(&["events", "--nope"]).status.code(), Some(1));
    assert_eq!(cubelens(&["events", "-i", s(&log), "--sigma", "-1"]).status.code(), Some(1));
    assert_eq!(cubelens(&["events", "-i", s(&log), "--tz", "+99:00"]).status.code(), Some(1));
    assert_eq!(cubelens(&["hours", "-i", s(&log), "--spec", "expect = ("]).status.code(), Some(1));
    assert_eq!(cubelens(&["events", "-i", "/no/such/file.csv"]).status.code(), Some(2));
    assert_eq!(cubelens(&["explain", "-i", s(&log), "--event", "999"]).status.code(), Some(2));
    let threads = Command::new(env!("CARGO_BIN_EXE_cubelens"))
        .args(["events", "-i", s(&log)])
        .env("CUBELENS_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(1));
    assert!(cubelens(&["--help"]).status.success());
}

#[test]
fn time_zone_shifts_the_binning() {
    let dir = TempDir::new().unwrap();
    let log = dir.path().join("log.csv");
    // 2016-11-01 23:30 UTC.
    std::fs::write(&log, "1478043000,a,b\n").unwrap();
    let utc = json(&["ingest", "-i", s(&log), "--format", "json"]);
    let east = json(&["ingest", "-i", s(&log), "--tz", "+02:00", "--format", "json"]);
    assert_eq!(utc["first_day"], "2016-11-01");
    assert_eq!(east["first_day"], "2016-11-02");
}
