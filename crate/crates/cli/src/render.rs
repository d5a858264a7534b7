//! Plain-text reports.

use std::fmt::Write;

use cubelens_core::detect::{
    cells_table, entities_table, AuthorAnalysis, EvaluationSummary, EventSummary, HashtagAnalysis,
    HashtagAnomaly, LinkPrediction, SpreaderAnalysis, Table, Topic,
};
use cubelens_core::deviation::DeviationStats;

fn num(v: f64, digits: usize) -> String {
    if v.is_finite() {
        format!("{v:.digits$}")
    } else {
        "-".into()
    }
}

fn stats_line(s: &DeviationStats) -> String {
    format!(
        "mean {}  std {}  median {}  mad {}",
        num(s.mean, 3),
        num(s.std, 3),
        num(s.median, 3),
        num(s.mad, 3)
    )
}

pub fn evaluation(title: &str, summary: &EvaluationSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{title}: {} cells", summary.cell_count);
    let _ = writeln!(out, "{}", stats_line(&summary.stats));
    match (summary.threshold, summary.warning) {
        (Some((lo, hi)), _) => {
            let _ = writeln!(out, "outside [{}, {}]: {} cells", num(lo, 3), num(hi, 3), summary.outlier_count);
        }
        (None, Some(w)) => {
            let _ = writeln!(out, "no outliers: {w:?}");
        }
        (None, None) => {}
    }
    if !summary.histogram.is_empty() {
        let peak = summary.histogram.iter().map(|b| b.count).max().unwrap_or(1).max(1);
        let _ = writeln!(out, "\nhistogram");
        for b in &summary.histogram {
            let bar = "#".repeat(((b.count * 50).div_ceil(peak)) as usize);
            let _ = writeln!(out, "{:>10} {:>7} {bar}", num(b.lo, 3), b.count);
        }
    }
    if !summary.outliers.is_empty() {
        let _ = writeln!(out, "\noutliers");
        out.push_str(&cells_table(summary, &summary.outliers).to_string());
    }
    out
}

pub fn explanation(
    event: &EventSummary,
    authors: &AuthorAnalysis,
    spreaders: Option<&SpreaderAnalysis>,
    hashtags: Option<&HashtagAnalysis>,
) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "event {}: {} ({} retweets, {} expected)",
        event.id,
        event.label,
        event.observed,
        num(event.expected, 1)
    );
    let c = &authors.classification;
    let _ = writeln!(out, "\nauthors: {} ({} retweets in the event)", kebab(&c.kind), authors.event_total);
    if !c.main_entities.is_empty() {
        out.push_str(&entities_table("author", &c.main_entities).to_string());
    }
    match spreaders {
        Some(s) => {
            let _ = writeln!(
                out,
                "\nspreaders of {}: {} (share {})",
                s.author,
                kebab(&s.regime.kind),
                num(s.regime.share, 3)
            );
            if !s.regime.group.is_empty() {
                out.push_str(&entities_table("spreader", &s.regime.group).to_string());
            }
        }
        None => {
            let _ = writeln!(out, "\nno single main author; pass --author to drill into spreaders");
        }
    }
    if let Some(h) = hashtags {
        let _ = writeln!(out, "\nhashtags");
        out.push_str(&self::hashtags(&h.anomalies));
    }
    out
}

fn kebab<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

pub fn hashtags(anomalies: &[HashtagAnomaly]) -> String {
    if anomalies.is_empty() {
        return "no abnormal hashtags\n".into();
    }
    let mut t = Table::new(["hashtag", "day", "hour", "observed", "expected", "deviation"]);
    for a in anomalies {
        t.row([
            a.hashtag.clone(),
            a.day.clone().unwrap_or_default(),
            a.hour.map(|h| h.to_string()).unwrap_or_default(),
            a.observed.to_string(),
            num(a.expected, 2),
            num(a.deviation, 3),
        ]);
    }
    t.to_string()
}

pub fn topics(topics: &[Topic]) -> String {
    if topics.is_empty() {
        return "no topics\n".into();
    }
    let mut t = Table::new(["hashtags", "spreaders", "authors"]);
    for topic in topics {
        t.row([topic.hashtags.join(","), topic.spreaders.join(","), topic.authors.join(",")]);
    }
    t.to_string()
}

pub fn prediction(p: &LinkPrediction) -> String {
    let opt = |v: Option<f64>| v.map(|v| num(v, 6)).unwrap_or_else(|| "-".into());
    let mut t = Table::new(["field", "value"]);
    t.row(["spreader".to_owned(), p.spreader.clone()]);
    t.row(["community".to_owned(), p.community.clone()]);
    t.row(["topic".to_owned(), p.hashtags.join(",")]);
    t.row(["slot".to_owned(), format!("{} {}h", p.day, p.hour)]);
    t.row(["community topic share".to_owned(), opt(p.community_topic_share)]);
    t.row(["user hour share".to_owned(), opt(p.user_hour_share)]);
    t.row(["topic volume".to_owned(), num(p.topic_volume, 6)]);
    t.row(["expected".to_owned(), opt(p.expected)]);
    t.to_string()
}
