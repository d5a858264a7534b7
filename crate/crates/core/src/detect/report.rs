//! Serializable summaries and aligned text tables.

use std::fmt;

use serde::Serialize;

use super::drill::MainEntity;
use super::Event;
use crate::deviation::{
    ContextEvaluation, Deviation, DeviationStats, HistogramBin, OutlierSet, OutlierWarning, Sign,
};

/// Column-aligned plain-text table. Numeric-looking cells are right-aligned.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row<S: Into<String>>(&mut self, cells: impl IntoIterator<Item = S>) {
        self.rows.push(cells.into_iter().map(Into::into).collect());
    }
}

fn numeric(s: &str) -> bool {
    !s.is_empty() && s.parse::<f64>().is_ok()
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cols = self.headers.len();
        let mut width: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (i, c) in r.iter().enumerate().take(cols) {
                width[i] = width[i].max(c.chars().count());
            }
        }
        let line = |f: &mut fmt::Formatter<'_>, cells: &[String], header: bool| -> fmt::Result {
            let mut out = String::new();
            for (i, w) in width.iter().enumerate() {
                let c = cells.get(i).map(String::as_str).unwrap_or("");
                if i > 0 {
                    out.push_str("  ");
                }
                if !header && numeric(c) {
                    out.push_str(&format!("{c:>w$}"));
                } else {
                    out.push_str(&format!("{c:<w$}"));
                }
            }
            writeln!(f, "{}", out.trim_end())
        };
        line(f, &self.headers, true)?;
        let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
        line(f, &rule, true)?;
        for r in &self.rows {
            line(f, r, false)?;
        }
        Ok(())
    }
}

pub fn render_table(table: &Table) -> String {
    table.to_string()
}

fn fixed(v: f64, digits: usize) -> String {
    if v.is_finite() {
        format!("{v:.digits$}")
    } else {
        "-".into()
    }
}

/// One evaluated cell, with labels instead of ids.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub coord: Vec<String>,
    pub observed: u64,
    pub expected: f64,
    pub deviation: Option<f64>,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sign: Option<Sign>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

fn status(d: &Deviation) -> &'static str {
    match d {
        Deviation::Finite(_) => "ok",
        Deviation::Capped(_) => "capped",
        Deviation::Unsupported => "unsupported",
    }
}

pub fn cell_report(eval: &ContextEvaluation, outliers: &OutlierSet, index: usize) -> CellReport {
    let c = &eval.cells[index];
    let hit = outliers
        .outliers
        .binary_search_by_key(&index, |o| o.index)
        .ok()
        .map(|i| outliers.outliers[i]);
    CellReport {
        coord: eval.labels(&c.coord),
        observed: c.observed,
        expected: c.expected,
        deviation: c.deviation.value(),
        status: status(&c.deviation),
        sign: hit.map(|o| o.sign),
        score: hit.map(|o| o.score),
    }
}

/// Evaluation digest: statistics, histogram, ranked outliers and one page
/// of cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationSummary {
    pub dims: Vec<String>,
    pub cell_count: usize,
    pub stats: DeviationStats,
    pub threshold: Option<(f64, f64)>,
    pub warning: Option<OutlierWarning>,
    pub outlier_count: usize,
    pub histogram: Vec<HistogramBin>,
    /// Most deviant first.
    pub outliers: Vec<CellReport>,
    pub excluded: Vec<CellReport>,
    pub offset: usize,
    pub limit: usize,
    pub cells: Vec<CellReport>,
}

/// Bin width giving roughly 40 bins over the finite deviation range.
pub fn default_bin_width(eval: &ContextEvaluation) -> f64 {
    let (lo, hi) = eval
        .cells
        .iter()
        .filter_map(|c| c.deviation.finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), d| (l.min(d), h.max(d)));
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return 1.0;
    }
    let raw = span / 40.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

impl EvaluationSummary {
    pub fn new(
        eval: &ContextEvaluation,
        outliers: &OutlierSet,
        bin_width: Option<f64>,
        offset: usize,
        limit: usize,
    ) -> Self {
        let mut ranked: Vec<CellReport> = outliers
            .outliers
            .iter()
            .map(|o| cell_report(eval, outliers, o.index))
            .collect();
        ranked.sort_by(|a, b| {
            let (x, y) = (a.score.unwrap_or(0.0).abs(), b.score.unwrap_or(0.0).abs());
            y.total_cmp(&x).then_with(|| a.coord.cmp(&b.coord))
        });
        let threshold = outliers.warning.is_none().then(|| {
            let (center, spread) = match eval.policy.center {
                crate::deviation::Center::Mean => (eval.stats.mean, eval.stats.std),
                crate::deviation::Center::Median => {
                    (eval.stats.median, crate::deviation::MAD_SCALE * eval.stats.mad)
                }
            };
            let k = eval.policy.sigma_multiplier * spread;
            (center - k, center + k)
        });
        Self {
            dims: eval.dims.iter().map(|d| d.name().to_owned()).collect(),
            cell_count: eval.cells.len(),
            stats: eval.stats,
            threshold,
            warning: outliers.warning,
            outlier_count: outliers.outliers.len(),
            histogram: eval.histogram(bin_width.unwrap_or_else(|| default_bin_width(eval))),
            outliers: ranked,
            excluded: outliers
                .excluded
                .iter()
                .map(|&i| cell_report(eval, outliers, i))
                .collect(),
            offset,
            limit,
            cells: (offset..eval.cells.len().min(offset.saturating_add(limit)))
                .map(|i| cell_report(eval, outliers, i))
                .collect(),
        }
    }
}

/// One row of the event list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventSummary {
    pub id: usize,
    pub label: String,
    pub start: super::HourSlot,
    pub end: super::HourSlot,
    pub hours: usize,
    pub hours_of_day: Vec<u8>,
    pub observed: u64,
    pub expected: f64,
    pub peak_deviation: f64,
}

pub fn event_summaries(hour_eval: &ContextEvaluation, events: &[Event]) -> Vec<EventSummary> {
    let di = hour_eval.dim_index(super::dims::DAY);
    let hi = hour_eval.dim_index(super::dims::HOUR);
    events
        .iter()
        .map(|e| {
            let (mut observed, mut expected, mut peak) = (0u64, 0.0, f64::NEG_INFINITY);
            if let (Some(di), Some(hi)) = (di, hi) {
                for slot in &e.hours {
                    let hour = slot.hour.to_string();
                    let mut labels = vec![""; 2];
                    labels[di] = &slot.day;
                    labels[hi] = &hour;
                    if let Some(c) = hour_eval.find(&labels) {
                        observed += c.observed;
                        expected += c.expected;
                        if let Some(d) = c.deviation.value() {
                            peak = peak.max(d);
                        }
                    }
                }
            }
            EventSummary {
                id: e.id,
                label: e.label(),
                start: e.first().clone(),
                end: e.last().clone(),
                hours: e.hours.len(),
                hours_of_day: e.hours_of_day().into_iter().collect(),
                observed,
                expected,
                peak_deviation: peak,
            }
        })
        .collect()
}

pub fn events_table(events: &[EventSummary]) -> Table {
    let mut t = Table::new(["id", "start", "end", "hours", "observed", "expected", "peak deviation"]);
    for e in events {
        t.row([
            e.id.to_string(),
            format!("{} {}h", e.start.day, e.start.hour),
            format!("{} {}h", e.end.day, e.end.hour),
            e.hours.to_string(),
            e.observed.to_string(),
            fixed(e.expected, 1),
            fixed(e.peak_deviation, 3),
        ]);
    }
    t
}

pub fn entities_table(kind: &str, entities: &[MainEntity]) -> Table {
    let mut t = Table::new([kind, "observed", "expected", "deviation"]);
    for e in entities {
        t.row([
            e.entity.clone(),
            e.observed.to_string(),
            fixed(e.expected, 2),
            fixed(e.deviation, 3),
        ]);
    }
    t
}

pub fn cells_table(summary: &EvaluationSummary, cells: &[CellReport]) -> Table {
    let mut headers = summary.dims.clone();
    headers.extend(["observed", "expected", "deviation", "status", "outlier"].map(String::from));
    let mut t = Table::new(headers);
    for c in cells {
        let mut row = c.coord.clone();
        row.push(c.observed.to_string());
        row.push(fixed(c.expected, 3));
        row.push(c.deviation.map(|d| fixed(d, 4)).unwrap_or_else(|| "-".into()));
        row.push(c.status.into());
        row.push(match c.sign {
            Some(Sign::Positive) => "+".into(),
            Some(Sign::Negative) => "-".into(),
            None => String::new(),
        });
        t.row(row);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_columns() {
        let mut t = Table::new(["name", "count"]);
        t.row(["alice", "7"]);
        t.row(["bo", "1234"]);
        assert_eq!(
            render_table(&t),
            "name   count\n-----  -----\nalice      7\nbo      1234\n"
        );
    }

    #[test]
    fn histogram_width_is_round() {
        use crate::cube::{cube_from_rows, CubeStore, DimSpec, DimensionSchema};
        use crate::deviation::{DeviationFunction, OutlierPolicy};
        use crate::estimator::expected_basic;
        let schema = DimensionSchema::new(vec![DimSpec::categorical("x")]).unwrap();
        let rows: Vec<(Vec<String>, u64)> = (0..50).map(|i| (vec![format!("v{i}")], 1 + i as u64)).collect();
        let rows: Vec<(&[String], u64)> = rows.iter().map(|(v, n)| (v.as_slice(), *n)).collect();
        let cube = cube_from_rows(&schema, &rows).unwrap();
        let store = CubeStore::new(cube.clone()).unwrap();
        let f = expected_basic(&store, &cube).unwrap();
        let eval = ContextEvaluation::from_field(&f, DeviationFunction::ratio(), OutlierPolicy::default());
        let w = default_bin_width(&eval);
        // ratios span 1/25.5 .. 50/25.5, about 1.92
        assert_eq!(w, 0.05);
        let summary = EvaluationSummary::new(&eval, &eval.outliers(), None, 10, 5);
        assert_eq!(summary.cells.len(), 5);
        assert_eq!(summary.cells[0].coord, ["v10"]);
        assert_eq!(summary.histogram.iter().map(|b| b.count).sum::<u64>(), 50);
    }
}
