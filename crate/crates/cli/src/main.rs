//! `cubelens`: batch entry points over an interaction log.
//!
//! Reports go to stdout, diagnostics to stderr. Exit status is 0 on
//! success, 1 on usage errors and 2 on data errors.

mod render;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use chrono::FixedOffset;
use clap::{Args, Parser, Subcommand, ValueEnum};
use cubelens_core::cube::CubeStore;
use cubelens_core::detect::{
    abnormal_hashtags_for_event, abnormal_hashtags_global, discover_topics, event_summaries,
    events_for, evaluate_hours, explain_event_authors, explain_event_spreaders, hour_trace,
    predict_user_topic, CauseKind, DetectError, DrillConfig, EvaluationSummary, Event, HourContext, Table, events_table,
    LinkPredictionMode,
};
use cubelens_core::deviation::{
    Center, ContextEvaluation, DeviationFunction, DeviationKind, OutlierPolicy, Side, Survival,
};
use cubelens_core::estimator::{expected_ratio_product, parse_spec, Catalog, EstimatorError};
use cubelens_core::ingest::{self, LogFormat, ParsedLog};
use cubelens_core::synth::{self, RegimeScenario, ScenarioSpec};
use cubelens_service::{Dataset, Defaults, SessionState};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn data(e: impl ToString) -> CliError {
    CliError::Data(e.to_string())
}

impl From<DetectError> for CliError {
    fn from(e: DetectError) -> Self {
        match e {
            DetectError::Estimator(EstimatorError::Parse(p)) => usage(p),
            DetectError::InvalidHour(_) | DetectError::TopicSize { .. } => usage(e),
            other => data(other),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "cubelens", version, about = "Contextual anomaly detection over interaction logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a log and summarize it; optionally write an anonymized copy
    Ingest(IngestArgs),
    /// Score every (day, hour) in one hour context
    Hours(HoursArgs),
    /// Runs of abnormal hours under the day x hour-profile context
    Events(EventsArgs),
    /// Author, then spreader, drill-down of one event
    Explain(ExplainArgs),
    /// Abnormal hashtags, globally or within one event
    Hashtags(HashtagArgs),
    /// Sets of n hashtags sharing abnormal spreaders and authors
    Topics(TopicArgs),
    /// Expected activity of a spreader on a topic at one hour
    Predict(PredictArgs),
    /// Serve the JSON/HTTP API over one log
    Serve(ServeArgs),
    /// Write a synthetic log with planted anomalies and its manifest
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LogFormatArg {
    Triplet,
    Quad,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Interaction log: `timestamp,spreader,author[,tag;tag]` lines, plain or gzipped
    #[arg(short, long, value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "quad")]
    log_format: LogFormatArg,
    /// UTC offset for binning timestamps into days and hours, e.g. +02:00
    #[arg(long, default_value = "+00:00", allow_hyphen_values = true)]
    tz: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DeviationArg {
    Poisson,
    Ratio,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SurvivalArg {
    /// -ln P(X > f)
    Gt,
    /// -ln P(X >= f)
    Geq,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SideArg {
    Both,
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CenterArg {
    Mean,
    Median,
}

#[derive(Debug, Args)]
struct ScoringArgs {
    #[arg(long, value_enum, default_value = "poisson")]
    deviation: DeviationArg,
    /// Outlier threshold in standard deviations
    #[arg(long, default_value_t = 3.0)]
    sigma: f64,
    /// Upper Poisson tail
    #[arg(long, value_enum, default_value = "gt")]
    survival: SurvivalArg,
    #[arg(long, value_enum, default_value = "both")]
    side: SideArg,
    #[arg(long, value_enum, default_value = "mean")]
    center: CenterArg,
}

impl ScoringArgs {
    fn resolve(&self) -> Result<(DeviationFunction, OutlierPolicy)> {
        let function = DeviationFunction {
            kind: match self.deviation {
                DeviationArg::Poisson => DeviationKind::Poisson,
                DeviationArg::Ratio => DeviationKind::Ratio,
            },
            survival: match self.survival {
                SurvivalArg::Gt => Survival::Greater,
                SurvivalArg::Geq => Survival::GreaterOrEqual,
            },
        };
        let policy = OutlierPolicy::new(self.sigma)
            .map_err(usage)?
            .with_side(match self.side {
                SideArg::Both => Side::Both,
                SideArg::Positive => Side::Positive,
                SideArg::Negative => Side::Negative,
            })
            .with_center(match self.center {
                CenterArg::Mean => Center::Mean,
                CenterArg::Median => Center::Median,
            });
        Ok((function, policy))
    }

    fn drill(&self) -> Result<DrillConfig> {
        let (function, policy) = self.resolve()?;
        Ok(DrillConfig {
            function,
            policy,
            ..DrillConfig::default()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Cells per page in JSON summaries
    #[arg(long, default_value_t = 500)]
    limit: usize,
    #[arg(long, default_value_t = 0)]
    offset: usize,
    /// Histogram bin width (default: about 40 bins)
    #[arg(long)]
    bins: Option<f64>,
}

impl OutputArgs {
    fn summary(&self, eval: &ContextEvaluation) -> Result<EvaluationSummary> {
        if let Some(w) = self.bins {
            if !(w > 0.0 && w.is_finite()) {
                return Err(usage("--bins must be a positive width"));
            }
        }
        Ok(EvaluationSummary::new(eval, &eval.outliers(), self.bins, self.offset, self.limit))
    }
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Write a copy of the log with user names replaced by salted aliases
    #[arg(long, value_name = "FILE", requires = "salt")]
    anonymize: Option<PathBuf>,
    #[arg(long)]
    salt: Option<String>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Debug, Args)]
struct HoursArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Built-in context: basic, aggregative or multiagg
    #[arg(long, alias = "preset", conflicts_with = "spec")]
    context: Option<HourContext>,
    /// Estimator text over the (day, hour) cube, e.g. "expect = cube(day) * cube(hour) / cube()"
    #[arg(long)]
    spec: Option<String>,
}

#[derive(Debug, Args)]
struct EventsArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Event number as listed by `events`
    #[arg(long)]
    event: usize,
    /// Drill into this author's spreaders even without a single main author
    #[arg(long)]
    author: Option<String>,
    /// Also score the event's hashtags
    #[arg(long)]
    hashtags: bool,
}

#[derive(Debug, Args)]
struct HashtagArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Restrict to one event
    #[arg(long)]
    event: Option<usize>,
}

#[derive(Debug, Args)]
struct TopicArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Topic size
    #[arg(long)]
    n: usize,
    /// Candidate hashtags (default: every hashtag with an abnormal cell)
    #[arg(long, value_delimiter = ',')]
    candidates: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LinkPredArg {
    Literal,
    MeanDay,
}

impl From<LinkPredArg> for LinkPredictionMode {
    fn from(a: LinkPredArg) -> Self {
        match a {
            LinkPredArg::Literal => LinkPredictionMode::Literal,
            LinkPredArg::MeanDay => LinkPredictionMode::MeanDay,
        }
    }
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// `spreader,community` lines
    #[arg(long, value_name = "FILE")]
    communities: PathBuf,
    #[arg(long)]
    spreader: String,
    /// Topic hashtags, comma-separated
    #[arg(long, value_delimiter = ',', required = true)]
    topic: Vec<String>,
    #[arg(long)]
    day: String,
    #[arg(long)]
    hour: u8,
    #[arg(long, value_enum, default_value = "literal")]
    linkpred: LinkPredArg,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Interaction log to load
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// `spreader,community` lines, needed by /predict
    #[arg(long, value_name = "FILE")]
    communities: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
    #[arg(long, value_enum, default_value = "quad")]
    log_format: LogFormatArg,
    #[arg(long, default_value = "+00:00", allow_hyphen_values = true)]
    tz: String,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[arg(long, value_enum, default_value = "literal")]
    linkpred: LinkPredArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthPreset {
    /// Planted events plus drill-down and hashtag plants
    Fixture,
    /// Ten 5x hour spikes, three at night
    PlantedEvents,
    RegimeSingle,
    RegimeGroup,
    RegimeBurst,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory for interactions.csv and manifest.json
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, value_enum, conflicts_with = "spec")]
    preset: Option<SynthPreset>,
    /// Scenario as JSON
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    /// Override the scenario seed
    #[arg(long)]
    seed: Option<u64>,
}

fn zone(tz: &str) -> Result<FixedOffset> {
    ingest::parse_offset(tz).map_err(usage)
}

fn log_format(f: LogFormatArg) -> LogFormat {
    match f {
        LogFormatArg::Triplet => LogFormat::Triplet,
        LogFormatArg::Quad => LogFormat::Quad,
    }
}

fn warn_lines(path: &Path, log: &ParsedLog) {
    for e in &log.errors {
        eprintln!("warning: {}: line {}: {}", path.display(), e.line, e.message);
    }
}

fn load(input: &InputArgs) -> Result<ParsedLog> {
    let log = ingest::read_log(&input.input, log_format(input.log_format), zone(&input.tz)?).map_err(data)?;
    warn_lines(&input.input, &log);
    if log.records.is_empty() {
        return Err(data(format!("{}: no valid records", input.input.display())));
    }
    Ok(log)
}

fn interaction_store(log: &ParsedLog) -> Result<CubeStore> {
    CubeStore::new(log.interaction_cube().map_err(data)?).map_err(data)
}

fn hashtag_store(log: &ParsedLog) -> Result<Option<CubeStore>> {
    if log.hashtag_records.is_empty() {
        return Ok(None);
    }
    Ok(Some(CubeStore::new(log.hashtag_cube().map_err(data)?).map_err(data)?))
}

/// Writes a report to stdout. A closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(data(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn emit_json<T: Serialize>(value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(data)?;
    text.push('\n');
    emit(&text)
}

fn run_ingest(args: &IngestArgs) -> Result<()> {
    let log = load(&args.input)?;
    let distinct = |values: Vec<&str>| values.into_iter().collect::<BTreeSet<_>>().len();
    let days: BTreeSet<&str> = log.records.iter().map(|r| r.day.as_str()).collect();
    let report = json!({
        "records": log.records.len(),
        "hashtag_records": log.hashtag_records.len(),
        "malformed_lines": log.errors.len(),
        "spreaders": distinct(log.records.iter().map(|r| r.spreader.as_str()).collect()),
        "authors": distinct(log.records.iter().map(|r| r.author.as_str()).collect()),
        "hashtags": distinct(log.hashtag_records.iter().filter_map(|r| r.hashtag.as_deref()).collect()),
        "days": days.len(),
        "first_day": days.first(),
        "last_day": days.last(),
    });
    if let (Some(out), Some(salt)) = (&args.anonymize, &args.salt) {
        write_anonymized(&args.input.input, out, salt, &log)?;
    }
    match args.format {
        Format::Json => emit_json(&report),
        Format::Table => {
            let mut t = Table::new(["field", "value"]);
            if let Value::Object(map) = &report {
                for key in [
                    "records",
                    "hashtag_records",
                    "malformed_lines",
                    "spreaders",
                    "authors",
                    "hashtags",
                    "days",
                    "first_day",
                    "last_day",
                ] {
                    let v = &map[key];
                    t.row([key.to_owned(), v.as_str().map(str::to_owned).unwrap_or_else(|| v.to_string())]);
                }
            }
            emit(&t.to_string())
        }
    }
}

/// Rewrites the spreader and author columns; every other byte of a data
/// line is kept. Malformed lines are dropped.
fn write_anonymized(input: &Path, out: &Path, salt: &str, log: &ParsedLog) -> Result<()> {
    let names = log.records.iter().flat_map(|r| [r.spreader.as_str(), r.author.as_str()]);
    let aliases = ingest::anonymize(names, salt);
    let bad: BTreeSet<u64> = log.errors.iter().map(|e| e.line).collect();
    let reader = ingest::open_input(input).map_err(data)?;
    let file = File::create(out).map_err(|e| data(format!("{}: {e}", out.display())))?;
    let mut w = BufWriter::new(file);
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| data(format!("{}: {e}", input.display())))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || bad.contains(&(i as u64 + 1)) {
            continue;
        }
        let mut fields: Vec<String> = trimmed.split(',').map(|f| f.trim().to_owned()).collect();
        for f in fields.iter_mut().skip(1).take(2) {
            if let Some(alias) = aliases.get(f.as_str()) {
                *f = alias.clone();
            }
        }
        writeln!(w, "{}", fields.join(",")).map_err(|e| data(format!("{}: {e}", out.display())))?;
    }
    w.flush().map_err(|e| data(format!("{}: {e}", out.display())))
}

fn run_hours(args: &HoursArgs) -> Result<()> {
    let (function, policy) = args.scoring.resolve()?;
    let log = load(&args.input)?;
    let store = interaction_store(&log)?;
    let (label, eval) = match &args.spec {
        Some(text) => {
            let parsed = parse_spec(text).map_err(usage)?;
            let obs = store.materialize(&hour_trace(store.base())?).map_err(data)?;
            let spec = parsed.compile(&obs, &store, &Catalog::new()).map_err(|e| match e {
                EstimatorError::Parse(_) | EstimatorError::Cube(_) => usage(e),
                other => data(other),
            })?;
            let field = expected_ratio_product(&store, &obs, &spec).map_err(data)?;
            (text.clone(), ContextEvaluation::from_field(&field, function, policy))
        }
        None => {
            let context = args.context.unwrap_or_default();
            let name = serde_json::to_value(context).map_err(data)?;
            let name = name.as_str().unwrap_or_default().to_owned();
            (name, evaluate_hours(&store, context, function, policy)?)
        }
    };
    let summary = args.output.summary(&eval)?;
    match args.output.format {
        Format::Json => emit_json(&json!({
            "context": label,
            "function": function,
            "policy": policy,
            "summary": summary,
        })),
        Format::Table => {
            emit(&render::evaluation(&format!("hours, context {label}"), &summary))
        }
    }
}

fn run_events(args: &EventsArgs) -> Result<()> {
    let (function, policy) = args.scoring.resolve()?;
    let log = load(&args.input)?;
    let store = interaction_store(&log)?;
    let (eval, events) = events_for(&store, function, policy)?;
    let summaries = event_summaries(&eval, &events);
    match args.output.format {
        Format::Json => emit_json(&json!({
            "function": function,
            "policy": policy,
            "count": summaries.len(),
            "events": summaries,
        })),
        Format::Table => {
            emit(&events_table(&summaries).to_string())
        }
    }
}

fn run_explain(args: &ExplainArgs) -> Result<()> {
    let config = args.scoring.drill()?;
    let log = load(&args.input)?;
    let store = interaction_store(&log)?;
    let (eval, events) = events_for(&store, config.function, config.policy)?;
    let event = find_event(&events, args.event)?;
    let summary = event_summaries(&eval, std::slice::from_ref(event)).remove(0);

    let authors = explain_event_authors(&store, event, &config)?;
    let author = args.author.clone().or_else(|| {
        (authors.classification.kind == CauseKind::OneMain)
            .then(|| authors.classification.main_entities[0].entity.clone())
    });
    let spreaders = author
        .as_deref()
        .map(|a| explain_event_spreaders(&store, event, a, &config))
        .transpose()?;
    let hashtags = if args.hashtags {
        let hs = hashtag_store(&log)?.ok_or_else(|| data("the log has no hashtags"))?;
        Some(abnormal_hashtags_for_event(&hs, event, config.function, config.policy)?)
    } else {
        None
    };

    match args.output.format {
        Format::Json => {
            let spreaders = match &spreaders {
                Some(s) => json!({
                    "author": s.author,
                    "event_total": s.event_total,
                    "regime": s.regime,
                    "summary": args.output.summary(&s.evaluation)?,
                }),
                None => Value::Null,
            };
            let hashtags = match &hashtags {
                Some(h) => json!({
                    "anomalies": h.anomalies,
                    "summary": args.output.summary(&h.evaluation)?,
                }),
                None => Value::Null,
            };
            emit_json(&json!({
                "event": summary,
                "authors": {
                    "event_total": authors.event_total,
                    "cause": authors.classification,
                    "summary": args.output.summary(&authors.evaluation)?,
                },
                "spreaders": spreaders,
                "hashtags": hashtags,
            }))
        }
        Format::Table => {
            emit(&render::explanation(&summary, &authors, spreaders.as_ref(), hashtags.as_ref()))
        }
    }
}

fn find_event(events: &[Event], id: usize) -> Result<&Event> {
    events
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| data(format!("no event {id} ({} events detected)", events.len())))
}

fn run_hashtags(args: &HashtagArgs) -> Result<()> {
    let (function, policy) = args.scoring.resolve()?;
    let log = load(&args.input)?;
    let hs = hashtag_store(&log)?.ok_or_else(|| data("the log has no hashtags"))?;
    let analysis = match args.event {
        None => abnormal_hashtags_global(&hs, function, policy)?,
        Some(id) => {
            let store = interaction_store(&log)?;
            let (_, events) = events_for(&store, function, policy)?;
            let event = find_event(&events, id)?;
            abnormal_hashtags_for_event(&hs, event, function, policy)?
        }
    };
    match args.output.format {
        Format::Json => emit_json(&json!({
            "event": args.event,
            "anomalies": analysis.anomalies,
            "summary": args.output.summary(&analysis.evaluation)?,
        })),
        Format::Table => {
            emit(&render::hashtags(&analysis.anomalies))
        }
    }
}

fn run_topics(args: &TopicArgs) -> Result<()> {
    if args.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let (function, policy) = args.scoring.resolve()?;
    let log = load(&args.input)?;
    let (candidates, topics) = match hashtag_store(&log)? {
        None => {
            eprintln!("note: the log has no hashtags");
            (Vec::new(), Vec::new())
        }
        Some(hs) => {
            let candidates: Vec<String> = if args.candidates.is_empty() {
                let global = abnormal_hashtags_global(&hs, function, policy)?;
                global
                    .anomalies
                    .into_iter()
                    .map(|a| a.hashtag)
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect()
            } else {
                args.candidates.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
            };
            let topics = if args.candidates.is_empty() && args.n > candidates.len() {
                Vec::new()
            } else {
                discover_topics(&hs, &candidates, args.n, function, policy)?
            };
            (candidates, topics)
        }
    };
    match args.format {
        Format::Json => emit_json(&json!({
            "n": args.n,
            "candidates": candidates,
            "topics": topics,
        })),
        Format::Table => {
            emit(&render::topics(&topics))
        }
    }
}

fn run_predict(args: &PredictArgs) -> Result<()> {
    if args.hour > 23 {
        return Err(usage("--hour must be in 0..=23"));
    }
    let log = load(&args.input)?;
    let hs = hashtag_store(&log)?.ok_or_else(|| data("the log has no hashtags"))?;
    let communities = ingest::open_input(&args.communities)
        .and_then(ingest::parse_communities)
        .map_err(data)?;
    if hs.base().dim(ingest::dims::DAY).map_err(data)?.id(&args.day).is_none() {
        return Err(data(format!("unknown day `{}`", args.day)));
    }
    let p = predict_user_topic(
        &hs,
        &communities,
        &args.spreader,
        &args.topic,
        &args.day,
        args.hour,
        args.linkpred.into(),
    )?;
    match args.format {
        Format::Json => emit_json(&p),
        Format::Table => {
            emit(&render::prediction(&p))
        }
    }
}

fn run_serve(args: &ServeArgs) -> Result<()> {
    let (function, policy) = args.scoring.resolve()?;
    let zone = zone(&args.tz)?;
    let dataset = match &args.data {
        Some(path) => Some(
            Dataset::load(path, args.communities.as_deref(), log_format(args.log_format), zone).map_err(data)?,
        ),
        None => {
            eprintln!("note: no --data given; every data endpoint answers 409");
            None
        }
    };
    let defaults = Defaults {
        function,
        policy,
        drill: DrillConfig {
            function,
            policy,
            ..DrillConfig::default()
        },
        linkpred: args.linkpred.into(),
    };
    let state = Arc::new(SessionState::new(dataset, defaults));
    let addr = SocketAddr::new(args.bind, args.port);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(data)?;
    eprintln!("serving on http://{addr}");
    runtime
        .block_on(cubelens_service::serve(state, addr))
        .map_err(|e| data(format!("{addr}: {e}")))
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    let mut spec = match (&args.preset, &args.spec) {
        (_, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<ScenarioSpec>(&text).map_err(|e| data(format!("{}: {e}", path.display())))?
        }
        (preset, None) => match preset.unwrap_or(SynthPreset::Fixture) {
            SynthPreset::Fixture => ScenarioSpec::fixture(),
            SynthPreset::PlantedEvents => ScenarioSpec::planted_events(1),
            SynthPreset::RegimeSingle => ScenarioSpec::regime(RegimeScenario::SingleActivist, 1),
            SynthPreset::RegimeGroup => ScenarioSpec::regime(RegimeScenario::ActivistGroup, 1),
            SynthPreset::RegimeBurst => ScenarioSpec::regime(RegimeScenario::UniformBurst, 1),
        },
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let log = synth::generate(&spec).map_err(data)?;
    log.write_to(&args.out).map_err(data)?;
    eprintln!(
        "wrote {} records and {} plants to {}",
        log.manifest.total_records,
        log.manifest.plants.len(),
        args.out.display()
    );
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("CUBELENS_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| usage(format!("CUBELENS_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(usage)
}

fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Ingest(a) => run_ingest(a),
        Command::Hours(a) => run_hours(a),
        Command::Events(a) => run_events(a),
        Command::Explain(a) => run_explain(a),
        Command::Hashtags(a) => run_hashtags(a),
        Command::Topics(a) => run_topics(a),
        Command::Predict(a) => run_predict(a),
        Command::Serve(a) => run_serve(a),
        Command::Synth(a) => run_synth(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => {
            let _ = io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
