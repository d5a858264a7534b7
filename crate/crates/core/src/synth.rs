//! Synthetic interaction logs with planted anomalies.
//!
//! Each (day, hour) gets a Poisson number of baseline retweets with mean
//! `baseline * profile[h] / mean(profile)`, between random user pairs.
//! Plants add records on top and the manifest records exactly how many.
//! Generation is single-threaded and fully determined by the seed.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::HourSlot;
use crate::ingest::{bin_time, utc, write_log, InteractionRecord, LogLine, ParsedLog};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("scenario needs at least one day")]
    NoDays,
    #[error("scenario needs at least two users")]
    TooFewUsers,
    #[error("diurnal profile must have 24 non-negative weights, not all zero")]
    BadProfile,
    #[error("baseline intensity must be a non-negative number")]
    BadBaseline,
    #[error("plant {index}: {message}")]
    BadPlant { index: usize, message: String },
    #[error("featured author share must lie in [0, 1) and sum below 1")]
    BadShare,
    #[error("hashtag rate must lie in [0, 1]")]
    BadHashtagRate,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

/// A day index (1-based) and hour of day inside the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlotRef {
    pub day: u32,
    pub hour: u8,
}

/// An author receiving a fixed share of all baseline retweets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturedAuthor {
    pub name: String,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Plant {
    /// Extra baseline-like traffic so that the hour's mean becomes
    /// `factor` times its baseline mean.
    HourSpike { day: u32, hour: u8, factor: f64 },
    /// `spreaders` retweet `author` `volume` times in total, spread evenly
    /// over the members and the event hours.
    ActivistGroup {
        author: String,
        spreaders: Vec<String>,
        event: Vec<SlotRef>,
        volume: u64,
    },
    /// One spreader retweets `author` `volume` times. When `exclusive`, no
    /// baseline retweet of `author` falls inside the event.
    SingleActivist {
        author: String,
        spreader: String,
        event: Vec<SlotRef>,
        volume: u64,
        #[serde(default = "yes")]
        exclusive: bool,
    },
    /// `volume` retweets carrying `hashtag`, between random users.
    HotHashtag {
        hashtag: String,
        event: Vec<SlotRef>,
        volume: u64,
    },
    /// `volume` distinct random spreaders each retweet `author` once.
    UniformBurst {
        author: String,
        event: Vec<SlotRef>,
        volume: u64,
    },
}

fn yes() -> bool {
    true
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, 11, 1).expect("valid date")
}

fn default_hashtag_rate() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub days: u32,
    pub users: u32,
    /// 24 relative hour-of-day weights.
    pub profile: Vec<f64>,
    /// Mean baseline retweets per hour over the whole scenario.
    pub baseline: f64,
    #[serde(default)]
    pub plants: Vec<Plant>,
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start: NaiveDate,
    /// Size of the background hashtag pool; 0 disables hashtags.
    #[serde(default)]
    pub hashtags: u32,
    /// Probability that a baseline retweet carries a hashtag.
    #[serde(default = "default_hashtag_rate")]
    pub hashtag_rate: f64,
    #[serde(default)]
    pub featured_authors: Vec<FeaturedAuthor>,
}

/// Author targeted by the regime scenarios.
pub const REGIME_AUTHOR: &str = "star";
/// Event hour of the regime scenarios.
pub const REGIME_EVENT: SlotRef = SlotRef { day: 20, hour: 14 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeScenario {
    SingleActivist,
    ActivistGroup,
    UniformBurst,
}

/// Hour-of-day weights with quiet nights and an evening peak.
pub const DIURNAL_PROFILE: [f64; 24] = [
    0.55, 0.45, 0.4, 0.4, 0.4, 0.45, 0.6, 0.8, 0.95, 1.05, 1.15, 1.2, 1.3, 1.3, 1.2, 1.2, 1.3, 1.4, 1.5,
    1.6, 1.6, 1.4, 1.0, 0.75,
];

impl ScenarioSpec {
    pub fn new(days: u32, users: u32, baseline: f64, seed: u64) -> Self {
        Self {
            days,
            users,
            profile: DIURNAL_PROFILE.to_vec(),
            baseline,
            plants: Vec::new(),
            seed,
            start: default_start(),
            hashtags: 0,
            hashtag_rate: default_hashtag_rate(),
            featured_authors: Vec::new(),
        }
    }

    /// 31 days of diurnal traffic with ten 5x hour spikes, three of them at
    /// night.
    pub fn planted_events(seed: u64) -> Self {
        let mut spec = Self::new(31, 2000, 40.0, seed);
        let spikes: [(u32, u8); 10] = [
            (3, 2),
            (6, 8),
            (9, 22),
            (12, 9),
            (15, 3),
            (18, 7),
            (21, 23),
            (24, 22),
            (27, 4),
            (30, 8),
        ];
        spec.plants = spikes
            .iter()
            .map(|&(day, hour)| Plant::HourSpike {
                day,
                hour,
                factor: 5.0,
            })
            .collect();
        spec
    }

    /// A heavily retweeted author (`star`, half of all baseline traffic) and
    /// one planted spreader regime at day 20, 14h.
    pub fn regime(kind: RegimeScenario, seed: u64) -> Self {
        let mut spec = Self::new(31, 300, 60.0, seed);
        spec.featured_authors = vec![FeaturedAuthor {
            name: REGIME_AUTHOR.into(),
            share: 0.5,
        }];
        let event = vec![REGIME_EVENT];
        let author = || REGIME_AUTHOR.to_string();
        spec.plants = match kind {
            RegimeScenario::SingleActivist => vec![Plant::SingleActivist {
                author: author(),
                spreader: "activist".into(),
                event,
                volume: 73,
                exclusive: true,
            }],
            // with about 30 baseline retweets of the author in that hour the
            // group holds roughly 35% of the event
            RegimeScenario::ActivistGroup => vec![
                Plant::ActivistGroup {
                    author: author(),
                    spreaders: (1..=15).map(|i| format!("militant-{i}")).collect(),
                    event: event.clone(),
                    volume: 105,
                },
                Plant::UniformBurst {
                    author: author(),
                    event,
                    volume: 165,
                },
            ],
            RegimeScenario::UniformBurst => vec![Plant::UniformBurst {
                author: author(),
                event,
                volume: 300,
            }],
        };
        spec
    }

    /// The demo fixture: the planted events plus hashtags and drill-down
    /// plants sitting on top of three of the spikes.
    pub fn fixture() -> Self {
        let mut spec = Self::planted_events(20161101);
        spec.hashtags = 60;
        spec.featured_authors = vec![
            FeaturedAuthor {
                name: "newsdesk".into(),
                share: 0.3,
            },
            FeaturedAuthor {
                name: "mayor".into(),
                share: 0.10,
            },
        ];
        let at = |day, hour| vec![SlotRef { day, hour }];
        spec.plants.extend([
            Plant::SingleActivist {
                author: "mayor".into(),
                spreader: "user-77".into(),
                event: at(15, 3),
                volume: 60,
                exclusive: true,
            },
            Plant::ActivistGroup {
                author: "newsdesk".into(),
                spreaders: (100..115).map(|i| format!("user-{i}")).collect(),
                event: at(12, 9),
                volume: 120,
            },
            Plant::HotHashtag {
                hashtag: "debate".into(),
                event: at(24, 22),
                volume: 120,
            },
        ]);
        spec
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.days == 0 {
            return Err(SynthError::NoDays);
        }
        if self.users < 2 {
            return Err(SynthError::TooFewUsers);
        }
        if self.profile.len() != 24
            || self.profile.iter().any(|w| !(*w >= 0.0) || !w.is_finite())
            || self.profile.iter().all(|w| *w == 0.0)
        {
            return Err(SynthError::BadProfile);
        }
        if !(self.baseline >= 0.0) || !self.baseline.is_finite() {
            return Err(SynthError::BadBaseline);
        }
        if !(0.0..=1.0).contains(&self.hashtag_rate) {
            return Err(SynthError::BadHashtagRate);
        }
        let shares: f64 = self.featured_authors.iter().map(|f| f.share).sum();
        if self.featured_authors.iter().any(|f| !(0.0..1.0).contains(&f.share)) || shares >= 1.0 {
            return Err(SynthError::BadShare);
        }
        for (index, p) in self.plants.iter().enumerate() {
            let bad = |message: String| SynthError::BadPlant { index, message };
            let check_slot = |s: &SlotRef| -> Result<(), SynthError> {
                if s.day == 0 || s.day > self.days || s.hour > 23 {
                    return Err(bad(format!("slot (day {}, hour {}) outside the scenario", s.day, s.hour)));
                }
                Ok(())
            };
            let check_event = |e: &[SlotRef]| -> Result<(), SynthError> {
                if e.is_empty() {
                    return Err(bad("event has no hours".into()));
                }
                e.iter().try_for_each(check_slot)
            };
            match p {
                Plant::HourSpike { day, hour, factor } => {
                    check_slot(&SlotRef {
                        day: *day,
                        hour: *hour,
                    })?;
                    if !(*factor > 1.0) || !factor.is_finite() {
                        return Err(bad(format!("spike factor {factor} must exceed 1")));
                    }
                }
                Plant::ActivistGroup { spreaders, event, .. } => {
                    check_event(event)?;
                    if spreaders.is_empty() {
                        return Err(bad("activist group has no spreaders".into()));
                    }
                }
                Plant::SingleActivist { event, .. }
                | Plant::HotHashtag { event, .. }
                | Plant::UniformBurst { event, .. } => check_event(event)?,
            }
        }
        Ok(())
    }
}

/// Ground truth for one plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantRecord {
    pub plant: Plant,
    /// Event hours as calendar slots.
    pub slots: Vec<HourSlot>,
    /// Records added by this plant.
    pub volume: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub days: u32,
    pub start: NaiveDate,
    pub baseline_records: u64,
    pub total_records: u64,
    pub plants: Vec<PlantRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLog {
    /// Sorted by timestamp.
    pub lines: Vec<LogLine>,
    pub manifest: Manifest,
}

impl SyntheticLog {
    /// The records ingest would produce from `lines` (UTC binning).
    pub fn parsed(&self) -> ParsedLog {
        let mut log = ParsedLog::default();
        for l in &self.lines {
            let (day, hour) = bin_time(l.timestamp, utc());
            let r = InteractionRecord {
                spreader: l.spreader.clone(),
                author: l.author.clone(),
                hashtag: None,
                day,
                hour,
            };
            for k in &l.hashtags {
                log.hashtag_records.push(InteractionRecord {
                    hashtag: Some(k.clone()),
                    ..r.clone()
                });
            }
            log.records.push(r);
        }
        log
    }

    /// Writes `interactions.csv` and `manifest.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SynthError> {
        let io_err = |path: &Path| {
            let path = path.display().to_string();
            move |source| SynthError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let csv = dir.join("interactions.csv");
        let mut out = BufWriter::new(fs::File::create(&csv).map_err(io_err(&csv))?);
        write_log(&mut out, &self.lines).map_err(io_err(&csv))?;
        out.flush().map_err(io_err(&csv))?;
        let manifest = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&manifest, json + "\n").map_err(io_err(&manifest))?;
        Ok(())
    }
}

struct Generator<'a> {
    spec: &'a ScenarioSpec,
    rng: ChaCha8Rng,
    lines: Vec<LogLine>,
    exclusive: BTreeSet<(SlotRef, String)>,
}

impl Generator<'_> {
    fn user(&mut self) -> String {
        format!("user-{}", self.rng.random_range(1..=self.spec.users))
    }

    fn timestamp(&mut self, slot: SlotRef) -> i64 {
        let date = self.spec.start + chrono::Days::new(slot.day as u64 - 1);
        let start = date
            .and_time(NaiveTime::from_hms_opt(slot.hour as u32, 0, 0).expect("valid hour"))
            .and_utc()
            .timestamp();
        start + self.rng.random_range(0..3600)
    }

    fn background_author(&mut self, slot: SlotRef) -> String {
        loop {
            let mut u: f64 = self.rng.random();
            let mut author = None;
            for f in &self.spec.featured_authors {
                if u < f.share {
                    author = Some(f.name.clone());
                    break;
                }
                u -= f.share;
            }
            let author = match author {
                Some(a) => a,
                None => self.user(),
            };
            if !self.exclusive.contains(&(slot, author.clone())) {
                return author;
            }
        }
    }

    fn hashtag(&mut self) -> Vec<String> {
        if self.spec.hashtags == 0 || !self.rng.random_bool(self.spec.hashtag_rate) {
            return Vec::new();
        }
        vec![format!("tag{}", self.rng.random_range(1..=self.spec.hashtags))]
    }

    fn emit(&mut self, slot: SlotRef, spreader: String, author: String, hashtags: Vec<String>) {
        let timestamp = self.timestamp(slot);
        self.lines.push(LogLine {
            timestamp,
            spreader,
            author,
            hashtags,
        });
    }

    /// Random pair with a background author, spreader distinct from author.
    fn background(&mut self, slot: SlotRef) {
        let author = self.background_author(slot);
        let spreader = loop {
            let s = self.user();
            if s != author {
                break s;
            }
        };
        let tags = self.hashtag();
        self.emit(slot, spreader, author, tags);
    }

    fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        Poisson::new(mean).expect("positive mean").sample(&mut self.rng) as u64
    }
}

fn slot_label(spec: &ScenarioSpec, s: SlotRef) -> HourSlot {
    let date = spec.start + chrono::Days::new(s.day as u64 - 1);
    HourSlot::new(date.format("%Y-%m-%d").to_string(), s.hour)
}

pub fn generate(spec: &ScenarioSpec) -> Result<SyntheticLog, SynthError> {
    spec.validate()?;
    let mut exclusive = BTreeSet::new();
    for p in &spec.plants {
        if let Plant::SingleActivist {
            author,
            event,
            exclusive: true,
            ..
        } = p
        {
            for s in event {
                exclusive.insert((*s, author.clone()));
            }
        }
    }
    let mut g = Generator {
        spec,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        lines: Vec::new(),
        exclusive,
    };
    let mean_weight = spec.profile.iter().sum::<f64>() / 24.0;
    let hour_mean = |h: u8| spec.baseline * spec.profile[h as usize] / mean_weight;

    for day in 1..=spec.days {
        for hour in 0..24u8 {
            let slot = SlotRef { day, hour };
            let n = g.poisson(hour_mean(hour));
            for _ in 0..n {
                g.background(slot);
            }
        }
    }
    let baseline_records = g.lines.len() as u64;

    let mut plants = Vec::with_capacity(spec.plants.len());
    for p in &spec.plants {
        let before = g.lines.len();
        let event: Vec<SlotRef> = match p {
            Plant::HourSpike { day, hour, factor } => {
                let slot = SlotRef {
                    day: *day,
                    hour: *hour,
                };
                let n = g.poisson((factor - 1.0) * hour_mean(*hour));
                for _ in 0..n {
                    g.background(slot);
                }
                vec![slot]
            }
            Plant::ActivistGroup {
                author,
                spreaders,
                event,
                volume,
            } => {
                for i in 0..*volume as usize {
                    let slot = event[i % event.len()];
                    let s = spreaders[i % spreaders.len()].clone();
                    let tags = g.hashtag();
                    g.emit(slot, s, author.clone(), tags);
                }
                event.clone()
            }
            Plant::SingleActivist {
                author,
                spreader,
                event,
                volume,
                ..
            } => {
                for i in 0..*volume as usize {
                    let slot = event[i % event.len()];
                    let tags = g.hashtag();
                    g.emit(slot, spreader.clone(), author.clone(), tags);
                }
                event.clone()
            }
            Plant::HotHashtag {
                hashtag,
                event,
                volume,
            } => {
                for i in 0..*volume as usize {
                    let slot = event[i % event.len()];
                    let author = g.user();
                    let spreader = loop {
                        let s = g.user();
                        if s != author {
                            break s;
                        }
                    };
                    g.emit(slot, spreader, author, vec![hashtag.clone()]);
                }
                event.clone()
            }
            Plant::UniformBurst {
                author,
                event,
                volume,
            } => {
                // a shuffled pass over the user pool, repeated if needed
                let mut pool: Vec<u32> = Vec::new();
                for i in 0..*volume as usize {
                    if pool.is_empty() {
                        pool = (1..=spec.users).collect();
                        for j in (1..pool.len()).rev() {
                            let k = g.rng.random_range(0..=j);
                            pool.swap(j, k);
                        }
                    }
                    let s = format!("user-{}", pool.pop().expect("non-empty pool"));
                    let slot = event[i % event.len()];
                    let tags = g.hashtag();
                    g.emit(slot, s, author.clone(), tags);
                }
                event.clone()
            }
        };
        plants.push(PlantRecord {
            plant: p.clone(),
            slots: event.iter().map(|s| slot_label(spec, *s)).collect(),
            volume: (g.lines.len() - before) as u64,
        });
    }

    let mut lines = g.lines;
    lines.sort_by(|a, b| {
        (a.timestamp, &a.spreader, &a.author, &a.hashtags).cmp(&(b.timestamp, &b.spreader, &b.author, &b.hashtags))
    });
    let manifest = Manifest {
        seed: spec.seed,
        days: spec.days,
        start: spec.start,
        baseline_records,
        total_records: lines.len() as u64,
        plants,
    };
    Ok(SyntheticLog { lines, manifest })
}
