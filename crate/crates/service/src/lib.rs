//! Read-only JSON/HTTP query layer over one interaction dataset.
//!
//! The dataset is loaded once at start-up and never changes, so every
//! successful response is a pure function of the request. Bodies are cached
//! under a canonical serialization of the resolved request and replayed
//! verbatim; a cold and a warm cache give byte-identical replies.
//!
//! Endpoints are described in `openapi.yaml` at the crate root.

mod error;
mod routes;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, RwLock};

use chrono::FixedOffset;
use cubelens_core::cube::{CubeError, CubeStore};
use cubelens_core::detect::{
    event_summaries, events_for, DrillConfig, Event, EventSummary, LinkPredictionMode,
};
use cubelens_core::deviation::{ContextEvaluation, DeviationFunction, OutlierPolicy};
use cubelens_core::ingest::{self, IngestError, LogFormat, ParsedLog};
use thiserror::Error;

pub use error::ApiError;
pub use routes::{router, DEFAULT_LIMIT, MAX_LIMIT};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Cube(#[from] CubeError),
}

/// Base cuboids of the loaded log.
#[derive(Debug)]
pub struct Dataset {
    /// (spreader, author, day, hour).
    pub interactions: CubeStore,
    /// (spreader, author, hashtag, day, hour); absent when the log has no
    /// hashtags.
    pub hashtags: Option<CubeStore>,
    pub communities: Option<BTreeMap<String, String>>,
    pub records: usize,
    pub hashtag_records: usize,
}

impl Dataset {
    pub fn from_log(log: &ParsedLog, communities: Option<BTreeMap<String, String>>) -> Result<Self, CubeError> {
        let hashtags = if log.hashtag_records.is_empty() {
            None
        } else {
            Some(CubeStore::new(log.hashtag_cube()?)?)
        };
        Ok(Self {
            interactions: CubeStore::new(log.interaction_cube()?)?,
            hashtags,
            communities,
            records: log.records.len(),
            hashtag_records: log.hashtag_records.len(),
        })
    }

    /// Reads a log and an optional community file. Malformed log lines are
    /// logged and skipped.
    pub fn load(
        data: &Path,
        communities: Option<&Path>,
        format: LogFormat,
        zone: FixedOffset,
    ) -> Result<Self, LoadError> {
        let log = ingest::read_log(data, format, zone)?;
        for e in &log.errors {
            log::warn!("{}: line {}: {}", data.display(), e.line, e.message);
        }
        let communities = match communities {
            Some(p) => Some(ingest::parse_communities(ingest::open_input(p)?)?),
            None => None,
        };
        Ok(Self::from_log(&log, communities)?)
    }
}

/// Analysis defaults applied when a request does not override them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Defaults {
    pub function: DeviationFunction,
    pub policy: OutlierPolicy,
    pub drill: DrillConfig,
    pub linkpred: LinkPredictionMode,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            function: DeviationFunction::poisson(),
            policy: OutlierPolicy::default(),
            drill: DrillConfig::default(),
            linkpred: LinkPredictionMode::default(),
        }
    }
}

/// Hour evaluation and the events detected in it.
#[derive(Debug)]
pub struct EventIndex {
    pub evaluation: ContextEvaluation,
    pub events: Vec<Event>,
    pub summaries: Vec<EventSummary>,
}

/// Immutable dataset plus append-only caches.
#[derive(Debug)]
pub struct SessionState {
    dataset: Option<Dataset>,
    defaults: Defaults,
    responses: RwLock<HashMap<String, Arc<String>>>,
    event_indexes: RwLock<HashMap<String, Arc<EventIndex>>>,
}

impl SessionState {
    pub fn new(dataset: Option<Dataset>, defaults: Defaults) -> Self {
        Self {
            dataset,
            defaults,
            responses: RwLock::new(HashMap::new()),
            event_indexes: RwLock::new(HashMap::new()),
        }
    }

    pub fn dataset(&self) -> Result<&Dataset, ApiError> {
        self.dataset.as_ref().ok_or_else(|| ApiError::not_loaded("dataset"))
    }

    pub fn defaults(&self) -> &Defaults {
        &self.defaults
    }

    pub fn cached_responses(&self) -> usize {
        self.responses.read().expect("cache lock").len()
    }

    pub(crate) fn cached_body(&self, key: &str) -> Option<Arc<String>> {
        self.responses.read().expect("cache lock").get(key).cloned()
    }

    pub(crate) fn store_body(&self, key: String, body: Arc<String>) {
        self.responses.write().expect("cache lock").insert(key, body);
    }

    /// Events under one deviation function and policy, computed once.
    pub fn event_index(
        &self,
        function: DeviationFunction,
        policy: OutlierPolicy,
    ) -> Result<Arc<EventIndex>, ApiError> {
        let key = serde_json::to_string(&(function, policy)).expect("serializable key");
        if let Some(hit) = self.event_indexes.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let store = &self.dataset()?.interactions;
        let (evaluation, events) = events_for(store, function, policy).map_err(ApiError::from)?;
        let summaries = event_summaries(&evaluation, &events);
        let index = Arc::new(EventIndex {
            evaluation,
            events,
            summaries,
        });
        self.event_indexes
            .write()
            .expect("cache lock")
            .insert(key, Arc::clone(&index));
        Ok(index)
    }
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: Arc<SessionState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
