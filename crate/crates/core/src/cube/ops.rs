use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

/// Aggregation of one dimension onto a set of named classes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    pub dim: String,
    pub classes: BTreeMap<String, BTreeSet<String>>,
}

impl Partition {
    pub fn new(dim: impl Into<String>) -> Self {
        Self {
            dim: dim.into(),
            classes: BTreeMap::new(),
        }
    }

    pub fn with_class<I, S>(mut self, label: impl Into<String>, members: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.classes
            .insert(label.into(), members.into_iter().map(Into::into).collect());
        self
    }

    /// Class label owning `value`, if any.
    pub fn class_of(&self, value: &str) -> Option<&str> {
        self.classes
            .iter()
            .find(|(_, members)| members.contains(value))
            .map(|(label, _)| label.as_str())
    }
}

/// Joint (day, hour) membership predicate. Needed for events, which are runs
/// of wall-clock hours and therefore not a product of per-dimension sets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlotFilter {
    pub day_dim: String,
    pub hour_dim: String,
    pub slots: BTreeSet<(String, String)>,
}

/// Per-dimension filter. Dimensions not mentioned are kept whole.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Selector {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<String, BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slots: Option<SlotFilter>,
}

impl Selector {
    pub fn keep_all() -> Self {
        Self::default()
    }

    pub fn with<I, S>(mut self, dim: impl Into<String>, values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.values
            .entry(dim.into())
            .or_default()
            .extend(values.into_iter().map(Into::into));
        self
    }

    pub fn with_slots<I, D, H>(mut self, day_dim: &str, hour_dim: &str, slots: I) -> Self
    where
        I: IntoIterator<Item = (D, H)>,
        D: Into<String>,
        H: Into<String>,
    {
        self.slots = Some(SlotFilter {
            day_dim: day_dim.to_owned(),
            hour_dim: hour_dim.to_owned(),
            slots: slots
                .into_iter()
                .map(|(d, h)| (d.into(), h.into()))
                .collect(),
        });
        self
    }

    pub fn is_keep_all(&self) -> bool {
        self.values.is_empty() && self.slots.is_none()
    }
}

/// One step of a derivation from the base cuboid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum CubeOp {
    Aggregate { dims: BTreeSet<String> },
    Partition(Partition),
    Filter(Selector),
}

impl CubeOp {
    pub fn aggregate<I, S>(dims: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        CubeOp::Aggregate {
            dims: dims.into_iter().map(Into::into).collect(),
        }
    }
}

/// Ordered list of operations applied to a base cuboid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trace(pub Vec<CubeOp>);

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn then(mut self, op: CubeOp) -> Self {
        self.0.push(op);
        self
    }

    pub fn ops(&self) -> &[CubeOp] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn prefix(&self, n: usize) -> Trace {
        Trace(self.0[..n].to_vec())
    }

    /// Canonical serialization, used as a cache key.
    pub fn key(&self) -> String {
        serde_json::to_string(&self.0).expect("trace serializes")
    }
}

impl From<Vec<CubeOp>> for Trace {
    fn from(ops: Vec<CubeOp>) -> Self {
        Trace(ops)
    }
}
