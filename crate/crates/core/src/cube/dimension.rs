use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::CubeError;

/// Number of hour-of-day values; hour dimensions always span `0..24`.
pub const HOURS_PER_DAY: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DimKind {
    Categorical,
    Day,
    HourOfDay,
}

/// Name and kind of one cube dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimSpec {
    pub name: String,
    pub kind: DimKind,
}

impl DimSpec {
    pub fn new(name: impl Into<String>, kind: DimKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        Self::new(name, DimKind::Categorical)
    }
}

/// Ordered list of dimensions of a base cuboid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<DimSpec>", into = "Vec<DimSpec>")]
pub struct DimensionSchema {
    dims: Vec<DimSpec>,
}

impl DimensionSchema {
    pub fn new(dims: Vec<DimSpec>) -> Result<Self, CubeError> {
        let mut seen = BTreeSet::new();
        let mut days = 0;
        let mut hours = 0;
        for d in &dims {
            if !seen.insert(d.name.as_str()) {
                return Err(CubeError::DuplicateDimension(d.name.clone()));
            }
            match d.kind {
                DimKind::Day => days += 1,
                DimKind::HourOfDay => hours += 1,
                DimKind::Categorical => {}
            }
        }
        if days > 1 || hours > 1 {
            return Err(CubeError::DuplicateTimeDimension);
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[DimSpec] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.dims.iter().position(|d| d.name == name)
    }
}

impl TryFrom<Vec<DimSpec>> for DimensionSchema {
    type Error = CubeError;

    fn try_from(dims: Vec<DimSpec>) -> Result<Self, Self::Error> {
        Self::new(dims)
    }
}

impl From<DimensionSchema> for Vec<DimSpec> {
    fn from(schema: DimensionSchema) -> Self {
        schema.dims
    }
}

/// Label interner for one dimension. Ids are dense and assigned in first-seen
/// order, except for hour-of-day dictionaries where id == hour.
#[derive(Debug, Default, Clone)]
pub struct Dictionary {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl Dictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn hours() -> Self {
        let mut dict = Self::new();
        for h in 0..HOURS_PER_DAY {
            dict.intern(&h.to_string());
        }
        dict
    }

    pub fn from_labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut dict = Self::new();
        for l in labels {
            dict.intern(l.as_ref());
        }
        dict
    }

    pub fn intern(&mut self, label: &str) -> u32 {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.labels.push(label.to_owned());
        self.index.insert(label.to_owned(), id);
        id
    }

    pub fn get(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: u32) -> &str {
        &self.labels[id as usize]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// A dimension as carried by a materialized cube: spec plus its interned
/// value dictionary. Dictionaries are shared between a cube and everything
/// derived from it, so coordinates can be copied between cubes without
/// translation whenever the dictionaries are the same allocation.
#[derive(Debug, Clone)]
pub struct Dimension {
    spec: DimSpec,
    dict: Arc<Dictionary>,
}

impl Dimension {
    pub fn new(spec: DimSpec, dict: Arc<Dictionary>) -> Self {
        Self { spec, dict }
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn kind(&self) -> DimKind {
        self.spec.kind
    }

    pub fn spec(&self) -> &DimSpec {
        &self.spec
    }

    pub fn dict(&self) -> &Arc<Dictionary> {
        &self.dict
    }

    pub fn label(&self, id: u32) -> &str {
        self.dict.label(id)
    }

    pub fn id(&self, label: &str) -> Option<u32> {
        self.dict.get(label)
    }

    pub fn shares_dict(&self, other: &Dimension) -> bool {
        Arc::ptr_eq(&self.dict, &other.dict)
    }

    /// Table mapping this dimension's ids to `target`'s ids, by label.
    pub fn translation_to(&self, target: &Dimension) -> Vec<Option<u32>> {
        if self.shares_dict(target) {
            return (0..self.dict.len() as u32).map(Some).collect();
        }
        self.dict
            .labels()
            .iter()
            .map(|l| target.dict.get(l))
            .collect()
    }
}
