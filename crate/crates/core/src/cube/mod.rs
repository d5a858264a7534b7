//! Sparse interaction cubes.
//!
//! A [`Cube`] maps coordinate tuples to positive integer counts; absent
//! coordinates count zero. Every derived cube carries the [`Trace`] of
//! operations that produced it from its base cuboid, so any cuboid can be
//! re-materialized from the base (`expand`) and filtered-after-partition
//! cubes stay distinguishable from partitioned-after-filter ones.
//!
//! Cells are stored as a vector sorted by coordinate, which keeps every
//! downstream reduction deterministic.

mod dimension;
mod ops;
mod store;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::Serialize;
use smallvec::SmallVec;
use thiserror::Error;

pub use dimension::{DimKind, DimSpec, Dictionary, Dimension, DimensionSchema, HOURS_PER_DAY};
pub use ops::{CubeOp, Partition, Selector, SlotFilter, Trace};
pub use store::CubeStore;

/// Interned coordinate; one dictionary id per dimension.
pub type Coord = SmallVec<[u32; 6]>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CubeError {
    #[error("duplicate dimension `{0}`")]
    DuplicateDimension(String),
    #[error("at most one day and one hour-of-day dimension are allowed")]
    DuplicateTimeDimension,
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("record {index} has no value for dimension `{dim}`")]
    MissingValue { index: usize, dim: String },
    #[error("record {index}: invalid hour `{value}` for dimension `{dim}`")]
    InvalidHour {
        index: usize,
        dim: String,
        value: String,
    },
    #[error("coordinate arity {got} does not match cube arity {expected}")]
    Arity { expected: usize, got: usize },
    #[error("partition of `{dim}`: value `{value}` belongs to classes `{first}` and `{second}`")]
    OverlappingClasses {
        dim: String,
        value: String,
        first: String,
        second: String,
    },
    #[error("partition of `{dim}`: observed value `{value}` is not in any class")]
    UncoveredValue { dim: String, value: String },
    #[error("selector for `{0}` has an empty value set")]
    EmptySelector(String),
    #[error("expand requires a base cuboid, got a cube with {0} applied operations")]
    NotBase(usize),
}

static NEXT_BASE_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone)]
pub struct Cube {
    base_id: u64,
    dims: Vec<Dimension>,
    cells: Vec<(Coord, u64)>,
    provenance: Trace,
}

/// Anything that can supply a label for a named dimension.
pub trait Fields {
    fn field(&self, dim: &str) -> Option<std::borrow::Cow<'_, str>>;
}

impl Cube {
    pub fn base_id(&self) -> u64 {
        self.base_id
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn arity(&self) -> usize {
        self.dims.len()
    }

    pub fn schema(&self) -> Vec<DimSpec> {
        self.dims.iter().map(|d| d.spec().clone()).collect()
    }

    pub fn dim_index(&self, name: &str) -> Result<usize, CubeError> {
        self.dims
            .iter()
            .position(|d| d.name() == name)
            .ok_or_else(|| CubeError::UnknownDimension(name.to_owned()))
    }

    pub fn dim(&self, name: &str) -> Result<&Dimension, CubeError> {
        Ok(&self.dims[self.dim_index(name)?])
    }

    pub fn has_dim(&self, name: &str) -> bool {
        self.dims.iter().any(|d| d.name() == name)
    }

    pub fn provenance(&self) -> &Trace {
        &self.provenance
    }

    pub fn is_base(&self) -> bool {
        self.provenance.is_empty()
    }

    /// Stored (non-zero) cells in coordinate order.
    pub fn cells(&self) -> &[(Coord, u64)] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn grand_total(&self) -> u64 {
        self.cells.iter().map(|(_, c)| c).sum()
    }

    /// Count at an interned coordinate; absent cells are zero.
    pub fn get(&self, coord: &[u32]) -> Result<u64, CubeError> {
        if coord.len() != self.arity() {
            return Err(CubeError::Arity {
                expected: self.arity(),
                got: coord.len(),
            });
        }
        Ok(self.lookup(coord))
    }

    pub(crate) fn lookup(&self, coord: &[u32]) -> u64 {
        self.cells
            .binary_search_by(|(c, _)| c.as_slice().cmp(coord))
            .map(|i| self.cells[i].1)
            .unwrap_or(0)
    }

    /// Count at a labelled coordinate; labels never seen in the data give 0.
    pub fn cell_value(&self, labels: &[&str]) -> Result<u64, CubeError> {
        if labels.len() != self.arity() {
            return Err(CubeError::Arity {
                expected: self.arity(),
                got: labels.len(),
            });
        }
        let mut coord = Coord::with_capacity(labels.len());
        for (dim, label) in self.dims.iter().zip(labels) {
            match dim.id(label) {
                Some(id) => coord.push(id),
                None => return Ok(0),
            }
        }
        Ok(self.lookup(&coord))
    }

    pub fn labels(&self, coord: &[u32]) -> Vec<String> {
        self.dims
            .iter()
            .zip(coord)
            .map(|(d, &id)| d.label(id).to_owned())
            .collect()
    }

    /// Distinct ids of dimension `idx` present in stored cells.
    pub fn observed_values(&self, idx: usize) -> BTreeSet<u32> {
        self.cells.iter().map(|(c, _)| c[idx]).collect()
    }

    /// `cells` may be unsorted and repeat coordinates; repeats are summed.
    fn derive(&self, dims: Vec<Dimension>, mut cells: Vec<(Coord, u64)>, op: CubeOp) -> Cube {
        cells.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(Coord, u64)> = Vec::with_capacity(cells.len());
        for (coord, n) in cells {
            match merged.last_mut() {
                Some((last, total)) if *last == coord => *total += n,
                _ => merged.push((coord, n)),
            }
        }
        merged.retain(|(_, n)| *n > 0);
        self.derive_sorted(dims, merged, op)
    }

    fn derive_sorted(&self, dims: Vec<Dimension>, cells: Vec<(Coord, u64)>, op: CubeOp) -> Cube {
        Cube {
            base_id: self.base_id,
            dims,
            cells,
            provenance: self.provenance.clone().then(op),
        }
    }

    /// Sums out `drop` dimensions. Dropping every dimension yields the apex
    /// cuboid: a zero-arity cube with a single cell.
    pub fn aggregate<S: AsRef<str>>(&self, drop: &[S]) -> Result<Cube, CubeError> {
        let mut dropped = BTreeSet::new();
        for d in drop {
            dropped.insert(self.dim_index(d.as_ref())?);
        }
        if dropped.is_empty() {
            return Ok(self.clone());
        }
        let kept: Vec<usize> = (0..self.arity()).filter(|i| !dropped.contains(i)).collect();
        let out: Vec<(Coord, u64)> = self
            .cells
            .iter()
            .map(|(coord, count)| (kept.iter().map(|&i| coord[i]).collect(), *count))
            .collect();
        let dims = kept.iter().map(|&i| self.dims[i].clone()).collect();
        let names = dropped
            .iter()
            .map(|&i| self.dims[i].name().to_owned())
            .collect();
        Ok(self.derive(dims, out, CubeOp::Aggregate { dims: names }))
    }

    /// Replaces dimension `partition.dim` by the partition's class labels,
    /// summing member cells into their class.
    pub fn aggregate_partition(&self, partition: &Partition) -> Result<Cube, CubeError> {
        let idx = self.dim_index(&partition.dim)?;
        let dim = &self.dims[idx];

        let mut owner: HashMap<&str, &str> = HashMap::new();
        for (class, members) in &partition.classes {
            for m in members {
                if let Some(prev) = owner.insert(m.as_str(), class.as_str()) {
                    return Err(CubeError::OverlappingClasses {
                        dim: partition.dim.clone(),
                        value: m.clone(),
                        first: prev.to_owned(),
                        second: class.clone(),
                    });
                }
            }
        }

        let classes = Dictionary::from_labels(partition.classes.keys());
        let mut map: Vec<Option<u32>> = vec![None; dim.dict().len()];
        for (id, label) in dim.dict().labels().iter().enumerate() {
            map[id] = owner.get(label.as_str()).and_then(|c| classes.get(c));
        }
        for id in self.observed_values(idx) {
            if map[id as usize].is_none() {
                return Err(CubeError::UncoveredValue {
                    dim: partition.dim.clone(),
                    value: dim.label(id).to_owned(),
                });
            }
        }

        let out: Vec<(Coord, u64)> = self
            .cells
            .iter()
            .map(|(coord, count)| {
                let mut key = coord.clone();
                key[idx] = map[coord[idx] as usize].expect("covered");
                (key, *count)
            })
            .collect();
        let mut dims = self.dims.clone();
        dims[idx] = Dimension::new(
            DimSpec::new(dim.name(), DimKind::Categorical),
            Arc::new(classes),
        );
        Ok(self.derive(dims, out, CubeOp::Partition(partition.clone())))
    }

    /// Keeps cells satisfying every predicate of `selector`.
    pub fn filter(&self, selector: &Selector) -> Result<Cube, CubeError> {
        if selector.is_keep_all() {
            return Ok(self.clone());
        }
        let mut allowed: Vec<(usize, Vec<bool>)> = Vec::new();
        for (name, values) in &selector.values {
            if values.is_empty() {
                return Err(CubeError::EmptySelector(name.clone()));
            }
            let idx = self.dim_index(name)?;
            let dict = self.dims[idx].dict();
            let mut mask = vec![false; dict.len()];
            for v in values {
                if let Some(id) = dict.get(v) {
                    mask[id as usize] = true;
                }
            }
            allowed.push((idx, mask));
        }
        let slots = match &selector.slots {
            None => None,
            Some(sf) => {
                if sf.slots.is_empty() {
                    return Err(CubeError::EmptySelector(format!(
                        "{}x{}",
                        sf.day_dim, sf.hour_dim
                    )));
                }
                let di = self.dim_index(&sf.day_dim)?;
                let hi = self.dim_index(&sf.hour_dim)?;
                let set: BTreeSet<(u32, u32)> = sf
                    .slots
                    .iter()
                    .filter_map(|(d, h)| Some((self.dims[di].id(d)?, self.dims[hi].id(h)?)))
                    .collect();
                Some((di, hi, set))
            }
        };

        // A subsequence of sorted unique cells stays sorted and unique.
        let out: Vec<(Coord, u64)> = self
            .cells
            .iter()
            .filter(|(coord, _)| {
                allowed.iter().all(|(i, mask)| mask[coord[*i] as usize])
                    && slots
                        .as_ref()
                        .is_none_or(|(di, hi, set)| set.contains(&(coord[*di], coord[*hi])))
            })
            .cloned()
            .collect();
        Ok(self.derive_sorted(self.dims.clone(), out, CubeOp::Filter(selector.clone())))
    }

    pub fn apply(&self, op: &CubeOp) -> Result<Cube, CubeError> {
        match op {
            CubeOp::Aggregate { dims } => {
                let dims: Vec<&str> = dims.iter().map(String::as_str).collect();
                self.aggregate(&dims)
            }
            CubeOp::Partition(p) => self.aggregate_partition(p),
            CubeOp::Filter(s) => self.filter(s),
        }
    }

    /// Re-materializes the cuboid described by `trace` from this base cuboid.
    pub fn expand(&self, trace: &Trace) -> Result<Cube, CubeError> {
        if !self.is_base() {
            return Err(CubeError::NotBase(self.provenance.len()));
        }
        let mut cube = self.clone();
        for op in trace.ops() {
            cube = cube.apply(op)?;
        }
        Ok(cube)
    }

    /// Keeps every dimension in `keep` and sums out the rest.
    pub fn project<S: AsRef<str>>(&self, keep: &[S]) -> Result<Cube, CubeError> {
        for k in keep {
            self.dim_index(k.as_ref())?;
        }
        let drop: Vec<String> = self
            .dims
            .iter()
            .map(|d| d.name().to_owned())
            .filter(|n| !keep.iter().any(|k| k.as_ref() == n))
            .collect();
        self.aggregate(&drop)
    }

    pub fn snapshot(&self) -> CubeSnapshot {
        CubeSnapshot {
            schema: self.schema(),
            provenance: self.provenance.clone(),
            cells: self
                .cells
                .iter()
                .map(|(c, n)| (self.labels(c), *n))
                .collect(),
        }
    }
}

/// JSON export of a cube: `{schema, provenance, cells: [[labels], count]}`.
#[derive(Debug, Clone, Serialize)]
pub struct CubeSnapshot {
    pub schema: Vec<DimSpec>,
    pub provenance: Trace,
    pub cells: Vec<(Vec<String>, u64)>,
}

/// Incremental construction of a base cuboid.
#[derive(Debug)]
pub struct CubeBuilder {
    specs: Vec<DimSpec>,
    dicts: Vec<Dictionary>,
    counts: HashMap<Coord, u64>,
    records: usize,
}

impl CubeBuilder {
    pub fn new(schema: &DimensionSchema) -> Self {
        let dicts = schema
            .dims()
            .iter()
            .map(|d| match d.kind {
                DimKind::HourOfDay => Dictionary::hours(),
                _ => Dictionary::new(),
            })
            .collect();
        Self {
            specs: schema.dims().to_vec(),
            dicts,
            counts: HashMap::new(),
            records: 0,
        }
    }

    /// Adds `weight` records at the positional coordinate `values`.
    pub fn add_weighted<S: AsRef<str>>(&mut self, values: &[S], weight: u64) -> Result<(), CubeError> {
        let index = self.records;
        if values.len() != self.specs.len() {
            return Err(CubeError::Arity {
                expected: self.specs.len(),
                got: values.len(),
            });
        }
        let mut coord = Coord::with_capacity(values.len());
        for ((spec, dict), v) in self.specs.iter().zip(&mut self.dicts).zip(values) {
            let v = v.as_ref();
            let id = match spec.kind {
                DimKind::HourOfDay => dict.get(v).ok_or_else(|| CubeError::InvalidHour {
                    index,
                    dim: spec.name.clone(),
                    value: v.to_owned(),
                })?,
                _ => {
                    if v.is_empty() {
                        return Err(CubeError::MissingValue {
                            index,
                            dim: spec.name.clone(),
                        });
                    }
                    dict.intern(v)
                }
            };
            coord.push(id);
        }
        self.records += 1;
        if weight > 0 {
            *self.counts.entry(coord).or_insert(0) += weight;
        }
        Ok(())
    }

    pub fn add<S: AsRef<str>>(&mut self, values: &[S]) -> Result<(), CubeError> {
        self.add_weighted(values, 1)
    }

    pub fn add_record<R: Fields + ?Sized>(&mut self, record: &R) -> Result<(), CubeError> {
        let index = self.records;
        let mut values = Vec::with_capacity(self.specs.len());
        for spec in &self.specs {
            match record.field(&spec.name) {
                Some(v) => values.push(v),
                None => {
                    return Err(CubeError::MissingValue {
                        index,
                        dim: spec.name.clone(),
                    })
                }
            }
        }
        self.add(&values)
    }

    pub fn finish(self) -> Cube {
        let dims = self
            .specs
            .into_iter()
            .zip(self.dicts)
            .map(|(s, d)| Dimension::new(s, Arc::new(d)))
            .collect();
        let mut cells: Vec<(Coord, u64)> = self.counts.into_iter().collect();
        cells.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        Cube {
            base_id: NEXT_BASE_ID.fetch_add(1, Ordering::Relaxed),
            dims,
            cells,
            provenance: Trace::new(),
        }
    }
}

/// Builds the base cuboid: one count per distinct coordinate, equal to the
/// number of records carrying it.
pub fn build_base_cube<'a, R, I>(records: I, schema: &DimensionSchema) -> Result<Cube, CubeError>
where
    R: Fields + 'a,
    I: IntoIterator<Item = &'a R>,
{
    let mut builder = CubeBuilder::new(schema);
    for r in records {
        builder.add_record(r)?;
    }
    Ok(builder.finish())
}

/// Convenience for small hand-written cubes: `rows` are positional labels
/// with a multiplicity.
pub fn cube_from_rows<S: AsRef<str>>(
    schema: &DimensionSchema,
    rows: &[(&[S], u64)],
) -> Result<Cube, CubeError> {
    let mut builder = CubeBuilder::new(schema);
    for (values, count) in rows {
        builder.add_weighted(values, *count)?;
    }
    Ok(builder.finish())
}

/// Labelled view of a cube's cells, mostly for tests and reports.
pub fn labelled_cells(cube: &Cube) -> BTreeMap<Vec<String>, u64> {
    cube.cells()
        .iter()
        .map(|(c, n)| (cube.labels(c), *n))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(names: &[(&str, DimKind)]) -> DimensionSchema {
        DimensionSchema::new(names.iter().map(|(n, k)| DimSpec::new(*n, *k)).collect()).unwrap()
    }

    fn sadh() -> DimensionSchema {
        schema(&[
            ("spreader", DimKind::Categorical),
            ("author", DimKind::Categorical),
            ("day", DimKind::Day),
            ("hour", DimKind::HourOfDay),
        ])
    }

    fn cells(c: &Cube) -> BTreeMap<Vec<String>, u64> {
        labelled_cells(c)
    }

    fn key(parts: &[&str]) -> Vec<String> {
        parts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn schema_rejects_duplicates() {
        assert!(matches!(
            DimensionSchema::new(vec![DimSpec::categorical("a"), DimSpec::categorical("a")]),
            Err(CubeError::DuplicateDimension(_))
        ));
        assert_eq!(
            DimensionSchema::new(vec![
                DimSpec::new("d1", DimKind::Day),
                DimSpec::new("d2", DimKind::Day)
            ]),
            Err(CubeError::DuplicateTimeDimension)
        );
    }

    #[test]
    fn base_counts_multiplicity() {
        let rows: &[(&[&str], u64)] = &[
            (&["s1", "a1", "d1", "1"], 1),
            (&["s1", "a1", "d1", "1"], 1),
            (&["s2", "a1", "d1", "2"], 1),
        ];
        let c = cube_from_rows(&sadh(), rows).unwrap();
        let got = cells(&c);
        assert_eq!(got.len(), 2);
        assert_eq!(got[&key(&["s1", "a1", "d1", "1"])], 2);
        assert_eq!(got[&key(&["s2", "a1", "d1", "2"])], 1);
        assert_eq!(c.grand_total(), 3);
        assert!(c.is_base());
    }

    #[test]
    fn forty_identical_records_make_one_cell() {
        let mut b = CubeBuilder::new(&sadh());
        for _ in 0..40 {
            b.add(&["s3", "a4", "d1", "1"]).unwrap();
        }
        let c = b.finish();
        assert_eq!(c.cell_value(&["s3", "a4", "d1", "1"]).unwrap(), 40);
    }

    #[test]
    fn empty_stream_is_valid() {
        let c = CubeBuilder::new(&sadh()).finish();
        assert_eq!(c.grand_total(), 0);
        assert!(c.is_empty());
        let apex = c.project::<&str>(&[]).unwrap();
        assert_eq!(apex.grand_total(), 0);
    }

    #[test]
    fn invalid_hour_is_rejected_with_index() {
        let mut b = CubeBuilder::new(&sadh());
        b.add(&["s", "a", "d", "3"]).unwrap();
        let err = b.add(&["s", "a", "d", "24"]).unwrap_err();
        assert!(matches!(err, CubeError::InvalidHour { index: 1, .. }));
    }

    #[test]
    fn aggregate_sums_dropped_dims() {
        let s = schema(&[("spreader", DimKind::Categorical), ("day", DimKind::Day)]);
        let rows: &[(&[&str], u64)] = &[(&["s1", "d1"], 2), (&["s2", "d1"], 3), (&["s1", "d2"], 5)];
        let c = cube_from_rows(&s, rows).unwrap();
        let agg = c.aggregate(&["spreader"]).unwrap();
        assert_eq!(
            cells(&agg),
            BTreeMap::from([(key(&["d1"]), 5), (key(&["d2"]), 5)])
        );
        assert_eq!(agg.provenance().len(), 1);
        let same = c.aggregate::<&str>(&[]).unwrap();
        assert_eq!(cells(&same), cells(&c));
        let apex = c.aggregate(&["spreader", "day"]).unwrap();
        assert_eq!(apex.arity(), 0);
        assert_eq!(apex.len(), 1);
        assert_eq!(apex.get(&[]).unwrap(), 10);
        assert!(matches!(
            c.aggregate(&["nope"]),
            Err(CubeError::UnknownDimension(_))
        ));
    }

    #[test]
    fn partition_of_hours() {
        let s = schema(&[("day", DimKind::Day), ("hour", DimKind::HourOfDay)]);
        let rows: &[(&[&str], u64)] = &[(&["d1", "22"], 3), (&["d1", "2"], 4), (&["d1", "10"], 7)];
        let c = cube_from_rows(&s, rows).unwrap();
        let night: Vec<String> = [0, 1, 2, 3, 4, 5, 22, 23].iter().map(|h| h.to_string()).collect();
        let day: Vec<String> = (6..22).map(|h| h.to_string()).collect();
        let p = Partition::new("hour")
            .with_class("H_N", night)
            .with_class("H_D", day);
        let pc = c.aggregate_partition(&p).unwrap();
        assert_eq!(
            cells(&pc),
            BTreeMap::from([(key(&["d1", "H_D"]), 7), (key(&["d1", "H_N"]), 7)])
        );
        assert_eq!(pc.grand_total(), c.grand_total());
        assert_eq!(pc.dim("hour").unwrap().kind(), DimKind::Categorical);
    }

    #[test]
    fn identity_partition_is_isomorphic() {
        let s = schema(&[("author", DimKind::Categorical), ("day", DimKind::Day)]);
        let rows: &[(&[&str], u64)] = &[(&["a1", "d1"], 2), (&["a2", "d1"], 3), (&["a2", "d2"], 1)];
        let c = cube_from_rows(&s, rows).unwrap();
        let p = Partition::new("author")
            .with_class("a1", ["a1"])
            .with_class("a2", ["a2"]);
        assert_eq!(cells(&c.aggregate_partition(&p).unwrap()), cells(&c));
    }

    #[test]
    fn partition_errors() {
        let s = schema(&[("author", DimKind::Categorical)]);
        let rows: &[(&[&str], u64)] = &[(&["a1"], 2), (&["a2"], 3)];
        let c = cube_from_rows(&s, rows).unwrap();
        let overlap = Partition::new("author")
            .with_class("x", ["a1", "a2"])
            .with_class("y", ["a2"]);
        assert!(matches!(
            c.aggregate_partition(&overlap),
            Err(CubeError::OverlappingClasses { .. })
        ));
        let uncovered = Partition::new("author").with_class("x", ["a1", "never-seen"]);
        assert_eq!(
            c.aggregate_partition(&uncovered).unwrap_err(),
            CubeError::UncoveredValue {
                dim: "author".into(),
                value: "a2".into()
            }
        );
    }

    #[test]
    fn filter_by_value_set() {
        let s = schema(&[("author", DimKind::Categorical), ("day", DimKind::Day)]);
        let rows: &[(&[&str], u64)] = &[(&["a1", "d1"], 2), (&["a2", "d1"], 3)];
        let c = cube_from_rows(&s, rows).unwrap();
        let f = c.filter(&Selector::keep_all().with("author", ["a1"])).unwrap();
        assert_eq!(cells(&f), BTreeMap::from([(key(&["a1", "d1"]), 2)]));
        let same = c.filter(&Selector::keep_all()).unwrap();
        assert_eq!(cells(&same), cells(&c));
        let none = c.filter(&Selector::keep_all().with("author", ["zz"])).unwrap();
        assert!(none.is_empty());
        assert!(matches!(
            c.filter(&Selector::keep_all().with("author", Vec::<String>::new())),
            Err(CubeError::EmptySelector(_))
        ));
    }

    #[test]
    fn slot_filter_keeps_only_listed_hours() {
        let s = schema(&[("day", DimKind::Day), ("hour", DimKind::HourOfDay)]);
        let rows: &[(&[&str], u64)] = &[
            (&["2016-08-12", "23"], 5),
            (&["2016-08-13", "0"], 6),
            (&["2016-08-12", "0"], 7),
            (&["2016-08-13", "23"], 8),
        ];
        let c = cube_from_rows(&s, rows).unwrap();
        let sel = Selector::keep_all().with_slots(
            "day",
            "hour",
            [("2016-08-12", "23"), ("2016-08-13", "0")],
        );
        assert_eq!(c.filter(&sel).unwrap().grand_total(), 11);
    }

    #[test]
    fn filtered_partition_differs_from_partitioned_filter() {
        let s = schema(&[("day", DimKind::Day), ("hour", DimKind::HourOfDay)]);
        let rows: &[(&[&str], u64)] = &[(&["d1", "1"], 3), (&["d1", "2"], 4), (&["d1", "12"], 7)];
        let c = cube_from_rows(&s, rows).unwrap();
        let night: Vec<String> = (0..6).map(|h| h.to_string()).collect();
        let p = Partition::new("hour")
            .with_class("H_N", night.clone())
            .with_class("H_D", (6..24).map(|h| h.to_string()));
        let class_cube = c
            .aggregate_partition(&p)
            .unwrap()
            .filter(&Selector::keep_all().with("hour", ["H_N"]))
            .unwrap();
        let member_cube = c.filter(&Selector::keep_all().with("hour", night)).unwrap();
        assert_eq!(class_cube.len(), 1);
        assert_eq!(member_cube.len(), 2);
        assert_eq!(class_cube.grand_total(), member_cube.grand_total());
        assert_ne!(class_cube.provenance(), member_cube.provenance());
    }

    #[test]
    fn expand_replays_traces() {
        let rows: &[(&[&str], u64)] = &[
            (&["s1", "a1", "d1", "1"], 4),
            (&["s2", "a2", "d1", "2"], 3),
            (&["s1", "a2", "d2", "1"], 2),
        ];
        let base = cube_from_rows(&sadh(), rows).unwrap();
        assert_eq!(cells(&base.expand(&Trace::new()).unwrap()), cells(&base));

        let a = Trace::new()
            .then(CubeOp::aggregate(["author"]))
            .then(CubeOp::Filter(Selector::keep_all().with("day", ["d1"])));
        let b = Trace::new()
            .then(CubeOp::Filter(Selector::keep_all().with("day", ["d1"])))
            .then(CubeOp::aggregate(["author"]));
        assert_eq!(cells(&base.expand(&a).unwrap()), cells(&base.expand(&b).unwrap()));

        let derived = base.aggregate(&["spreader"]).unwrap();
        assert!(matches!(derived.expand(&a), Err(CubeError::NotBase(1))));
        let bad = Trace::new().then(CubeOp::aggregate(["hashtag"]));
        assert!(matches!(base.expand(&bad), Err(CubeError::UnknownDimension(_))));
    }

    #[test]
    fn cell_lookup_and_arity() {
        let s = schema(&[("x", DimKind::Categorical)]);
        let rows: &[(&[&str], u64)] = &[(&["x"], 2), (&["y"], 3)];
        let c = cube_from_rows(&s, rows).unwrap();
        assert_eq!(c.grand_total(), 5);
        assert_eq!(c.cell_value(&["nope"]).unwrap(), 0);
        assert!(matches!(c.get(&[0, 0]), Err(CubeError::Arity { .. })));
    }

    #[test]
    fn snapshot_serializes_labels() {
        let s = schema(&[("author", DimKind::Categorical), ("hour", DimKind::HourOfDay)]);
        let rows: &[(&[&str], u64)] = &[(&["bob", "7"], 2)];
        let c = cube_from_rows(&s, rows).unwrap();
        let json = serde_json::to_value(c.snapshot()).unwrap();
        assert_eq!(json["cells"][0][0][0], "bob");
        assert_eq!(json["cells"][0][0][1], "7");
        assert_eq!(json["cells"][0][1], 2);
        assert_eq!(json["schema"][1]["kind"], "hour-of-day");
    }
}
