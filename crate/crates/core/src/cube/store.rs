use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use super::{Cube, CubeError, Trace};

/// A base cuboid plus a memo of every cuboid materialized from it.
///
/// Cached cubes are immutable and keyed by the canonical serialization of
/// their trace, so concurrent writers of the same key store equal values.
#[derive(Debug)]
pub struct CubeStore {
    base: Arc<Cube>,
    cache: RwLock<HashMap<String, Arc<Cube>>>,
}

impl CubeStore {
    pub fn new(base: Cube) -> Result<Self, CubeError> {
        if !base.is_base() {
            return Err(CubeError::NotBase(base.provenance().len()));
        }
        Ok(Self {
            base: Arc::new(base),
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn base(&self) -> &Arc<Cube> {
        &self.base
    }

    pub fn cached(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    /// Materializes `trace`, reusing the longest cached prefix.
    pub fn materialize(&self, trace: &Trace) -> Result<Arc<Cube>, CubeError> {
        if trace.is_empty() {
            return Ok(Arc::clone(&self.base));
        }
        let key = trace.key();
        if let Some(c) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(c));
        }
        let parent = self.materialize(&trace.prefix(trace.len() - 1))?;
        let cube = Arc::new(parent.apply(&trace.ops()[trace.len() - 1])?);
        self.cache
            .write()
            .expect("cache lock")
            .insert(key, Arc::clone(&cube));
        Ok(cube)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::{cube_from_rows, labelled_cells, CubeOp, DimSpec, DimensionSchema, Selector};

    #[test]
    fn cache_is_transparent() {
        let schema = DimensionSchema::new(vec![
            DimSpec::categorical("author"),
            DimSpec::categorical("tag"),
        ])
        .unwrap();
        let rows: &[(&[&str], u64)] = &[(&["a", "x"], 2), (&["b", "x"], 1), (&["a", "y"], 4)];
        let store = CubeStore::new(cube_from_rows(&schema, rows).unwrap()).unwrap();
        let trace = Trace::new()
            .then(CubeOp::Filter(Selector::keep_all().with("author", ["a"])))
            .then(CubeOp::aggregate(["tag"]));
        let cold = store.materialize(&trace).unwrap();
        assert_eq!(store.cached(), 2);
        let warm = store.materialize(&trace).unwrap();
        assert!(Arc::ptr_eq(&cold, &warm));
        assert_eq!(
            labelled_cells(&cold),
            labelled_cells(&store.base().expand(&trace).unwrap())
        );
    }

    #[test]
    fn rejects_derived_base() {
        let schema = DimensionSchema::new(vec![DimSpec::categorical("a")]).unwrap();
        let rows: &[(&[&str], u64)] = &[(&["x"], 1)];
        let c = cube_from_rows(&schema, rows).unwrap().aggregate(&["a"]).unwrap();
        assert!(CubeStore::new(c).is_err());
    }
}
