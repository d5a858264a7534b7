//! Expected-value models.
//!
//! Every model is a constant times a product of comparison-cube lookups,
//! each raised to +1 or -1:
//!
//! ```text
//! f_exp(x) = c * prod_i cube_i[proj_i(x)] ^ e_i
//! ```
//!
//! The basic context is `apex / |X|`, the aggregative context is
//! `parent(x') / |Y|`, and every multi-aggregative model used by the
//! detectors (hour profile, author share during an event, spreader share,
//! hashtag profile, per-hashtag spreader activity) is a particular choice of
//! terms. Comparison cubes are referenced by their derivation [`Trace`] and
//! materialized from the same [`CubeStore`] as the observed cube.

mod text;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cube::{Coord, Cube, CubeError, CubeOp, CubeStore, DimKind, Dimension, Trace, HOURS_PER_DAY};

pub use text::{parse_spec, Catalog, ParseError, SpecText};

/// Enumerated domains above this size are refused rather than allocated.
pub const MAX_DOMAIN: usize = 20_000_000;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Cube(#[from] CubeError),
    #[error("observed cube is empty")]
    EmptyCube,
    #[error("estimator has no terms")]
    NoTerms,
    #[error("constant must be positive")]
    NonPositiveConstant,
    #[error("comparison cube dimension `{0}` is not assigned by the projection")]
    UnassignedDimension(String),
    #[error("projection assigns `{0}`, which the comparison cube does not have")]
    UnknownTarget(String),
    #[error("projection copies `{0}`, which the observed cube does not have")]
    UnknownSource(String),
    #[error("comparison cubes must derive from the observed cube's base")]
    ForeignBase,
    #[error("aggregative context needs a non-empty proper subset of dimensions to spread over")]
    InvalidAggregation,
    #[error("enumerated domain has {0} cells, above the limit of {MAX_DOMAIN}")]
    DomainTooLarge(usize),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// Take the coordinate of the named observed dimension.
    Copy(String),
    /// Always use this label.
    Fixed(String),
}

/// Assignment of every comparison-cube dimension, keyed by target name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoordinateProjection(pub BTreeMap<String, Projection>);

impl CoordinateProjection {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn copy(mut self, dim: &str) -> Self {
        self.0.insert(dim.to_owned(), Projection::Copy(dim.to_owned()));
        self
    }

    pub fn fixed(mut self, dim: &str, label: &str) -> Self {
        self.0.insert(dim.to_owned(), Projection::Fixed(label.to_owned()));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exponent {
    Numerator,
    Denominator,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Term {
    pub cube: Trace,
    pub projection: CoordinateProjection,
    pub exponent: Exponent,
}

impl Term {
    pub fn numerator(cube: Trace, projection: CoordinateProjection) -> Self {
        Self {
            cube,
            projection,
            exponent: Exponent::Numerator,
        }
    }

    pub fn denominator(cube: Trace, projection: CoordinateProjection) -> Self {
        Self {
            cube,
            projection,
            exponent: Exponent::Denominator,
        }
    }
}

/// Which cells of the observed cube get an expected value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainPolicy {
    /// Observed support plus the join of the numerator terms' supports.
    #[default]
    Support,
    /// Cartesian product of each dimension's admissible values.
    Product,
    /// Observed support only.
    Observed,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub constant: Ratio<u64>,
    pub terms: Vec<Term>,
    #[serde(default)]
    pub domain: DomainPolicy,
}

impl EstimatorSpec {
    pub fn new(terms: Vec<Term>) -> Self {
        Self {
            constant: Ratio::from_integer(1),
            terms,
            domain: DomainPolicy::Support,
        }
    }

    pub fn with_constant(mut self, num: u64, den: u64) -> Self {
        self.constant = Ratio::new(num, den.max(1));
        self
    }

    pub fn with_domain(mut self, domain: DomainPolicy) -> Self {
        self.domain = domain;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedCell {
    pub coord: Coord,
    pub observed: u64,
    pub expected: f64,
    /// A denominator term was zero; `expected` is reported as 0.
    pub unsupported: bool,
}

/// Observed and expected values over the enumerated cells of a cube.
#[derive(Debug, Clone)]
pub struct ExpectedField {
    pub dims: Vec<Dimension>,
    pub provenance: Trace,
    pub domain: DomainPolicy,
    pub cells: Vec<ExpectedCell>,
}

impl ExpectedField {
    pub fn labels(&self, coord: &[u32]) -> Vec<String> {
        self.dims
            .iter()
            .zip(coord)
            .map(|(d, &id)| d.label(id).to_owned())
            .collect()
    }

    pub fn total_expected(&self) -> f64 {
        self.cells.iter().map(|c| c.expected).sum()
    }

    pub fn find(&self, labels: &[&str]) -> Option<&ExpectedCell> {
        let coord: Option<Coord> = self
            .dims
            .iter()
            .zip(labels)
            .map(|(d, l)| d.id(l))
            .collect();
        let coord = coord?;
        self.cells
            .binary_search_by(|c| c.coord.as_slice().cmp(&coord))
            .ok()
            .map(|i| &self.cells[i])
    }
}

/// Values each dimension of `obs` may take in an enumerated domain: the
/// values allowed by the last filter on that dimension when there is one,
/// all 24 hours for an hour-of-day dimension, otherwise the observed values.
pub fn admissible_values(obs: &Cube, idx: usize) -> Vec<u32> {
    let dim = &obs.dims()[idx];
    let mut restriction: Option<BTreeSet<String>> = None;
    for op in obs.provenance().ops() {
        match op {
            CubeOp::Partition(p) if p.dim == dim.name() => restriction = None,
            CubeOp::Filter(sel) => {
                if let Some(values) = sel.values.get(dim.name()) {
                    restriction = Some(match restriction {
                        Some(r) => r.intersection(values).cloned().collect(),
                        None => values.clone(),
                    });
                }
            }
            _ => {}
        }
    }
    match restriction {
        Some(r) => {
            let mut ids: Vec<u32> = r.iter().filter_map(|l| dim.id(l)).collect();
            ids.sort_unstable();
            ids
        }
        None if dim.kind() == DimKind::HourOfDay => (0..HOURS_PER_DAY).collect(),
        None => obs.observed_values(idx).into_iter().collect(),
    }
}

/// Number of cells in the product of admissible values over `dims`.
pub fn domain_size(obs: &Cube, dims: &[&str]) -> Result<u64, CubeError> {
    let mut n = 1u64;
    for d in dims {
        n = n.saturating_mul(admissible_values(obs, obs.dim_index(d)?).len() as u64);
    }
    Ok(n)
}

fn trace_to(obs: &Cube, keep: &[&str]) -> Trace {
    let drop: Vec<String> = obs
        .dims()
        .iter()
        .map(|d| d.name().to_owned())
        .filter(|n| !keep.contains(&n.as_str()))
        .collect();
    let mut t = obs.provenance().clone();
    if !drop.is_empty() {
        t = t.then(CubeOp::aggregate(drop));
    }
    t
}

/// Constant expected value `total / |X|` over the product domain.
pub fn basic_spec(obs: &Cube) -> Result<EstimatorSpec, EstimatorError> {
    let names: Vec<&str> = obs.dims().iter().map(|d| d.name()).collect();
    let size = domain_size(obs, &names)?;
    if size == 0 {
        return Err(EstimatorError::EmptyCube);
    }
    Ok(EstimatorSpec::new(vec![Term::numerator(
        trace_to(obs, &[]),
        CoordinateProjection::new(),
    )])
    .with_constant(1, size)
    .with_domain(DomainPolicy::Product))
}

/// `parent(x') / |Y|`: each parent cell spread evenly over the `spread` dims.
pub fn aggregative_spec(obs: &Cube, spread: &[&str]) -> Result<EstimatorSpec, EstimatorError> {
    for d in spread {
        obs.dim_index(d)?;
    }
    let spread_set: BTreeSet<&str> = spread.iter().copied().collect();
    if spread_set.is_empty() || spread_set.len() == obs.arity() {
        return Err(EstimatorError::InvalidAggregation);
    }
    let keep: Vec<&str> = obs
        .dims()
        .iter()
        .map(|d| d.name())
        .filter(|n| !spread_set.contains(n))
        .collect();
    let size = domain_size(obs, spread)?;
    if size == 0 {
        return Err(EstimatorError::EmptyCube);
    }
    let projection = keep
        .iter()
        .fold(CoordinateProjection::new(), |p, d| p.copy(d));
    Ok(
        EstimatorSpec::new(vec![Term::numerator(trace_to(obs, &keep), projection)])
            .with_constant(1, size),
    )
}

pub fn expected_basic(store: &CubeStore, obs: &Cube) -> Result<ExpectedField, EstimatorError> {
    if obs.is_empty() {
        return Err(EstimatorError::EmptyCube);
    }
    expected_ratio_product(store, obs, &basic_spec(obs)?)
}

pub fn expected_aggregative(
    store: &CubeStore,
    obs: &Cube,
    spread: &[&str],
) -> Result<ExpectedField, EstimatorError> {
    expected_ratio_product(store, obs, &aggregative_spec(obs, spread)?)
}

enum Slot {
    Copy {
        src: usize,
        map: Option<Vec<Option<u32>>>,
    },
    Fixed(Option<u32>),
}

struct Resolved {
    cube: Arc<Cube>,
    slots: Vec<Slot>,
    exponent: Exponent,
}

impl Resolved {
    fn new(store: &CubeStore, obs: &Cube, term: &Term) -> Result<Self, EstimatorError> {
        let cube = store.materialize(&term.cube)?;
        for target in term.projection.0.keys() {
            if !cube.has_dim(target) {
                return Err(EstimatorError::UnknownTarget(target.clone()));
            }
        }
        let mut slots = Vec::with_capacity(cube.arity());
        for dim in cube.dims() {
            let proj = term
                .projection
                .0
                .get(dim.name())
                .ok_or_else(|| EstimatorError::UnassignedDimension(dim.name().to_owned()))?;
            slots.push(match proj {
                Projection::Copy(src) => {
                    let src = obs
                        .dim_index(src)
                        .map_err(|_| EstimatorError::UnknownSource(src.clone()))?;
                    let source = &obs.dims()[src];
                    let map = (!source.shares_dict(dim)).then(|| source.translation_to(dim));
                    Slot::Copy { src, map }
                }
                Projection::Fixed(label) => Slot::Fixed(dim.id(label)),
            });
        }
        Ok(Self {
            cube,
            slots,
            exponent: term.exponent,
        })
    }

    fn value(&self, coord: &[u32]) -> u64 {
        let mut key = Coord::with_capacity(self.slots.len());
        for slot in &self.slots {
            let id = match slot {
                Slot::Copy { src, map: None } => Some(coord[*src]),
                Slot::Copy { src, map: Some(m) } => m.get(coord[*src] as usize).copied().flatten(),
                Slot::Fixed(id) => *id,
            };
            match id {
                Some(id) => key.push(id),
                None => return 0,
            }
        }
        self.cube.lookup(&key)
    }

    /// Partial observed coordinates (over the copied dims) where this term is
    /// non-zero. `None` when the term copies no observed dimension.
    fn support(&self, obs: &Cube) -> Option<(Vec<usize>, BTreeSet<Vec<u32>>)> {
        let mut covered: Vec<usize> = self
            .slots
            .iter()
            .filter_map(|s| match s {
                Slot::Copy { src, .. } => Some(*src),
                Slot::Fixed(_) => None,
            })
            .collect();
        covered.sort_unstable();
        covered.dedup();
        if covered.is_empty() {
            return None;
        }
        let reverse: Vec<Option<Vec<Option<u32>>>> = self
            .slots
            .iter()
            .zip(self.cube.dims())
            .map(|(s, target)| match s {
                Slot::Copy { src, map: Some(_) } => Some(target.translation_to(&obs.dims()[*src])),
                _ => None,
            })
            .collect();
        let mut rows = BTreeSet::new();
        'cells: for (coord, count) in self.cube.cells() {
            if *count == 0 {
                continue;
            }
            let mut partial: Vec<Option<u32>> = vec![None; obs.arity()];
            for (i, slot) in self.slots.iter().enumerate() {
                match slot {
                    Slot::Fixed(Some(id)) if *id == coord[i] => {}
                    Slot::Fixed(_) => continue 'cells,
                    Slot::Copy { src, .. } => {
                        let id = match &reverse[i] {
                            None => Some(coord[i]),
                            Some(m) => m[coord[i] as usize],
                        };
                        match (id, partial[*src]) {
                            (None, _) => continue 'cells,
                            (Some(a), Some(b)) if a != b => continue 'cells,
                            (Some(a), _) => partial[*src] = Some(a),
                        }
                    }
                }
            }
            rows.insert(covered.iter().map(|&d| partial[d].expect("covered")).collect());
        }
        Some((covered, rows))
    }
}

/// Natural join of two relations over observed-dimension indices.
fn join(
    left: (Vec<usize>, Vec<Vec<u32>>),
    right: (Vec<usize>, BTreeSet<Vec<u32>>),
) -> Result<(Vec<usize>, Vec<Vec<u32>>), EstimatorError> {
    let (ldims, lrows) = left;
    let (rdims, rrows) = right;
    let shared: Vec<(usize, usize)> = ldims
        .iter()
        .enumerate()
        .filter_map(|(li, d)| rdims.iter().position(|r| r == d).map(|ri| (li, ri)))
        .collect();
    let extra: Vec<usize> = (0..rdims.len())
        .filter(|ri| !shared.iter().any(|(_, s)| s == ri))
        .collect();
    let mut index: HashMap<Vec<u32>, Vec<&Vec<u32>>> = HashMap::new();
    for row in &rrows {
        let key = shared.iter().map(|&(_, ri)| row[ri]).collect();
        index.entry(key).or_default().push(row);
    }
    let mut dims = ldims.clone();
    dims.extend(extra.iter().map(|&ri| rdims[ri]));
    let mut rows = Vec::new();
    for l in &lrows {
        let key: Vec<u32> = shared.iter().map(|&(li, _)| l[li]).collect();
        if let Some(matches) = index.get(&key) {
            for r in matches {
                let mut row = l.clone();
                row.extend(extra.iter().map(|&ri| r[ri]));
                rows.push(row);
                if rows.len() > MAX_DOMAIN {
                    return Err(EstimatorError::DomainTooLarge(rows.len()));
                }
            }
        }
    }
    Ok((dims, rows))
}

fn product_domain(obs: &Cube, dims: &[usize]) -> Result<Vec<Vec<u32>>, EstimatorError> {
    let values: Vec<Vec<u32>> = dims.iter().map(|&i| admissible_values(obs, i)).collect();
    let size = values
        .iter()
        .try_fold(1usize, |acc, v| acc.checked_mul(v.len()))
        .unwrap_or(usize::MAX);
    if size > MAX_DOMAIN {
        return Err(EstimatorError::DomainTooLarge(size));
    }
    let mut rows: Vec<Vec<u32>> = vec![Vec::with_capacity(dims.len())];
    for vs in &values {
        let mut next = Vec::with_capacity(rows.len() * vs.len());
        for r in &rows {
            for &v in vs {
                let mut row = r.clone();
                row.push(v);
                next.push(row);
            }
        }
        rows = next;
    }
    Ok(rows)
}

fn enumerate_domain(
    obs: &Cube,
    terms: &[Resolved],
    policy: DomainPolicy,
) -> Result<Vec<Coord>, EstimatorError> {
    let all: Vec<usize> = (0..obs.arity()).collect();
    let mut domain: BTreeSet<Coord> = obs.cells().iter().map(|(c, _)| c.clone()).collect();
    match policy {
        DomainPolicy::Observed => {}
        DomainPolicy::Product => {
            domain.extend(product_domain(obs, &all)?.into_iter().map(Coord::from_vec));
        }
        DomainPolicy::Support => {
            let mut acc: (Vec<usize>, Vec<Vec<u32>>) = (Vec::new(), vec![Vec::new()]);
            for t in terms.iter().filter(|t| t.exponent == Exponent::Numerator) {
                if let Some(rel) = t.support(obs) {
                    acc = join(acc, rel)?;
                }
            }
            let uncovered: Vec<usize> = all.iter().copied().filter(|d| !acc.0.contains(d)).collect();
            if acc.0.is_empty() {
                // no numerator term is indexed by an observed dimension
                acc.1.clear();
            } else if !uncovered.is_empty() && !acc.1.is_empty() {
                let rest = product_domain(obs, &uncovered)?;
                acc = join(acc, (uncovered, rest.into_iter().collect()))?;
            }
            let (dims, rows) = acc;
            for row in rows {
                let mut coord: Coord = smallvec::smallvec![0; obs.arity()];
                for (k, &d) in dims.iter().enumerate() {
                    coord[d] = row[k];
                }
                domain.insert(coord);
            }
        }
    }
    if domain.len() > MAX_DOMAIN {
        return Err(EstimatorError::DomainTooLarge(domain.len()));
    }
    Ok(domain.into_iter().collect())
}

/// Evaluates `spec` on every enumerated cell of `obs`.
pub fn expected_ratio_product(
    store: &CubeStore,
    obs: &Cube,
    spec: &EstimatorSpec,
) -> Result<ExpectedField, EstimatorError> {
    if spec.terms.is_empty() {
        return Err(EstimatorError::NoTerms);
    }
    if *spec.constant.numer() == 0 || *spec.constant.denom() == 0 {
        return Err(EstimatorError::NonPositiveConstant);
    }
    if obs.base_id() != store.base().base_id() {
        return Err(EstimatorError::ForeignBase);
    }
    let terms = spec
        .terms
        .iter()
        .map(|t| Resolved::new(store, obs, t))
        .collect::<Result<Vec<_>, _>>()?;
    let domain = enumerate_domain(obs, &terms, spec.domain)?;
    let constant = *spec.constant.numer() as f64 / *spec.constant.denom() as f64;

    let cells = domain
        .into_par_iter()
        .map(|coord| {
            let mut num = constant;
            let mut den = 1.0;
            for t in &terms {
                let v = t.value(&coord) as f64;
                match t.exponent {
                    Exponent::Numerator => num *= v,
                    Exponent::Denominator => den *= v,
                }
            }
            let unsupported = den == 0.0;
            ExpectedCell {
                observed: obs.lookup(&coord),
                expected: if unsupported { 0.0 } else { num / den },
                unsupported,
                coord,
            }
        })
        .collect();
    Ok(ExpectedField {
        dims: obs.dims().to_vec(),
        provenance: obs.provenance().clone(),
        domain: spec.domain,
        cells,
    })
}

/// Multi-aggregative hour model over a `(day, hour)` cube:
/// `v(d) * v(h) / v()`.
pub fn day_hour_profile_spec(obs: &Cube, day: &str, hour: &str) -> EstimatorSpec {
    EstimatorSpec::new(vec![
        Term::numerator(trace_to(obs, &[day]), CoordinateProjection::new().copy(day)),
        Term::numerator(trace_to(obs, &[hour]), CoordinateProjection::new().copy(hour)),
        Term::denominator(trace_to(obs, &[]), CoordinateProjection::new()),
    ])
}
