//! Contextual outlier detection over timestamped interaction logs.
//!
//! Interactions are loaded into sparse count cubes ([`cube`]), compared
//! against expected-value models built from other cuboids of the same base
//! ([`estimator`]), scored with ratio or Poisson deviations and filtered
//! with a sigma rule ([`deviation`]). [`detect`] chains these into the
//! event / author / spreader / hashtag / topic drill-down.

// `!(x >= 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cube;
pub mod detect;
pub mod deviation;
pub mod estimator;
pub mod ingest;
pub mod synth;
