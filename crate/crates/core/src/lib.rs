//! List learning of sparse conjunctions under product attribute noise.
//!
//! The crate provides the noisy example oracle, plug-in estimators, the
//! pairwise-independence list learner, an exhaustive best-agreement
//! baseline, exact small-n distribution tables and probes of the hard
//! instances that bound what any list learner can achieve.

pub mod baseline;
pub mod bits;
pub mod error;
pub mod estimators;
pub mod exact;
pub mod harness;
pub mod learner;
pub mod lowerbound;
pub mod model;
pub mod rng;

pub use bits::{BitString, Conjunction, Hypothesis, Literal, Polarity};
pub use error::{Error, Result};
pub use exact::ExactDist;
pub use model::{GenerativeDist, LabeledExample, NoiseVector, SampleSet};
