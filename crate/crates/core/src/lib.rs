//! Certified movement-cost prioritization of test inputs.
//!
//! Ranks a model's test inputs by a certified lower bound on how far each
//! one has to move in feature space to reach its target position, so
//! bug-revealing inputs surface first. The pipeline samples gradient norms
//! in an L_p hyper-ball around each input, fits a reverse-Weibull extreme
//! value distribution to the per-batch maxima, takes the finite right
//! endpoint as a local Lipschitz estimate, and divides the current gap to
//! the target by that estimate. A black-box mode substitutes finite
//! differences for exact gradients. Evaluation metrics and a DeepGini-style
//! baseline scorer ride along for comparisons.

pub mod centers;
pub mod dataset;
pub mod error;
pub mod gevt;
pub mod metrics;
pub mod model;
pub mod norm;
pub mod prioritizer;
pub mod sampler;

pub use error::{Error, Result};
pub use norm::PNorm;
