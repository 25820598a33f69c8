//! Shared-encoder Bayesian neural-linear model.
//!
//! A small feed-forward encoder maps task inputs to a feature vector with a
//! trailing constant-one entry; each task owns a normal-inverse-gamma head
//! that performs conjugate Bayesian linear regression on those features. The
//! encoder is trained by gradient ascent on the sum of per-head marginal log
//! likelihoods; head posteriors are always recomputed in closed form from the
//! full datasets under the current features.

mod data;
mod encoder;
mod head;
mod model;

pub use data::{Dataset, Demonstration};
pub use encoder::Encoder;
pub use head::{NigHead, NigPrior, SuffStats};
pub use model::{HeadBatch, MultiHeadModel, Optimizer, OutputTransform, RefineScope, TrainConfig};
