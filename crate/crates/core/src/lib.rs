//! Two-view semi-supervised training by stochastic agreement regularization.
//!
//! Two probabilistic models, one per view of the data, are trained jointly:
//! each minimizes its own regularized log loss on labeled data, and together
//! they pay `c` times the expected Bhattacharyya distance between their
//! predictions on unlabeled data. The penalty is optimized through its
//! variational form, a KL projection onto distributions on which the views
//! agree, giving an EM-style loop ([`trainer`]).
//!
//! The view models are maximum-entropy classifiers ([`maxent`]) and
//! linear-chain CRFs ([`crf`]). Views may predict over different label sets
//! related by a [`agreement::LabelMapping`].

pub mod agreement;
pub mod crf;
pub mod data;
mod error;
pub mod eval;
pub mod maxent;
pub mod model_io;
pub mod optimize;
mod parallel;
pub mod prob;
pub mod trainer;

pub use error::{Error, Result};
