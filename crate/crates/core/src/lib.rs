//! Nested entailment for universal few-shot text classification.
//!
//! Every classification example is recast as a query `q`, a premise `p` and
//! a hypothesis `h`; a single encoder is trained with a supervised
//! contrastive objective so that `q` lands near the `(p, h)` pairs whose
//! label matches. Prediction is nearest-pair lookup, so unseen label sets
//! work zero-shot and improve with a handful of support examples.

pub mod checkpoint;
pub mod contrastive;
pub mod efl;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod meta_task;
pub mod optim;
pub mod pipeline;
pub mod predictor;
pub mod report;
pub mod sampler;
pub mod synthetic;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};
