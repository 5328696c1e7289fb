//! Dynamic attribute-graph controlled text generation.
//!
//! The pipeline steers a generator toward a target attribute (low toxicity,
//! a sentiment polarity) in four stages: sample a contextual corpus from the
//! prompt, score each sample with an attribute classifier, build a pair of
//! classifier-weighted token graphs and rank their nodes, then regenerate
//! with either a logit-bias map or a prefix prompt assembled from the top
//! positive and negative tokens. Baseline decoders and an evaluation
//! harness live alongside so methods can be compared on the same prompts.

pub mod backends;
pub mod baselines;
pub mod control;
pub mod corpus;
pub mod errors;
pub mod eval;
pub mod graph;
pub mod pipeline;
pub mod task;
pub mod testing;
pub mod text;

pub use errors::{Error, Result};
