//! Cognate detection and retrieval.
//!
//! Words are turned into (optionally positional) character shingle sets,
//! compared with set measures or IR ranking functions over a lexicon index,
//! and combined with a trained graphical error model that scores the
//! substring transformations between a source and a target word.
//!
//! - [`shingling`]: plain, one-end and two-end positional k-gram sets
//! - [`error_model`]: bipartite leftover graphs and the smoothed edge model
//! - [`ranking`]: lexicon index, similarity functions and ranked retrieval
//! - [`scorer`]: the weighted similarity / error-model score and thresholds
//! - [`baselines`]: edit distance, LCSR and XDice
//! - [`evaluation`]: split, cross-validated tuning, accuracy, MRR, ablation
//! - [`model`]: JSON persistence of trained pipelines

pub mod baselines;
pub mod error;
pub mod error_model;
pub mod evaluation;
pub mod model;
pub mod ranking;
pub mod scorer;
pub mod shingling;

pub use error::{Error, Result};
pub use error_model::{build_graph, pi_score, ErrorEdge, ErrorGraph, ErrorModel};
pub use ranking::{rank, sim, LexiconIndex, RankFunction, Ranked, RankerParams};
pub use scorer::{classify, combined_score, CombinedScorer, Label, Normalization, ScoreConfig};
pub use shingling::{
    intersect, shingle, shingle_one_end, shingle_plain, shingle_two_end, Shingle, ShingleMode, ShingleSet,
    ShinglerConfig, Word,
};
