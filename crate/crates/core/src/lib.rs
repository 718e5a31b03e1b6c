//! Out-of-distribution detection laboratory for small rectifier MLPs.
//!
//! The crate trains cosine-head MLPs under several labeling schemes, extracts
//! the binarized hidden classifier living in each hidden layer, and scores
//! inputs with the usual family of OOD detectors, including the
//! negative-aware norm `‖a‖₁ / ‖a‖₀`.

pub mod data;
pub mod error;
pub mod eval;
pub mod hidden;
pub mod net;
pub mod numcore;
pub mod scores;
pub mod train;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/hidden-classifier.md")]
    mod hidden_classifier {}
    #[doc = include_str!("../../../book/src/scores.md")]
    mod scores {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/findings.md")]
    mod findings {}
}
