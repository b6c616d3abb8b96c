//! Learning strategy-proof two-sided matching mechanisms from example matchings.
//!
//! The crate is organised bottom-up:
//!
//! * [`matching`] holds the domain types (preference orders, profiles, matching
//!   matrices, rankings), the discrete serial dictatorship and the exhaustive
//!   property oracles (stability, Pareto efficiency, strategy-proofness).
//! * [`autodiff`] is a small define-by-run reverse-mode engine over dense f64
//!   tensors of rank at most three.
//! * [`tsd`] re-expresses serial dictatorship as a sequence of tensor
//!   operations so that a soft ranking matrix can be trained end to end.
//! * [`ranking`] computes an agent ranking from public contexts with a single
//!   self-attention head, a linear score, a tie breaker and SoftSort.
//! * [`neuralsd`] wires the ranking block and TSD together and defines the losses.
//! * [`mechanisms`], [`datagen`], [`metrics`] and [`train`] implement the
//!   experimental workflow: example mechanisms, synthetic markets, evaluation
//!   metrics, the optimiser and the evaluation harness.

pub mod autodiff;
pub mod datagen;
pub mod error;
pub mod matching;
pub mod mechanisms;
pub mod metrics;
pub mod neuralsd;
pub mod par;
pub mod ranking;
pub mod train;
pub mod tsd;

pub use error::{Error, Result};
pub use matching::{
    Instance, LinearOrder, MatchingMatrix, PreferenceProfile, Ranking,
};
