//! Collaborative filtering on a shared-memory engine.
//!
//! The crate covers item-based neighbourhood prediction, latent-factor models
//! (biased MF, SVD++, time-aware variants, ALS/wALS), matrix factorization with
//! item-taxonomy regularization, ridge blending, a synthetic data generator
//! and a small benchmark harness. See the `examples/` directory for runnable
//! entry points.

pub mod bench;
pub mod blend;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod factor;
pub mod hyper;
pub mod mfitr;
pub mod neighborhood;
pub mod parallel;
pub mod persist;
pub mod synth;
pub mod taxonomy;
pub mod train;

pub use data::{Dataset, ItemId, RatingRecord, ScoreScale, Split, TimeBinner, Timestamp, UserId};
pub use error::{Error, Result};
pub use hyper::{HyperParams, ModelKind, Regularization};
pub use parallel::Engine;
