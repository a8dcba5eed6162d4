//! Extraction of the exact, self-reported age of social-media users from
//! individual posts.
//!
//! The pipeline has four stages, each usable on its own:
//!
//! 1. [`retrieval`]: high-recall query patterns select posts that may state an
//!    age between 10 and 99, after retweets and reported speech are dropped.
//! 2. [`classify`]: an "age"/"no age" classifier, either the built-in n-gram
//!    linear baseline or an external plug-in process.
//! 3. [`extract`]: an ordered rule cascade turns an "age" post into an exact
//!    age with per-rule arithmetic.
//! 4. [`eval`]: precision/recall/F₁ under the classification and joint
//!    extraction taxonomies, and Fleiss' kappa for annotation agreement.
//!
//! [`pipeline`] wires the stages together over streamed JSONL/TSV corpora.

pub mod classify;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod extract;
pub mod normalize;
pub mod pipeline;
pub mod retrieval;

pub use corpus::{Label, LabeledPost, Post};
pub use error::{Error, Result};
