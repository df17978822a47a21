//! Device-independent detection of non-local correlations with the
//! commuting moment-matrix hierarchy.
//!
//! The pipeline runs [`hierarchy::build_structure`] → a correlator table
//! (simulated in [`quantum`] or ingested through [`format`]) →
//! [`hierarchy::assemble`] → [`sdp::maximize_lambda_min`]. A negative optimum
//! backed by a verified dual certificate rules out every local model.

pub mod algebra;
pub mod analysis;
pub mod cli;
pub mod format;
pub mod hierarchy;
pub mod quantum;
pub mod sdp;
