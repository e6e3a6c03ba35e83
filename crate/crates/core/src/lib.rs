//! Counterfactual data augmentation for imitation-learned driving.
//!
//! The pipeline distills a rule-based privileged expert into a
//! gradient-boosted tree classifier, searches for diverse counterfactual
//! observations near that classifier's decision boundary, relabels the
//! realized counterfactual scenes with the expert, and trains a sensor-input
//! imitation learner on the enriched dataset.

#![allow(clippy::needless_range_loop)]

pub mod augment;
pub mod cf;
pub mod config;
pub mod error;
pub mod eval;
pub mod expert;
pub mod geometry;
pub mod io;
pub mod learner;
pub mod observation;
pub mod rng;
pub mod parallel;
pub mod pipeline;
pub mod trees;
pub mod world;
