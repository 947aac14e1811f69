//! Soil pH prediction from nearest-field statistics.
//!
//! The pipeline: ingest field records from CSV, answer radius-in-meters
//! queries over their locations, compute per-radius neighbor pH statistics
//! (count, mean/min/max pH, distance to the neighbor centroid), assemble
//! design matrices, and fit any of six regression techniques (OLS linear
//! regression, LASSO, decision tree, random forest, gradient-boosted trees,
//! epsilon-SVR) under one fit/predict/serialize contract. An experiment
//! runner evaluates feature sets against R^2 and MAE under cross-validation,
//! and a seeded synthetic-field generator provides spatially autocorrelated
//! datasets for testing.

pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod geo;
pub mod linalg;
pub mod par;
pub mod pipeline;
pub mod regress;
pub mod synth;

pub use error::{Error, Result};
