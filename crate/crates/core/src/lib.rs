//! Road roughness classification from georeferenced imagery.
//!
//! The crate builds leakage-free tile datasets from roughness surveys and
//! rasters, trains small classifiers, and evaluates them under run-based and
//! leave-one-road-out splits.

pub mod dataset;
pub mod eval;
pub mod fsio;
pub mod geo;
pub mod model;
pub mod survey;
pub mod synth;
