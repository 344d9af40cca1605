//! Pasture monitoring pipeline: field synthesis, ConvLSTM prediction with
//! MC-dropout uncertainty, intermittent multi-robot deployment planning and
//! LiDAR-based height estimation.

pub mod error;
pub mod evaluation;
pub mod field_synth;
pub mod heightmap;
pub mod manifest;
pub mod perception;
pub mod planner;
pub mod predictor;
pub mod rng;

pub use error::{Error, Result};
pub use heightmap::HeightMap;
