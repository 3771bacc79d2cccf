//! IO and orchestration around `karte-core`: image and manifest handling,
//! the synthetic corpus generator, encoder pre-training, caption training,
//! prediction/evaluation, heatmap rendering and the CLI.

pub mod cli;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod img;
pub mod manifest;
pub mod modelio;
pub mod preprocess;
pub mod pretrain;
pub mod synth;
pub mod trainer;
pub mod visualize;

pub use error::{Error, Result};
