//! Star-tracker image processing: scene synthesis with sensor noise and
//! stray light, a small segmentation/distance network trained from scratch,
//! trilateration centroiding, classical baselines and a benchmark harness.
//!
//! Numeric kernels are generic over [`scalar::Real`]; the aliases below fix
//! the precisions used by the command-line tool.

pub mod classical;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod grid;
pub mod io;
pub mod labels;
pub mod linalg;
pub mod net;
pub mod noise;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod simulate;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use grid::Grid;

/// Frames in digital numbers.
pub type Frame = simulate::ImageFrame<f64>;
/// Network weights as trained and served.
pub type Network = net::NetworkParams<f32>;
/// Network output maps.
pub type NetPrediction = net::Prediction<f32>;
/// Training example at network precision.
pub type Sample = net::TrainSample<f32>;
/// Distance labels as stored on disk.
pub type DistanceLabels = labels::DistanceMap<f32>;
