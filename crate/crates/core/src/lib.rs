//! 4D voxel occupancy forecasting on synthetic driving worlds.
//!
//! The pipeline observes a short clip of ego-aligned voxel features, predicts
//! the next frames' features with a condition-generated linear map, refines
//! them with a spatio-temporal aggregation module, and decodes occupancy and
//! flow. Everything runs on a small self-contained tensor library with
//! reverse-mode gradients, so the whole stack is testable against
//! finite-difference and looped oracles on a CPU.

pub mod complexity;
pub mod config;
pub mod container;
pub mod dataset;
pub mod error;
pub mod export;
pub mod forecaster;
pub mod geometry;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod observer;
pub mod predictor;
pub mod refiner;
pub mod trainer;
pub mod scene;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Dtype, Element, Tensor};
