//! Direction-of-arrival estimation for mixed coherent and independent
//! sources on coprime sparse arrays, using fourth-order cumulant matrices.

pub mod baseline;
pub mod config;
pub mod cumulants;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod matrix_io;
pub mod pipeline;
pub mod simulation;
pub mod smoothing;
pub mod spectrum;

pub use config::{make_scenario, Config, Preset, Prepared};
pub use error::{Error, Result};
pub use pipeline::{run, Method, PairSelection, RunOptions, RunOutput};
