pub mod ar;
pub mod bench;
pub mod cli;
pub mod config;
pub mod conv;
pub mod csvio;
pub mod discretize;
pub mod draws;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod recurrence;
pub mod scan;
pub mod selective;
pub mod selftest;
pub mod series;
pub mod variants;

pub use error::{Error, Result};
