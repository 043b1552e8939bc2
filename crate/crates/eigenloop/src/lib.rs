//! Experiments, file formats and the HTTP annotation service built on
//! `eigenloop-core`.

pub mod config;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod projection;
pub mod service;

pub use eigenloop_core;
pub use error::{AppError, AppResult};
