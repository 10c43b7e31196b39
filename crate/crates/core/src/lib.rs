pub mod cli;
pub mod config;
pub mod datamodel;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod retrieval;
pub mod service;
pub mod synthworld;
pub mod trainer;

pub use error::{Error, Result};
