//! Schema-based multi-task embodied navigation on procedural graph worlds.

pub mod agent;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod inspect;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod params;
pub mod schema;
pub mod tasks;
pub mod templates;
pub mod train;
pub mod vocab;
pub mod world;

pub use error::{Error, Result};
