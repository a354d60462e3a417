//! Design and editing of 2D vector fields with explicit physical properties.

pub mod dataset;
pub mod error;
pub mod field;
mod filter;
pub mod io;
pub mod metrics;
pub mod hhd;
pub mod poisson;
pub mod sim;
pub mod sketch;
pub mod synth;

pub use error::{Error, Result};
pub use field::{ScalarField, VectorField, Rect};
