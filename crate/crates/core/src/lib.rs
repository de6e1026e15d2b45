pub mod datamodel;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod modalities;
pub mod models;
pub mod raster;
pub mod synthgen;

pub use error::{PalsyError, Result};
