pub mod bounds;
pub mod error;
pub mod euler;
pub mod geometry;
pub mod model;
pub mod tracking;
pub mod verify;

pub use error::{Error, Result};
