//! Cosserat rod shapes as piecewise-constant paths in se(3).

pub mod curve;
pub mod error;
pub mod energy;
pub mod exec;
pub mod io;
pub mod relax;
pub mod scenarios;
pub mod se3;
pub mod shape;

pub use error::{Error, Result};
pub use exec::Exec;
