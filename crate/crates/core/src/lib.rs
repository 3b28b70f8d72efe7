//! Balanced model reduction for building thermal models whose air-node
//! coefficients vary with natural ventilation.

pub mod airflow;
pub mod balred;
pub mod building;
pub mod error;
pub mod experiment;
pub mod simulation;
pub mod statespace;
pub mod synthetic;
pub mod tvreduction;

pub use error::{Error, Result};
pub use nalgebra;
pub use statespace::StateSpaceModel;
