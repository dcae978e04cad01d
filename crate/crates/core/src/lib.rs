pub mod baseline;
pub mod cli;
pub mod contact;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod factor_graph;
pub mod imu_preint;
pub mod io;
pub mod lie;
pub mod robot_model;
pub mod synthdata;

pub use error::{Error, Result};
