//! Synthesis and tuning of synchronized dual-arm motion programs that make the
//! relative tool motion follow a 5-dof spatial curve at uniform speed.

pub mod baseline;
pub mod config_opt;
pub mod curve;
mod diff;
pub mod error;
pub mod evolution;
pub mod fitting;
pub mod geometry;
pub mod kinematics;
pub mod metrics;
pub mod pipeline;
pub mod program;
pub mod relative_ik;
pub mod scenario;
pub mod sim;
pub mod speedbound;
pub mod tuner;

pub use error::{Error, Result};
