//! Offline distributional RL for wireless control: environments, replay,
//! agents and the experiment harness.

pub mod agents;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod replay;
pub mod rng;
pub mod rrm;
pub mod uav;

pub use env::{Environment, Step};
pub use error::{Error, Result};
