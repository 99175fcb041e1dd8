//! Reward function, bounded-rational controller and gain calibration.

mod calibrate;
mod controller;
mod reward;

pub use calibrate::*;
pub use controller::*;
pub use reward::*;
