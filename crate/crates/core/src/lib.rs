//! Bounded-rational takeover driver model with online inference of its
//! cognitive parameters, rolling-horizon collision prediction, and a gaze
//! consistency analysis pipeline.

pub mod cognition;
pub mod env;
pub mod error;
pub mod filter;
pub mod io;
pub mod physio;
pub mod policy;
pub mod predict;
pub mod rng;
pub mod sim;
pub mod types;

pub use env::{make_scenario, step, ScenarioConfig, Terminated, WorldState};
pub use error::{Error, Result};
pub use types::{Action, CognitiveParams, Frame, ParamBounds, TrajectoryWindow, VehicleState, DT};
