//! Language-conditioned semantic safety filtering for a 2D mobile robot.

pub mod dynamics;
pub mod error;
pub mod filter;
pub mod grid;
pub mod grounding;
pub mod harness;
pub mod labels;
pub mod language;
pub mod nominal;
pub mod scalar;
pub mod scenario;
pub mod sdf;
pub mod world;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type RobotState = dynamics::RobotState<f64>;
pub type RobotState32 = dynamics::RobotState<f32>;
pub type Control = dynamics::Control<f64>;
pub type Control32 = dynamics::Control<f32>;
pub type DynamicsParams = dynamics::DynamicsParams<f64>;
pub type ScoreResult = filter::ScoreResult<f64>;
pub type SbmpcParams = filter::SbmpcParams<f64>;
pub type FilterDecision = filter::FilterDecision<f64>;
