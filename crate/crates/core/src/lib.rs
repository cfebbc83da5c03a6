//! Safe unlabeled multi-robot motion planning.
//!
//! A velocity-obstacle safety layer filters the commands of every robot
//! before they reach the dynamics, so learned or hand-written policies can be
//! executed without collisions. Policies are trained with a centralized-critic
//! actor-critic method ([`maddpg`]); [`baseline`] provides a greedy assignment
//! controller for comparison.

pub mod baseline;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod maddpg;
pub mod math;
pub mod nn;
pub mod persistence;
pub mod rollout;
pub mod rng;
pub mod vo;

pub use dynamics::{Action, DynParams, DynamicsModel, RobotState};
pub use env::{Env, EnvParams, Observation, RewardMode, RewardParams, Scene, StepInfo, StepResult};
pub use error::{Error, Result};
pub use math::Vec2;
pub use vo::{Cone, ConeSet, SafetyMode};
