//! Planning, control and kinematic simulation for quadrupeds that spin and
//! turn on spherical feet.
//!
//! The stack: a trot footstep planner ([`gait`]), leg kinematics with a
//! rolling-contact correction ([`geometry`], [`rolling`]), a terrain plane
//! estimator ([`terrain`]), a projected-support-polygon CoM planner ([`psp`])
//! and an LQR tracker ([`lqr`]), closed around an idealised tracking plant
//! ([`sim`]) whose only disturbance is the rolling of the ball feet plus seeded
//! contact noise. [`metrics`], [`log`], [`config`] and [`sweep`] handle the
//! experiment side.

pub mod config;
pub mod gait;
pub mod geometry;
pub mod log;
pub mod lqr;
pub mod metrics;
pub mod psp;
pub mod rolling;
pub mod sim;
pub mod sweep;
pub mod terrain;

pub use config::{Config, ConfigError};
pub use geometry::{JointAngles, KneeBranch, Leg, LegGeometry};
pub use metrics::SpinMetrics;
pub use sim::{run, Ablation, SimError};
