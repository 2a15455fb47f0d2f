//! Simulation and library stack for UWB/IMU-localized autonomous valet
//! parking: layered fusion localization, guidance-assisted planning,
//! reliability-adaptive MPC tracking, a vehicle–server protocol and a
//! method-comparison benchmark.

pub mod bench;
pub mod control;
pub mod coordination;
pub mod geometry;
pub mod guidance;
pub mod localization;
pub mod parallel;
pub mod planner;
pub mod sensor;
pub mod world;

pub use geometry::{Point2, Pose2D};
pub use world::LotScenario;
