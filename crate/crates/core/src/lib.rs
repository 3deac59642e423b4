//! Simulation of direct load control on a power grid that cannot meet
//! demand. Homes are throttled to one of five power levels instead of
//! being blacked out by whole feeder groups.

pub mod config;
pub mod consumption;
pub mod corpus;
pub mod engine;
pub mod error;
pub mod home;
pub mod metrics;
pub mod policy;
pub mod protocol;
pub mod sweep;
pub mod topology;

pub use error::{Error, Result};
