//! Lane-following simulator with a pure pursuit demonstrator, imitation
//! learning trainers (behavioral cloning, DAgger, GAIL) and a driving-metric
//! evaluation harness.

pub mod config;
pub mod eval;
pub mod expert;
pub mod il;
pub mod nn;
pub mod policy;
pub mod render;
pub mod sim;
