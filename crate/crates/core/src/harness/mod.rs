//! Experiment driver: Monte Carlo estimation, weak-error curves, rate fits,
//! configuration and output.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod functional;
pub mod mc;
pub mod output;
pub mod rate;

pub use functional::FunctionalSpec;
pub use mc::{mc_estimate, reference_weak_value, McEstimate};
pub use rate::{fit_rate, RateFit};
