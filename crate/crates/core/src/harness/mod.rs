//! Synthetic experiments: sampling, Monte Carlo studies and reporting.

pub mod config;
pub mod noise;
pub mod report;
pub mod sampling;
pub mod stats;
pub mod study;

pub use config::{Config, Experiment, LambdaRule, PlanConfig};
pub use noise::{bernstein_audit, NoiseSpec};
pub use sampling::generate_sample;
pub use study::{run_concentration_study, run_rate_study, ConcentrationReport, RateReport};
