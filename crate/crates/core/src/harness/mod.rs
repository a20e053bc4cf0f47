//! Experiment configuration, reproduction runs, stability trials and the
//! self-check suite.

pub mod config;
pub mod experiment;
pub mod stability;
pub mod verify;

pub use config::{Auto, ExperimentConfig, FrameSource, Outputs, Resolved};
pub use experiment::{fit_slope, fit_slope_active, run_experiment, Column, ResultRow};
pub use stability::{stability_trials, TrialsReport};
pub use verify::{verify_suite, verify_suite_with, Check, VerifyOptions, VerifyReport};
