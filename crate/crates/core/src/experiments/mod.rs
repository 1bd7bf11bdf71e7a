//! Problem generators and multi-seed drivers.

pub mod image;
pub mod runner;
pub mod signal;
pub mod toy;

pub use image::{generate_image_problem, ImageProblem, ImageSpec};
pub use runner::{run_experiment, run_seed, ExperimentConfig, SeedRun, StrategyRuns};
pub use signal::{generate_signal_problem, SignalProblem, SignalSpec};
