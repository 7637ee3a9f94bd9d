//! Bayesian optimization with preference exploration.
//!
//! A decision maker's utility over several expensive objectives is learned
//! from pairwise comparisons with an ensemble of positive-weight (monotone)
//! neural networks, while the objectives themselves are modelled by
//! independent Gaussian processes. Each iteration alternates between an
//! experimentation stage (pick the next design by noisy expected improvement
//! under utility uncertainty) and a preference stage (pick the next pair of
//! observed outputs to show the decision maker).
//!
//! The main entry points are [`bope_loop::run`] for a full simulated run and
//! the individual building blocks in [`gp`], [`monne`] and [`acquisition`].

pub mod acquisition;
pub mod bope_loop;
pub mod config;
pub mod dm;
mod error;
pub mod gp;
pub mod metrics;
pub mod monne;
pub mod normal;
pub mod optim;
pub mod problems;
pub mod qmc;
pub mod record;
pub mod seed;

pub use error::{Error, Result};
pub use problems::{DesignPoint, OutputVector};
