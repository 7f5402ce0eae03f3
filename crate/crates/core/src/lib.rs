//! Agent-based simulation of adaptive groups working on NK tasks.
//!
//! A run draws a fresh NK landscape, a population of boundedly rational
//! agents with one area of expertise each, and repeatedly forms a group of
//! one agent per subtask from honest utility signals. Members implement the
//! best subtask solution they know, the concatenated strategy is scored on
//! the landscape, and every agent then discovers or forgets solutions.
//!
//! Module map:
//!
//! - [`landscape`]: interdependence matrices, contribution tables, evaluation
//!   and exhaustive optimum search.
//! - [`population`]: agents, known-solution sets, utility estimates, learning.
//! - [`adaptation`]: adaptation schedules and signal-based member selection.
//! - [`engine`]: the period loop, seeding and parallel replications.
//! - [`analysis`]: cell summaries, partial dependence, bootstrap contrasts.
//! - [`experiment`]: config files, grid expansion and CSV/JSON output.

pub mod adaptation;
pub mod analysis;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod landscape;
pub mod population;
pub mod seed;

pub use error::{Error, Result};
