//! Deadline-aware task scheduling and offloading for mobile edge computing.
//!
//! The exact single-server scheduler lives in [`sched_core`], the linear-time
//! admission test in [`admission`]. [`sim`] wires both into a multi-server
//! offloading simulator alongside the [`baselines`], and [`oracle`] provides
//! brute-force ground truth for small instances.

pub mod admission;
pub mod baselines;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod model;
pub mod oracle;
pub mod phy;
pub mod plot;
pub mod sched_core;
pub mod sim;
mod segtree;

pub use error::{Error, Result};
pub use model::{Schedule, Task, TaskId};
