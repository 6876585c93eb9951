//! Pedestrian road-crossing decision model.
//!
//! A POMDP road-crossing environment with noisy angular vision and a
//! looming-aversion reward, a parameter-conditioned dueling double-DQN
//! policy learner, grid evaluation of crossing-initiation-time
//! distributions, and kernel-density likelihood fitting of the two
//! non-policy parameters (visual noise `sigma_v`, looming weight `c`).
//!
//! The [`commands`] module exposes the four pipeline stages (train,
//! simulate, fit, report) used by the `pedcross` binary; everything
//! else is the library surface they are built from.

pub mod commands;
pub mod config;
pub mod env;
pub mod episode;
pub mod error;
pub mod evaluator;
pub mod fitter;
pub mod io;
pub mod learner;
pub mod net;
pub mod perception;
pub mod policy;
pub mod scenario;

pub use config::{ExperimentConfig, Profile};
pub use env::{Action, SimState, TerminalKind, WorldConfig};
pub use error::{Error, Result};
pub use fitter::ParamGrid;
pub use net::QNet;
pub use policy::Variant;
pub use scenario::{build_catalog, ScenarioSpec};
