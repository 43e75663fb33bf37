//! A two-branch small-sample image classifier built on a from-scratch
//! tensor and autodiff core.
//!
//! A shared convolutional embedding feeds a relation module, which scores
//! each sample against one prototype per class, and a fully connected softmax
//! branch. The two are trained jointly, and their outputs are summed to make
//! a prediction.
//!
//! The usual entry point is [`config::RunConfig`]: start from a preset, build
//! an [`experiment::Experiment`] and run it, or use the protocols in
//! [`eval`].
//!
//! ```no_run
//! use remarnet::config::RunConfig;
//! use remarnet::experiment::RunSeeds;
//! use remarnet::train::TrainMode;
//!
//! let cfg = RunConfig::preset("synthetic")?;
//! let run = cfg.experiment()?.run(&RunSeeds::derive(0), TrainMode::Joint, |_| {})?;
//! println!("{}", run.metrics.last().unwrap().csv_row());
//! # Ok::<(), remarnet::Error>(())
//! ```

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Graph, Group, NodeId, ParamId, ParamStore, Parameter};
pub use tensor::{Element, Tensor};
