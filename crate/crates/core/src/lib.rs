//! Inverse design of distributed Raman amplifiers.
//!
//! A multi-wavelength Raman solver generates (pump configuration, signal
//! power profile) pairs; a small convolutional network learns the inverse
//! map from a 2D frequency/distance profile back to pump powers and
//! wavelengths, and designs are verified by re-solving the forward model.

pub mod dataset;
pub mod domain;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod nn;
pub mod solver;

pub use domain::{
    dbm_to_mw, mw_to_dbm, wavelength_to_freq, Direction, FiberParams, PowerProfile, Pump,
    PumpConfig, PumpRange, RamanGainTable, Scheme, WdmGrid,
};
pub use error::{Error, Result};
pub use solver::{on_off_gain_analytic, solve, SolveResult, SolverOptions};
pub use dataset::{generate, read_dataset, split_with_extrema, write_dataset, Dataset, ForwardModel, NormStats, Sample};
pub use eval::{error_max, evaluate, EvalRecord, EvalSummary, Evaluation};
pub use model::{predict, train, TrainConfig, TrainReport};
pub use nn::{load_checkpoint, save_checkpoint, Checkpoint};
