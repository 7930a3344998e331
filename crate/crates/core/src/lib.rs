//! Simulator and evaluation toolkit for ring-topology reservoir computers
//! with output feedback.
//!
//! The crate covers the full loop: teacher generation (sine, random
//! pattern, Mackey-Glass, Lorenz), the sine-nonlinearity ring reservoir at
//! three hardware-fidelity tiers, offline ridge training of the linear
//! readout, warmup and autonomous generation, and the metrics used to
//! judge a noisy emulator (prediction horizon, spectra, Lyapunov
//! estimates, bitization randomness tests).
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below pick the precision used by the command-line tools.

pub mod error;
pub mod evaluation;
pub mod fidelity;
pub mod reservoir;
pub mod scalar;
pub mod series;
pub mod tasks;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type TimeSeries64 = series::TimeSeries<f64>;
pub type FidelityConfig64 = fidelity::FidelityConfig<f64>;
pub type ReservoirConfig64 = reservoir::ReservoirConfig<f64>;
pub type ReservoirState64 = reservoir::ReservoirState<f64>;
pub type ReadoutWeights64 = training::ReadoutWeights<f64>;
pub type TaskSpec64 = training::TaskSpec<f64>;
pub type ExperimentSpec64 = training::ExperimentSpec<f64>;
pub type RunReport64 = training::RunReport<f64>;
pub type Spectrum64 = evaluation::Spectrum<f64>;
