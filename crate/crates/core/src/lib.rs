//! Simulation and numerical certification of switched nonlinear
//! negative-imaginary (NI) systems.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: mode indices, input signals, switching laws, switched system
//!   models, storage families and trajectories.
//! - [`systems`]: the hybrid integrator-gain system (HIGS) and the nonlinear
//!   mass-spring-damper plant.
//! - [`interconnect`]: positive-feedback and cascade combinators plus the
//!   interconnection storage `W`.
//! - [`sim`]: fixed-step RK4 integration with event localization.
//! - [`certify`]: dissipation, monotonicity, positive-definiteness and
//!   stability checks over trajectories and sampled regions.
//! - [`scenario`] and [`export`]: scenario files, trajectory tables, plots
//!   and report files used by the `switched-ni` binary.

pub mod certify;
pub mod export;
pub mod interconnect;
pub mod model;
pub mod scenario;
pub mod sim;
pub mod systems;

pub use model::{
    eval_output_derivative, ConstantInput, FieldFn, FnInput, InputSample, InputSignal, ModeIndex,
    ModelError, PiecewiseConstantInput, Sample, StackedInput, StorageFamily, SwitchEvent,
    SwitchedSystemModel, SwitchingLaw, Trajectory,
};
pub use sim::{simulate, SimConfig, SimError};
