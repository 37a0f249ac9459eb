//! Thermal, energy and image-fidelity models of a stacked image sensor with
//! near-sensor processing, and the runtime policies that keep it within
//! fidelity-derived temperature bounds.
//!
//! ```
//! use nsp_core::{presets, run, PolicyKind, Scenario};
//!
//! let mut s = Scenario::new(presets::workload("resnet50").unwrap(), PolicyKind::SeasonalMigration);
//! s.duration = 5.0;
//! let trace = run(&s).unwrap();
//! assert!(trace.metrics.duty_cycle > 0.0);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod energy;
pub mod error;
pub mod fidelity;
pub mod policy;
pub mod presets;
pub mod sim;
pub mod thermal;
pub mod validate;

pub use energy::{savings, system_power, EnergyTable, ModePowers, Pipeline, PowerBreakdown, PowerProfile};
pub use error::{Error, Result};
pub use fidelity::{CameraSettings, NoiseModel};
pub use policy::{
    analytic_schedule, average_power, derive_boundaries, Boundaries, BoundaryContext, Controller, FidelitySpec,
    GapStrategy, Mode, PolicyKind, Schedule, Site,
};
pub use sim::{run, sweep, AxisValue, Metrics, PolicyConfig, Scenario, ScenarioTrace, SweepAxis};
pub use thermal::{calibrate, steady_state, temperature_jump, ExactStepper, ThermalStack, ThermalState};
