//! Simulation laboratory for a sensorless boost-type PFC rectifier.
//!
//! The plant is a single-phase AC-DC boost converter in averaged form. A
//! current observer with immersion-and-invariance structure reconstructs
//! the inductor current and the two unknown circuit parameters (source
//! amplitude and load conductance) from the bus voltage and the duty
//! command alone; a certainty-equivalence resonant controller closes the
//! loop on those estimates. The crate provides the component algebra, a
//! fixed-step simulation engine, waveform metrics, and the acceptance
//! suite that gates a release.
//!
//! Layout:
//!
//! * [`plant`]: averaged and switched converter models.
//! * [`steady_state`]: the periodic orbit, its ripple, and the control
//!   envelope implied by an operating point.
//! * [`estimator`]: the observer's filters, shaping term, and error-energy
//!   bookkeeping.
//! * [`controller`]: reference current, resonant filter, duty-rate laws,
//!   and the estimate-only error reconstruction.
//! * [`config`] / [`engine`] / [`trace`] / [`metrics`]: scenario surface,
//!   integrator, trace files, and tail metrics.
//! * [`acceptance`]: the release gate, one criterion per check.

pub mod acceptance;
pub mod config;
pub mod controller;
pub mod engine;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod metrics;
pub mod plant;
pub mod steady_state;
pub mod trace;

pub use config::{Config, Event, Mode, ScenarioConfig};
pub use controller::{ControllerGains, ControllerState, ErrorEnvelope};
pub use engine::{rk4_step, run_scenario, SimResult};
pub use error::Error;
pub use estimator::{
    Estimates, EstimatorGains, EstimatorState, PEConfig, Regressor,
};
pub use linalg::{Mat2, Mat3, Vec2, Vec3};
pub use metrics::{compute_metrics, Metrics};
pub use plant::{PlantParams, PlantState};
pub use steady_state::{OperatingPoint, SteadyStateSummary};
pub use trace::{read_csv, write_csv, TraceRow, TRACE_HEADER};
