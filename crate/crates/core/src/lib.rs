//! Constrained ring-polymer molecular dynamics with trigonometric
//! (normal-mode) integrators.
//!
//! The crate is `no_std` with `alloc`. It provides the system state and
//! initialization, the exact free ring-polymer propagator, bead-coupled and
//! classic constraint solvers, the SPC/E water force field, five time
//! steppers and energy diagnostics.

#![no_std]
// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod constraints;
pub mod diagnostics;
pub mod error;
pub mod forcefield;
pub mod geom;
pub mod integrators;
pub mod normal_modes;
pub mod state;

pub use constraints::{ConstraintSet, MultiplierSet, SolveReport, Tolerances};
pub use diagnostics::{compute_metrics, hamiltonian, Energies, EnergyTrace, StabilityMetrics, TraceMeta, TraceRow};
pub use error::{Error, Result};
pub use forcefield::{ForceFieldSpec, NoPotential, Potential, PotentialPart, SpcePotential, TruncationMode};
pub use integrators::{Integrator, RunFailure, RunResult, Scheme, SchemeConfig, StepOutcome};
pub use normal_modes::{build_basis, build_propagator, NormalModeBasis, PropagatorCache};
pub use state::{build_water_topology, initialize_state, ReducedUnits, RingPolymerState, Topology, WaterModel};
