//! Boundary-integral simulation of inextensible vesicle suspensions in 2D
//! Stokes flow.
//!
//! The crate couples a Fourier-spectral discretization of closed membrane
//! curves with single- and double-layer Stokes potentials, a semi-implicit
//! time integrator refined by spectral deferred correction sweeps, and an
//! adaptive step-size controller driven by the numerical drift of each
//! vesicle's area and length.
//!
//! The crate is `no_std` (with `alloc`); all file and clock access lives in
//! the companion CLI crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod controller;
pub mod curve;
pub mod error;
pub mod imex;
pub mod kernels;
pub mod linalg;
pub mod math;
pub mod membrane;
pub mod sdc;
pub mod sim;
pub mod spectral;

pub use controller::{ControllerConfig, ControllerState};
pub use curve::{ClosedCurve, CurveGeometry};
pub use error::{Error, Result};
pub use imex::{GmresConfig, SolverContext};
pub use kernels::LayerPotentialConfig;
pub use membrane::VesicleState;
pub use sdc::{LobattoGrid, SdcConfig};
pub use sim::{FarFieldFlow, RunDiagnostics, Suspension, WallClock};
