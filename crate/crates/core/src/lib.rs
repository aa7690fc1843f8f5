//! Segmented-amplitude pulse design for entangling gates in trapped-ion chains.
//!
//! A pair of ions in an `N`-ion chain is driven by a bichromatic, piecewise-constant
//! force that couples to every transverse mode at once. The pulse shape is chosen so
//! that each mode's phase-space trajectory closes at the end of the gate while the
//! pair accumulates an entangling phase of `π/4`.
//!
//! The crate is organised bottom-up:
//!
//! - [`chain`]: equilibrium positions, normal modes and Lamb-Dicke couplings.
//! - [`drive`]: closed-form trajectory and entangling-phase integrals for segmented pulses,
//!   with [`quadrature`] as an independent numerical cross-check.
//! - [`design`]: exact (null-space), weighted least-squares and constant-pulse solvers,
//!   plus detuning robustness scans.
//! - [`fidelity`]: analytic Bell fidelity and an exact truncated-Fock simulation.
//! - [`circuit`]: spin-register circuits built from XX gates and single-qubit rotations.
//! - [`config`] and [`scenario`]: the configuration document, presets and file output
//!   used by the `ionshape` binary.

pub mod chain;
pub mod circuit;
pub mod config;
pub mod constants;
pub mod design;
pub mod drive;
pub mod error;
pub mod fidelity;
pub mod fock;
pub mod quadrature;
pub mod scenario;
pub mod spin;

pub use chain::{mode_structure, scaling_advisory, solve_equilibrium, Branch, ModeStructure, TrapConfig};

pub use design::{DesignSpec, GateSolution};
pub use drive::{CouplingResult, PulseShape, TrajectorySet};
pub use error::{Error, Result};

pub use num_complex::Complex64;
