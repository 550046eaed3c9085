//! Pulse-level modelling of trimon multimode superconducting circuits.
//!
//! The crate is organised bottom-up:
//!
//! - [`circuit`]: lumped four-node circuit to effective Hamiltonian coefficients.
//! - [`hilbert`]: truncated Fock space, ladder operators and the static Kerr Hamiltonian.
//! - [`pulses`]: shaped multi-tone drives, schedules and virtual phase frames.
//! - [`dynamics`]: unitary and Lindblad propagation of driven schedules.
//! - [`gates`]: gate compilation, Raman processes, calibration, benchmarking,
//!   Hamiltonian-term synthesis and qudit decoupling sequences.
//! - [`measurement`]: assignment-level readout model.
//! - [`tomography`]: state and process tomography with SPAM correction.
//!
//! Every energy and frequency is stored as an ordinary frequency in hertz.
//! Propagators are evaluated as `exp(-i 2π ∫ H dt)`.

pub mod circuit;
pub mod dynamics;
pub mod error;
pub mod gates;
pub mod hilbert;
pub mod labels;
pub mod linalg;
pub mod measurement;
pub mod pulses;
pub mod serde_complex;
pub mod tomography;

pub use circuit::{CircuitSpec, MaxwellMatrices, ModeParams, NormalModes};
pub use dynamics::{EvolutionConfig, Frame, NoiseChannels};
pub use error::{Error, Result};
pub use hilbert::{Operator, QuantumState, SpaceSpec};
pub use labels::{BasisLabel, Mode, Transition};
pub use gates::{CalibrationRecord, GateKind, GateSimulator, GateSpec};
pub use pulses::{Envelope, FrameLedger, Schedule, Shape, Tone};

pub use num_complex::Complex64;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
