//! Simulation and analysis of multi-photon, multi-quantum magnetic resonance
//! in spin-3/2 silicon vacancies (V2, V3) of 6H-SiC.
//!
//! The driven Lindblad master equation is integrated in the laboratory frame
//! with no rotating-wave approximation, so 2- and 3-photon resonances and
//! Bloch-Siegert shifts appear on their own. On top of the integrator the
//! crate provides the experimental protocols (Rabi, phase-cycled FID, CW
//! ODMR spectra and field maps), eigenvalue transition maps, and the
//! spectral estimation and least-squares fits used to analyse them.
//!
//! Runnable walkthroughs live in `examples/`; the `odmr-lab` binary drives
//! the same protocols from a configuration file.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod defaults;
pub mod error;
pub mod master_eq;
pub mod output;
pub mod sequences;
pub mod spin;

pub use error::{Error, Result};
pub use master_eq::{
    collapse_set, evolve, lindblad_rhs, propagator_oracle, rk4_step, CollapseSet, Evolution,
    RelaxationParams, Trajectory,
};
pub use spin::{
    cw_initial_state, drive_hamiltonian, eigensystem, spin_operators, static_hamiltonian,
    DensityMatrix, Mat4, RFDrive, SpinOperators, VacancyKind, VacancySystem,
};
