//! Numerical laboratory for de Broglie–Bohm pilot-wave dynamics.
//!
//! The crate is organised bottom-up:
//!
//! * [`qstate`]: grids, wavefields, densities, currents and eigenmode synthesis.
//! * [`propagate`]: exact eigenmode rotation, split-operator stepping and the
//!   impulsive pointer coupling, all behind [`propagate::EvolutionHandle`].
//! * [`guidance`]: velocity field, adaptive trajectory integration, quantum
//!   potential and the second-order consistency residual.
//! * [`ensemble`]: sampling, ensemble evolution, coarse-grained H-function,
//!   outcome statistics and the pure-state Wigner transform.
//! * [`measurement`]: pointer-branching experiments, subquantum measurements
//!   and the occupancy probe.
//! * [`runner`]: scenario files, CSV/snapshot persistence and the canned
//!   experiment catalog.
//!
//! Units are ħ = 1 throughout; masses are explicit per configuration axis.

// `!(a < b)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ensemble;
pub mod error;
pub mod guidance;
pub mod measurement;
pub mod propagate;
pub mod qstate;
pub mod runner;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
pub use qstate::{Axis, Boundary, Config, Grid, ModeExpansion, PotentialSpec, WaveField};
