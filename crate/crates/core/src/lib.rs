//! Finite-difference simulator and verification toolkit for incompressible
//! magneto-viscoelastic flow: the Navier-Stokes equations coupled to a
//! regularized transport equation for the deformation gradient and a
//! Ginzburg-Landau gradient flow for the magnetization.
//!
//! Module map:
//! - [`fields`]: MAC staggered grid, field containers, presets, boundary fills
//! - [`ops`]: discrete differential operators and the coupling stresses
//! - [`norms`]: space/time norms and inequality auditors
//! - [`linsolve`]: conjugate-gradient kernels (implicit diffusion, projection)
//! - [`solver`]: the coupled IMEX time integrator with exact discrete projection
//! - [`galerkin`]: reduced divergence-free spectral scheme for the velocity
//! - [`diagnostics`]: energy-inequality ledger, twin-run experiments, monitors
//! - [`mms`]: manufactured solution with source terms for convergence studies

pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod galerkin;
pub mod linsolve;
pub mod mms;
pub mod norms;
pub mod ops;
pub mod solver;

pub use error::{Error, Result};
pub use fields::{
    AdvectionScheme, CouplingFlags, DeformationBc, Field, FieldState, GhostRule, GridSpec,
    IcPreset, IcSpec, Magnetization, SimParams, TensorField, Velocity,
};
