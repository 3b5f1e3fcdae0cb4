//! Flow-matching refinement of 3D molecular conformers.
//!
//! A refiner is a flow-matching velocity field whose base distribution is
//! the data plus Gaussian noise, `x₀ = x₁ + σ·ε`. Sampling starts from an
//! upstream conformer instead of pure noise and integrates the learned ODE
//! with forward Euler to `t = 1`.
//!
//! Modules, bottom-up:
//! - [`geom3d`]: point sets, Kabsch superposition, RMSD.
//! - [`interpolant`]: schedules, base noise, target velocities, the χ² RMSD
//!   model and its Wilson–Hilferty quantile.
//! - [`model`]: the equivariant velocity network, gradients, Adam, checkpoints.
//! - [`pipeline`]: training loop, Euler sampler, noise-to-data generator.
//! - [`metrics`]: COV/AMR recall and precision, improvement/downgrade rates.
//! - [`diagnostics`]: neighbor degrees, pair perturbations, speeds, RMSD traces.
//! - [`data`]: synthetic chain molecules, XYZ/graph/manifest files.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod geom3d;
pub mod interpolant;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod seeding;
pub mod tolerance;

pub use error::{Error, Result};
pub use geom3d::{kabsch_align, rmsd, KabschResult, PointSet, RigidTransform};
pub use model::{MolecularGraph, VelocityModel};
