//! Bending relaxation of prestressed bilayer plates.
//!
//! A bilayer plate bends without stretching: its midsurface deformation
//! `y : ω → ℝ³` is an isometry and the elastic energy penalizes the
//! deviation of the surface curvature from a prescribed spontaneous
//! curvature `Z`. This crate discretizes that fourth-order constrained
//! problem with Kirchhoff quadrilaterals (value + gradient degrees of
//! freedom at the vertices of a rectangular partition) and relaxes it by
//! an implicit gradient flow in a discrete H² metric, where the isometry
//! constraint is linearized at the vertices of the mesh.
//!
//! The crate is organized along the pipeline:
//!
//! * [`mesh`] — conforming rectangular partitions of plate domains,
//! * [`kirchhoff`] — the element spaces, interpolation operators and the
//!   discrete gradient,
//! * [`energy`] — the discrete bending energy, its derivative, and the
//!   diagnostic quantities (curvature-based energy, isometry defect),
//! * [`linsys`] — sparse symmetric storage and the direct solver for the
//!   constrained saddle-point systems,
//! * [`flow`] — the outer gradient flow, the inner fixed-point iteration
//!   and the runtime invariants.
//!
//! File formats, presets and the experiment driver live in the companion
//! `bilayer-cli` crate.

pub mod energy;
pub mod error;
pub mod flow;
pub mod kirchhoff;
pub mod linsys;
pub mod mesh;

pub use error::Error;

/// Convenience result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
