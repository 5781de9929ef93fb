//! Equivariant Morse-Bott analysis on a catalogue of closed manifolds with
//! compact symmetry groups.
//!
//! The pipeline runs in stages:
//!
//! 1. [`geometry`] builds a catalogued scenario: a coordinate model of a
//!    closed manifold together with an invariant function, an invariant
//!    metric and a group action, all with closed-form derivatives.
//! 2. [`critstruct`] locates the critical orbits, computes normal Hessian
//!    data, Morse indices, isotropy groups, stability flags and invariant
//!    frames for the negative normal bundles.
//! 3. [`stabilize`] applies the explicit local perturbation that replaces an
//!    unstable critical orbit by a stable one plus new orbits on a small
//!    sphere, and verifies the predicted index shifts.
//! 4. [`flow`] integrates negative gradient flow, extracts moduli-space
//!    covering data with orientation signs, and diagnoses transversality.
//! 5. [`cochain`] assembles the ordinary and Cartan-model cochain complexes
//!    over exact rationals and computes cohomology ranks.
//! 6. [`cli`] orchestrates a full run from a config file and emits reports.

pub mod cli;
pub mod cochain;
pub mod critstruct;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod linalg;
pub mod stabilize;

pub use error::{Error, Result};
