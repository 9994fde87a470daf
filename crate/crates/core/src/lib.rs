//! Numerical laboratory for edge transport in two-dimensional Hall insulators.
//!
//! Modules, bottom up: [`lattice`] builds tight-binding models, [`spectral`]
//! finds edge states, [`topology`] computes Chern numbers, [`response`]
//! evaluates currents, correlators, Ward identities and transport
//! coefficients, [`ed_oracle`] is a brute-force many-body check,
//! [`reference_model`] holds chiral Luttinger closed forms, and [`rg_audit`]
//! audits multiscale power counting and flows.

pub mod error;
pub mod linalg;
pub mod lattice;
pub mod spectral;
pub mod topology;
pub mod response;
pub mod reference_model;
pub mod ed_oracle;
pub mod rg_audit;

pub use error::{ErrorClass, LabError, Result};
