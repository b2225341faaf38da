//! Robustness verification for small neural networks by way of quadratic
//! encodings and semidefinite relaxation.
//!
//! The pipeline: [`model`] loads and evaluates networks and reduces
//! classification/metric questions to scalar margins; [`qp`] encodes a
//! verification task as an exact quadratic program; [`relax`] lifts the
//! program to a semidefinite one (primal or dual form); [`sdpsolve`] solves it
//! with an embedded operator-splitting method; [`spectral`] provides the
//! eigenvalue route to the diagonal-constrained SDP; [`oracle`] supplies
//! ground truth (pattern enumeration) and attack lower bounds (PGD); and
//! [`driver`] plus [`report`] turn the pieces into certification verdicts and
//! aggregate tables.

pub mod driver;
pub mod error;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod qp;
pub mod relax;
pub mod report;
pub mod sdpsolve;
pub mod spectral;

pub use error::{Error, Result};
