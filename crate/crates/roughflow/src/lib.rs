//! Numerical laboratory for transport equations driven by irregular signals.
//!
//! The crate is organised around a chain of increasingly structured objects:
//!
//! * [`grid`]: uniform time grids, sampled paths, two-parameter functions and
//!   the discrete Hölder machinery everything else reports through.
//! * [`rough`]: second-order enhancements (path plus iterated integrals),
//!   their consistency defects and homogeneous norms.
//! * [`controlled`]: paths controlled by a reference rough path and the
//!   compensated-sum integral.
//! * [`drivers`]: concrete driving signals, namely exact fractional Brownian
//!   samples and occupation-measure irregularity diagnostics.
//! * [`fields`]: trigonometric/linear vector fields, compactly supported test
//!   functions, spectral norms and mollification.
//! * [`flows`]: characteristics x + integral of b along x + driver, their
//!   inverses, variational derivatives and Jacobians.
//! * [`transport`]: method-of-characteristics solutions of the associated
//!   transport/continuity equations, weak-formulation residuals and duality
//!   estimates.
//!
//! All estimators operate on grid data and report grid suprema; they are
//! lower bounds for the continuum quantities they track. Every random choice
//! is seeded and every parallel reduction has a fixed association order, so
//! identical inputs give identical outputs independent of thread count.

pub mod config;
pub mod controlled;
pub mod drivers;
pub mod error;
pub mod experiment;
pub mod fields;
pub mod flows;
pub mod grid;
pub mod linalg;
pub mod rate;
pub mod rough;
pub mod transport;

pub use error::{Error, Result};
