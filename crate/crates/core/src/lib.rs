//! Conditional growth charts from longitudinal measurements.
//!
//! The global model expresses the `tau`-th conditional quantile of a
//! subject's `j`-th measurement as a spline in the measurement time, plus
//! autoregressive terms in the `p` previous measurements whose coefficients
//! are linear in the time gaps, plus a linear covariate effect. Fitting is
//! plain linear quantile regression on the assembled design.

pub mod chartmodel;
pub mod diagnosis;
pub mod error;
pub mod linalg;
pub mod longdata;
pub mod modelfile;
pub mod numstat;
pub mod quantreg;
pub mod ranktest;
pub mod repro;
pub mod simlab;
pub mod splines;
pub mod svg;

pub use error::{Error, Result};
