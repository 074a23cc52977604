//! Globally optimal transmit covariances, decoding orders and time-sharing
//! for the MIMO multiple-access channel with many tones.
//!
//! The solvers decompose across tones through Lagrangian duality: every
//! outer iteration solves one small concave problem per tone and updates the
//! dual variables with the ellipsoid method.

pub mod admission;
pub mod cli;
pub mod ellipsoid;
pub mod error;
pub mod exec;
pub mod hull;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod ratecalc;
pub mod solvers;
pub mod study;
pub mod tonesolver;

pub use error::{Error, Result};
