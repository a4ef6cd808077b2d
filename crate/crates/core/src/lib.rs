//! Gauss-Newton solvers for weak-constraint 4D-Var in the state, forcing and
//! saddle formulations, with the forced Burgers test problem, an analytic
//! parallel cost model and best-method maps.

pub mod burgers;
pub mod checks;
pub mod costmodel;
pub mod error;
pub mod experiments;
pub mod formulations;
pub mod gaussnewton;
pub mod io;
pub mod krylov;
pub mod linalg;
pub mod operators;
pub mod problem;

pub use error::{Error, Result};
