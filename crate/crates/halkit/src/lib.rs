//! Nonparametric regression, hazard and density estimation over the unit
//! cube using indicator bases with an L1 (sectional variation) budget.
//!
//! The pieces: [`basis`] builds data-adaptive indicator bases and carries
//! fitted models, [`solver`] minimizes smooth convex objectives over an L1
//! ball with a duality-gap certificate, [`losses`] holds the datasets and the
//! exact empirical risks, and the [`survival`], [`density`], [`regression`]
//! and [`sieve`] modules assemble those into estimators. [`select`] does
//! K-fold selection of the budget, [`sim`] and [`study`] generate synthetic
//! data and run the shipped experiments, and [`io`] reads and writes the
//! CSV dataset formats.

pub mod basis;
pub mod density;
pub mod error;
pub mod io;
pub mod losses;
pub mod qmc;
pub mod regression;
pub mod select;
pub mod sieve;
pub mod sim;
pub mod solver;
pub mod study;
pub mod survival;

pub use error::{HalError, Result};
