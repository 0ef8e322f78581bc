//! Cross-sectional HIV incidence estimation from recency-test data.
//!
//! The crate implements the Kassanjee-style incidence estimator together
//! with inverse-probability-weighted extensions that transport the estimate
//! to an external or internal target population, subtype-stratified
//! variants, and modifications for partially missing recency tests.
//! Supporting machinery: a small deterministic numerics kernel (incomplete
//! gamma, adaptive quadrature, IRLS logistic regression, seeded RNG
//! streams), recency-assay models, a Monte Carlo simulation engine, and
//! parametric/non-parametric bootstrap confidence intervals.

pub mod assay;
pub mod bootstrap;
pub mod config;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod gamma;
pub mod io;
pub mod logistic;
pub mod quadrature;
pub mod records;
pub mod rng;
pub mod simulate;
pub mod weights;

pub use error::{Error, Result};
