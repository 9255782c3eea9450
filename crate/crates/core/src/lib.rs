//! Anchored indirect treatment comparisons for survival outcomes when patient-level
//! data are available for one trial only.
//!
//! The library implements three estimators of the A vs. B log hazard ratio through a
//! common comparator C, given individual patient data (IPD) for an AC trial and
//! published aggregate data (ALD) for a BC trial:
//!
//! - **MAIC** ([`maic`]): the AC patients are reweighted by a method-of-moments
//!   trial-selection model so the effect-modifier means match the BC population, and
//!   a weighted treatment-only Cox model yields a marginal effect.
//! - **STC** ([`stc`]): a Cox outcome regression on the AC IPD with the effect
//!   modifiers centered at the BC means; the treatment coefficient is a conditional
//!   effect.
//! - **Bucher** ([`itc`]): the plain difference of within-trial effects.
//!
//! [`datagen`] generates survival trials from a Weibull proportional-hazards
//! mechanism, [`simengine`] runs the factorial Monte Carlo benchmark over those
//! estimators, and [`metrics`] turns replicate tables into performance summaries
//! with Monte Carlo standard errors.

pub mod coxmodel;
pub mod datagen;
pub mod error;
pub mod itc;
pub mod maic;
pub mod matrix;
pub mod metrics;
pub mod rng;
pub mod simengine;
pub mod solve;
pub mod stats;
pub mod stc;

pub use error::{Error, Result};
