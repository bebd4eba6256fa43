//! Analytic and simulation models of one-way car-sharing fleets.

pub mod cli;
pub mod netmodel;
pub mod pfsolver;
pub mod relocq;
pub mod simkit;
pub mod tracekit;
