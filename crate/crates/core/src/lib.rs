//! Simulation of a polarization-basis Franson interferometer: coherent
//! field propagation, closed-form intensity and correlation models, photon
//! counting statistics, time-series experiments and fringe analysis.

pub mod analysis;
pub mod analytic;
pub mod circuit;
pub mod compare;
pub mod numfmt;
pub mod optics;
pub mod rng;
pub mod runner;
pub mod stats;
