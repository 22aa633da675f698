//! Simulation, training and analysis of IQP quantum circuit Born machines
//! with adaptive spectral MMD critics.

pub mod adam;
pub mod circuit;
pub mod datasets;
pub mod dist;
pub mod error;
pub mod mmd;
pub mod rng;
pub mod sim;
pub mod spectral;
pub mod train;
pub mod universality;

pub use circuit::{GeneratorGate, IqpCircuit};
pub use dist::{tvd, BitString, Dataset, ProbVector};
pub use error::{Error, Result};
pub use sim::Shots;
pub use spectral::{Fvsbn, GaussianMeasure, PointMassMeasure, SpectralMeasure};
