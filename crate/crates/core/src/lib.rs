pub mod error;
pub mod noise;
pub mod nonlinearity;
pub mod spectral;
pub mod integrators;
pub mod moments;
pub mod harness;
