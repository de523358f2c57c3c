//! Heralded single-photon storage in an EIT quantum memory: cavity SPDC
//! source, EIT medium response, Maxwell-Bloch storage simulation, and
//! coincidence statistics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coincidence;
pub mod eit_medium;
pub mod error;
pub mod fit;
pub mod grid;
pub mod io;
pub mod memory_sim;
pub mod presets;
pub mod spdc_source;
pub mod spectrum;

pub use error::{Error, Result};
pub use grid::UniformGrid;
pub use spectrum::{ComplexSpectrum, FieldWaveform, G2Waveform};
