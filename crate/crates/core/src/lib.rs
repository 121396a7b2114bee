//! Models for a cavity-enhanced, type-II SPDC single-photon source tuned to
//! a quantum-dot trion: crystal dispersion and phase matching, cavity mode
//! structure, first-order coherence, temporal wavepackets, heralded photon
//! statistics, quantum-dot scattering scans and mode matching.

pub mod cavity;
pub mod coherence;
pub mod dispersion;
pub mod error;
pub mod lsq;
pub mod modematch;
pub mod optimize;
pub mod phasematch;
pub mod photostat;
pub mod qdscatter;
pub mod spectrum;
pub mod temporal;

pub use error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const C_LIGHT: f64 = 299_792_458.0;
