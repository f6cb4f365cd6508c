//! Stabilizer codes, noisy memory circuits, detector error models and syndrome
//! sampling.

pub mod batch;
pub mod circuit;
pub mod code;
pub mod dem;
pub mod error;
pub mod gf2;
pub mod pauli;
pub mod sample;
pub mod tanner;

pub use batch::{PseudoData, SyndromeBatch};
pub use circuit::{build_memory_circuit, NoiseProfile, NoisyCircuit};
pub use code::{CodeFamily, StabilizerCode};
pub use dem::{extract_dem, DetectorErrorModel};
pub use error::{CircuitError, CodeError};
pub use gf2::{BitMatrix, BitVec};
pub use pauli::{Pauli, PauliString};
pub use sample::{sample_dem, sample_incremental, sample_pauli_frame, SampleOptions};
pub use tanner::{build_extended_tanner, Basis, ExtendedTannerGraph};
