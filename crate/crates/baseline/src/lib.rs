//! Decoders that work directly on a detector error model: belief propagation
//! with order-0 ordered-statistics post-processing, and an exhaustive
//! maximum-likelihood oracle for small instances.
//!
//! ```
//! use tanner_baseline::BpOsd;
//! use tanner_core::dem::Mechanism;
//! use tanner_core::DetectorErrorModel;
//!
//! // a three-bit repetition line: D0 = e0 ^ e1, D1 = e1 ^ e2, L0 = e0
//! let mech = |d: Vec<usize>, o: Vec<usize>| Mechanism { probability: 0.1, detectors: d, observables: o };
//! let dem = DetectorErrorModel {
//!     mechanisms: vec![mech(vec![0], vec![0]), mech(vec![0, 1], vec![]), mech(vec![1], vec![])],
//!     num_detectors: 2,
//!     num_observables: 1,
//! };
//! let decoder = BpOsd::with_defaults(&dem).unwrap();
//! let out = decoder.decode(&[1, 0]).unwrap();
//! assert_eq!(out.estimate, vec![1, 0, 0]);
//! assert_eq!(out.prediction, vec![1]);
//! ```

pub mod bp;
mod decoder;
mod error;
mod graph;
pub mod ml;
pub mod osd;

pub use bp::{BpConfig, BpDecoder, BpOutput, BpVariant, OsdMode, Schedule};
pub use decoder::{BatchDecode, BpOsd, Decoded};
pub use error::DecodeError;
pub use graph::{predict_observables, DecodingGraph};
pub use ml::MlOracle;
pub use osd::osd0;
