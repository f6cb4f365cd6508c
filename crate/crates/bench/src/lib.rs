//! Experiment harness for memory-experiment decoders.
//!
//! Estimates logical error rates with a failure-count stopping rule,
//! converts between accumulated and per-cycle rates, fits sub-threshold
//! scaling laws, draws break-even maps, times decoders against the number
//! of cycles and writes CSV tables and SVG figures.
//!
//! ```
//! use tanner_bench::metrics::{accumulated_ler, per_cycle_from_fidelity};
//!
//! let p_l = accumulated_ler(0.01, 7.0).unwrap();
//! let back = per_cycle_from_fidelity(1.0 - 2.0 * p_l, 7.0).unwrap();
//! assert!((back - 0.01).abs() < 1e-12);
//! ```

pub mod breakeven;
pub mod codes;
pub mod decoders;
mod error;
pub mod fit;
pub mod ler;
pub mod metrics;
pub mod report;
pub mod timing;

pub use breakeven::{break_even_map, BreakEvenMap, Cell};
pub use codes::{code_key, resolve_code};
pub use decoders::{BpOsdDecoder, NeuralDecoder};
pub use error::{BenchError, Result};
pub use fit::{fit_subthreshold, FitOptions, FitPoint, ThresholdFit};
pub use ler::{estimate_ler, run_stopping_rule, LerEstimate, MemoryExperiment, ShotDecoder, StoppingRule};
pub use metrics::{accumulated_ler, fidelity_regression, per_cycle_from_fidelity, FidelityFit, FidelityPoint};
pub use report::{fit_points, heatmap_svg, read_csv, timing_svg, write_csv, ResultRow, SizeConvention};
pub use timing::{time_benchmark, TimingReport, TimingRow};
