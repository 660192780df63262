//! Architecture search over view/format trellises for 3D point-cloud backbones.
//!
//! - [`pcrep`]: point, pillar, voxel and range-image representations and the transforms between them
//! - [`arch`]: genomes as connected subsets of the S-stage trellis, validation, presets, documents
//! - [`analysis`]: static shape inference, parameter/FLOP counting, proxy latency and the objective
//! - [`exec`]: deterministic reference forward pass and the coverage quality surrogate
//! - [`head`]: anchor-free heatmap targets, penalty-reduced focal loss, peak extraction
//! - [`search`]: mutation, random generation, regularized evolution and run analysis
//! - [`synth`]: synthetic egocentric scans with ground-truth boxes

// Negated float comparisons are used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod arch;
pub mod exec;
pub mod frame;
pub mod head;
pub mod pcrep;
pub mod scalar;
pub mod search;
pub mod synth;

pub use scalar::Real;

pub type PointSetF32 = pcrep::PointSet<f32>;
pub type PointSetF64 = pcrep::PointSet<f64>;
pub type RepresentationF32 = pcrep::Representation<f32>;
pub type RepresentationF64 = pcrep::Representation<f64>;
pub type ScanF32 = pcrep::io::Scan<f32>;
pub type ScanF64 = pcrep::io::Scan<f64>;
