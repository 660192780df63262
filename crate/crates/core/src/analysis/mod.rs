//! Static shape and sparsity inference, parameter/FLOP counting, proxy latency
//! and the search objective.

mod calibration;
mod cost;
mod objective;
mod stats;

pub use calibration::{Calibration, CALIBRATION_ENV};
pub use cost::{count_cost, infer_shapes, write_csv, BranchCost, CostReport, LayerCost, CSV_HEADER};
pub use objective::{objective, ObjectiveWeights};
pub use stats::{measure_occupancy_decay, SceneStats};

use crate::arch::ValidationReport;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("invalid genome: {}", .0.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "))]
    InvalidGenome(ValidationReport),
    #[error("quality {0} is outside [0, 1]")]
    OutOfRangeQuality(f64),
    #[error("latency {0} ms is negative or not finite")]
    OutOfRangeLatency(f64),
    #[error("calibration: {0}")]
    Calibration(String),
    #[error(transparent)]
    Pcrep(#[from] crate::pcrep::PcrepError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
