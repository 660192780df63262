use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Multipliers of the scalar search objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    /// Applied to quality in `[0, 1]`, so quality 0.752 contributes 75.2.
    pub quality: f64,
    /// Applied to latency in milliseconds.
    pub latency: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self { quality: 100.0, latency: 0.5 }
    }
}

/// `w.quality * quality - w.latency * latency_ms`.
pub fn objective(quality: f64, latency_ms: f64, w: ObjectiveWeights) -> Result<f64, AnalysisError> {
    if !(0.0..=1.0).contains(&quality) {
        return Err(AnalysisError::OutOfRangeQuality(quality));
    }
    if !(latency_ms >= 0.0 && latency_ms.is_finite()) {
        return Err(AnalysisError::OutOfRangeLatency(latency_ms));
    }
    Ok(w.quality * quality - w.latency * latency_ms)
}
