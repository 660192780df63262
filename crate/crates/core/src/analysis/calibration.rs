use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Environment variable naming a calibration file to load instead of the defaults.
pub const CALIBRATION_ENV: &str = "LIDARNAS_CALIBRATION";

/// Constants of the linear latency proxy and the sparse occupancy model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Milliseconds per floating-point operation.
    pub flop_ms: f64,
    /// Milliseconds per byte of the largest dense tensor.
    pub byte_ms: f64,
    /// Fraction of active sites kept per sparse downsample.
    pub occupancy_decay: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self { flop_ms: 2.0e-11, byte_ms: 1.0e-9, occupancy_decay: 0.55 }
    }
}

impl Calibration {
    /// Parses `key = value` lines. `#` starts a comment; omitted keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, AnalysisError> {
        let mut cal = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .ok_or_else(|| AnalysisError::Calibration(format!("line {}: expected key = value", n + 1)))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| AnalysisError::Calibration(format!("line {}: {value:?} is not a number", n + 1)))?;
            match key.trim() {
                "flop_ms" => cal.flop_ms = v,
                "byte_ms" => cal.byte_ms = v,
                "occupancy_decay" => cal.occupancy_decay = v,
                other => return Err(AnalysisError::Calibration(format!("line {}: unknown key {other:?}", n + 1))),
            }
        }
        cal.check()?;
        Ok(cal)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AnalysisError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Loads the file named by [`CALIBRATION_ENV`], or returns the defaults when unset.
    pub fn from_env() -> Result<Self, AnalysisError> {
        match std::env::var_os(CALIBRATION_ENV) {
            Some(path) if !path.is_empty() => Self::load(path),
            _ => Ok(Self::default()),
        }
    }

    fn check(&self) -> Result<(), AnalysisError> {
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !nonneg(self.flop_ms) || !nonneg(self.byte_ms) {
            return Err(AnalysisError::Calibration("latency constants must be finite and >= 0".into()));
        }
        if !(self.occupancy_decay > 0.0 && self.occupancy_decay <= 1.0) {
            return Err(AnalysisError::Calibration("occupancy_decay must be in (0, 1]".into()));
        }
        Ok(())
    }

    /// `flop_ms * flops + byte_ms * max_dense_bytes`.
    pub fn latency_ms(&self, flops: u64, max_dense_bytes: u64) -> f64 {
        self.flop_ms * flops as f64 + self.byte_ms * max_dense_bytes as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_key_values_with_comments() {
        let cal = Calibration::parse("# measured\nflop_ms = 1e-10\noccupancy_decay=0.5 # per level\n").unwrap();
        assert_eq!(cal.flop_ms, 1e-10);
        assert_eq!(cal.byte_ms, 1e-9);
        assert_eq!(cal.occupancy_decay, 0.5);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(Calibration::parse("gpu = v100").is_err());
        assert!(Calibration::parse("flop_ms = fast").is_err());
        assert!(Calibration::parse("occupancy_decay = 0").is_err());
    }

    #[test]
    fn latency_is_linear() {
        let cal = Calibration::default();
        assert!((cal.latency_ms(1_000_000_000, 1_000_000) - (0.02 + 0.001)).abs() < 1e-15);
    }
}
