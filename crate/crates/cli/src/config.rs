use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::fail::{Fail, OrFail};

pub const DEFAULT_TIMEOUT_S: f64 = 600.0;

/// Search configuration file. Relative paths resolve against the file's directory.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub seed: Option<u64>,
    pub budget: Option<usize>,
    pub population: Option<usize>,
    pub tournament: Option<usize>,
    pub parallel: Option<usize>,
    /// Preset name or genome document path.
    pub warm_start: Option<String>,
    /// Restrict the search to the frozen single-branch grid subspace.
    #[serde(default)]
    pub subspace: bool,
    pub keep_fraction: Option<f64>,
    #[serde(default)]
    pub objective: ObjectiveSection,
    #[serde(default)]
    pub scene: SceneSection,
    #[serde(default)]
    pub evaluator: EvaluatorSection,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub quality: Option<f64>,
    pub latency: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    /// Scan file; a synthetic scene is generated when absent.
    pub path: Option<PathBuf>,
    pub boxes: Option<PathBuf>,
    pub region_half: Option<f64>,
    pub z_min: Option<f64>,
    pub z_max: Option<f64>,
    #[serde(default)]
    pub synth: SynthSection,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub boxes: Option<usize>,
    pub height: Option<usize>,
    pub width: Option<usize>,
    pub placement_radius: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EvaluatorKind {
    #[default]
    BuiltinCoverage,
    External,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatorSection {
    pub kind: Option<EvaluatorKind>,
    /// Program and arguments of the external evaluator.
    #[serde(default)]
    pub command: Vec<String>,
    pub timeout_s: Option<f64>,
    pub calibration: Option<PathBuf>,
}

impl SearchConfig {
    pub fn load(path: &Path) -> Result<Self, Fail> {
        let text = std::fs::read_to_string(path).input(&format!("config {}", path.display()))?;
        let mut cfg: SearchConfig = toml::from_str(&text).input(&format!("config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p.as_mut() {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        fix(&mut cfg.scene.path);
        fix(&mut cfg.scene.boxes);
        fix(&mut cfg.evaluator.calibration);
        if let Some(w) = cfg.warm_start.as_mut() {
            let p = Path::new(w.as_str());
            if p.is_relative() && base.join(p).is_file() {
                *w = base.join(p).to_string_lossy().into_owned();
            }
        }
        // Command words naming files next to the config resolve there.
        for word in cfg.evaluator.command.iter_mut() {
            let p = Path::new(word.as_str());
            if p.is_relative() && base.join(p).is_file() {
                *word = base.join(p).to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }
}
