use std::collections::HashMap;
use std::sync::Mutex;

use super::{Evaluation, Evaluator};
use crate::analysis::{count_cost, Calibration, SceneStats};
use crate::arch::{genome_hash, ArchGenome};
use crate::exec::{coverage_quality, ExecConfig};
use crate::frame::Frame;
use crate::pcrep::{Box3D, PointSet};

/// Coverage of ground-truth boxes as quality, the cost model as latency.
pub struct CoverageEvaluator {
    scene: PointSet<f64>,
    frame: Frame,
    boxes: Vec<Box3D>,
    exec: ExecConfig,
    stats: SceneStats,
    calibration: Calibration,
}

impl CoverageEvaluator {
    pub fn new(scene: PointSet<f64>, frame: Frame, boxes: Vec<Box3D>, exec: ExecConfig, calibration: Calibration) -> Self {
        let stats = SceneStats::from_scene(&scene, frame.clone())
            .with_occupancy_decay(calibration.occupancy_decay)
            .with_keep_fraction(exec.keep_fraction);
        Self { scene, frame, boxes, exec, stats, calibration }
    }

    pub fn stats(&self) -> &SceneStats {
        &self.stats
    }
}

impl Evaluator for CoverageEvaluator {
    fn evaluate(&self, g: &ArchGenome) -> Result<Evaluation, String> {
        let quality = coverage_quality(g, &self.scene, &self.frame, &self.boxes, &self.exec).map_err(|e| e.to_string())?;
        let latency_ms = count_cost(g, &self.stats, &self.calibration).map_err(|e| e.to_string())?.latency_ms;
        Ok(Evaluation { quality, latency_ms })
    }
}

/// Caches results by canonical genome hash.
pub struct Memoized<E> {
    inner: E,
    cache: Mutex<HashMap<String, Result<Evaluation, String>>>,
}

impl<E: Evaluator> Memoized<E> {
    pub fn new(inner: E) -> Self {
        Self { inner, cache: Mutex::new(HashMap::new()) }
    }

    pub fn distinct(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

impl<E: Evaluator> Evaluator for Memoized<E> {
    fn evaluate(&self, g: &ArchGenome) -> Result<Evaluation, String> {
        let key = genome_hash(g).0;
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return hit.clone();
        }
        let r = self.inner.evaluate(g);
        self.cache.lock().expect("cache lock").insert(key, r.clone());
        r
    }
}
