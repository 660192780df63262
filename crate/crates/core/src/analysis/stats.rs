use std::collections::{BTreeSet, HashMap};
use std::sync::Mutex;

use crate::frame::Frame;
use crate::pcrep::{transform, Cell, GridSpec, Kind, Matrix, PointSet, Representation, TransformTarget, DEFAULT_KEEP_FRACTION};
use crate::Real;

use super::Calibration;

/// Scene quantities the static analyzer needs, measured by running the real transforms.
#[derive(Debug)]
pub struct SceneStats {
    frame: Frame,
    scene: Representation<f64>,
    points: usize,
    channels: usize,
    valid_pixels: usize,
    occupancy_decay: f64,
    keep_fraction: f64,
    occupancy: Mutex<HashMap<String, usize>>,
}

impl Clone for SceneStats {
    fn clone(&self) -> Self {
        Self {
            frame: self.frame.clone(),
            scene: self.scene.clone(),
            points: self.points,
            channels: self.channels,
            valid_pixels: self.valid_pixels,
            occupancy_decay: self.occupancy_decay,
            keep_fraction: self.keep_fraction,
            occupancy: Mutex::new(self.occupancy.lock().expect("poisoned").clone()),
        }
    }
}

impl SceneStats {
    pub fn from_scene<T: Real>(points: &PointSet<T>, frame: Frame) -> Self {
        let coords: Vec<[f64; 3]> =
            points.coords().iter().map(|c| [c[0].as_f64(), c[1].as_f64(), c[2].as_f64()]).collect();
        let n = coords.len();
        let ones = Matrix::from_vec(n, 1, vec![1.0; n]).expect("sized");
        let scene = Representation::Point(PointSet::new(coords, ones).expect("finite scene"));
        let valid_pixels = transform(&scene, Kind::PerspectiveSparse, TransformTarget::Image(&frame.layout))
            .map(|r| r.element_count())
            .unwrap_or(0);
        Self {
            frame,
            scene,
            points: n,
            channels: points.channels(),
            valid_pixels,
            occupancy_decay: Calibration::default().occupancy_decay,
            keep_fraction: DEFAULT_KEEP_FRACTION,
            occupancy: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_occupancy_decay(mut self, decay: f64) -> Self {
        self.occupancy_decay = decay;
        self
    }

    pub fn with_keep_fraction(mut self, keep_fraction: f64) -> Self {
        self.keep_fraction = keep_fraction;
        self
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Feature channels of the raw scene.
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Pixels of the frame layout hit by at least one scene point.
    pub fn valid_pixels(&self) -> usize {
        self.valid_pixels
    }

    pub fn occupancy_decay(&self) -> f64 {
        self.occupancy_decay
    }

    pub fn keep_fraction(&self) -> f64 {
        self.keep_fraction
    }

    /// Cells of `spec` holding at least one scene point, from an actual scatter.
    pub fn occupied_cells(&self, spec: &GridSpec) -> usize {
        let key = format!("{spec:?}");
        if let Some(&n) = self.occupancy.lock().expect("poisoned").get(&key) {
            return n;
        }
        let dst = if spec.is_voxel() { Kind::Voxel } else { Kind::PillarSparse };
        let n = transform(&self.scene, dst, TransformTarget::Grid(spec)).map(|r| r.element_count()).unwrap_or(0);
        self.occupancy.lock().expect("poisoned").insert(key, n);
        n
    }
}

/// Mean per-downsample ratio of occupied cells over `levels` coarsenings of `spec`.
pub fn measure_occupancy_decay(stats: &SceneStats, spec: &GridSpec, z_stride: u32, levels: u32) -> Option<f64> {
    let Representation::Point(scene) = &stats.scene else { return None };
    let mut cells: BTreeSet<Cell> = scene
        .coords()
        .iter()
        .filter_map(|&p| spec.cell_of(p))
        .map(|[x, y, z]| Cell::new(0, x, y, z))
        .collect();
    let mut ratios = Vec::new();
    for _ in 0..levels {
        if cells.is_empty() {
            break;
        }
        let coarse: BTreeSet<Cell> = cells.iter().map(|c| c.parent(if spec.is_voxel() { z_stride } else { 1 })).collect();
        ratios.push(coarse.len() as f64 / cells.len() as f64);
        cells = coarse;
    }
    (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64)
}
