//! Anchor-free detection head mathematics: center heatmap targets, the
//! penalty-reduced focal loss and window-max peak extraction.
//!
//! Elements are points, pillars, voxels or valid range-image pixels, in the
//! order [`element_coords`] reports them.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::pcrep::{Box3D, Cell, Representation};
use crate::scalar::to_f64_3;
use crate::Real;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum HeadError {
    #[error("representation has no elements")]
    NoElements,
    #[error("prediction has {pred} entries but target has {target}")]
    LengthMismatch { pred: usize, target: usize },
    #[error("point sets have no window neighbourhood")]
    NoGrid,
    #[error("invalid head config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// 3x3 in x/y (rows/cols for range images).
    W3x3,
    /// 3x3x3; equals 3x3 on 2D views.
    W3x3x3,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    /// Distance scale of the heatmap, meters.
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Targets above `1 - epsilon` count as positives.
    pub epsilon: f64,
    /// Regression-activity threshold; kept for completeness, no regression loss uses it.
    pub delta: f64,
    pub peak_threshold: f64,
    pub window: Window,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self { sigma: 1.0, alpha: 2.0, beta: 4.0, epsilon: 0.001, delta: 0.5, peak_threshold: 0.2, window: Window::W3x3x3 }
    }
}

impl HeadConfig {
    pub fn check(&self) -> Result<(), HeadError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(HeadError::InvalidConfig(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(HeadError::InvalidConfig(format!("epsilon must be in (0, 1), got {}", self.epsilon)));
        }
        if !(self.peak_threshold > 0.0 && self.peak_threshold < 1.0) {
            return Err(HeadError::InvalidConfig(format!("peak_threshold must be in (0, 1), got {}", self.peak_threshold)));
        }
        Ok(())
    }
}

/// Element coordinates `V(e)` and whether they are 2D (pillar views use x/y only).
pub fn element_coords<T: Real>(rep: &Representation<T>) -> (Vec<[f64; 3]>, bool) {
    match rep {
        Representation::Point(p) => (p.coords().iter().map(to_f64_3).collect(), false),
        Representation::DensePillar(g) => {
            ((0..g.cell_count()).map(|f| g.spec().center(g.cell_of_flat(f))).collect(), true)
        }
        Representation::SparsePillar(g) => (g.cells().iter().map(|&c| g.spec().center(c)).collect(), true),
        Representation::Voxel(g) => (g.cells().iter().map(|&c| g.spec().center(c)).collect(), false),
        Representation::DensePerspective(img) => (
            (0..img.pixel_count()).filter(|&f| img.mask()[f]).map(|f| to_f64_3(&img.coords()[f])).collect(),
            false,
        ),
        Representation::SparsePerspective(img) => (img.coords().iter().map(to_f64_3).collect(), false),
    }
}

/// Grid cells of the elements, in element order; `None` for point sets.
pub fn element_cells<T: Real>(rep: &Representation<T>) -> Option<Vec<Cell>> {
    match rep {
        Representation::Point(_) => None,
        Representation::DensePillar(g) => Some((0..g.cell_count()).map(|f| g.cell_of_flat(f)).collect()),
        Representation::SparsePillar(g) | Representation::Voxel(g) => Some(g.cells().to_vec()),
        Representation::DensePerspective(img) => {
            Some((0..img.pixel_count()).filter(|&f| img.mask()[f]).map(|f| img.cell_of_flat(f)).collect())
        }
        Representation::SparsePerspective(img) => Some(img.cells().to_vec()),
    }
}

fn dist(a: [f64; 3], b: [f64; 3], planar: bool) -> f64 {
    let dz = if planar { 0.0 } else { a[2] - b[2] };
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + dz * dz).sqrt()
}

/// Per-element heatmap target
/// `h(e) = max over boxes containing e of exp(-(|V(e) - c| - min_f |V(f) - c|) / sigma^2)`, 0 outside all boxes.
pub fn heatmap_targets<T: Real>(rep: &Representation<T>, boxes: &[Box3D], cfg: &HeadConfig) -> Result<Vec<T>, HeadError> {
    cfg.check()?;
    let (coords, planar) = element_coords(rep);
    if coords.is_empty() {
        return Err(HeadError::NoElements);
    }
    let s2 = cfg.sigma * cfg.sigma;
    let mut h = vec![0.0f64; coords.len()];
    for b in boxes {
        let c = b.center;
        let nearest = coords.iter().map(|&v| dist(v, c, planar)).fold(f64::INFINITY, f64::min);
        for (e, &v) in coords.iter().enumerate() {
            let inside = if planar { b.contains_xy([v[0], v[1]]) } else { b.contains(v) };
            if inside {
                let val = (-(dist(v, c, planar) - nearest) / s2).exp();
                if val > h[e] {
                    h[e] = val;
                }
            }
        }
    }
    Ok(h.into_iter().map(T::of).collect())
}

/// Clamp applied to predictions before taking logarithms.
pub const PRED_CLAMP: f64 = 1e-6;

/// Penalty-reduced focal loss averaged over elements.
pub fn focal_loss<T: Real>(pred: &[T], target: &[T], cfg: &HeadConfig) -> Result<f64, HeadError> {
    if pred.len() != target.len() {
        return Err(HeadError::LengthMismatch { pred: pred.len(), target: target.len() });
    }
    if pred.is_empty() {
        return Err(HeadError::NoElements);
    }
    let mut sum = 0.0;
    for (&p, &t) in pred.iter().zip(target) {
        let p = p.as_f64().clamp(PRED_CLAMP, 1.0 - PRED_CLAMP);
        let t = t.as_f64();
        sum += if t > 1.0 - cfg.epsilon {
            (1.0 - p).powf(cfg.alpha) * p.ln()
        } else {
            (1.0 - t).powf(cfg.beta) * p.powf(cfg.alpha) * (1.0 - p).ln()
        };
    }
    Ok(-sum / pred.len() as f64)
}

/// Elements above the threshold that are maxima of their window; among equal
/// neighbours only the lexicographically smallest cell is kept.
pub fn extract_peaks<T: Real>(rep: &Representation<T>, pred: &[T], cfg: &HeadConfig) -> Result<Vec<usize>, HeadError> {
    let cells = element_cells(rep).ok_or(HeadError::NoGrid)?;
    if cells.len() != pred.len() {
        return Err(HeadError::LengthMismatch { pred: pred.len(), target: cells.len() });
    }
    let use_z = cfg.window == Window::W3x3x3 && matches!(rep, Representation::Voxel(_));
    let index: HashMap<Cell, usize> = cells.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let zs: &[i64] = if use_z { &[-1, 0, 1] } else { &[0] };
    let mut peaks = Vec::new();
    for (i, &c) in cells.iter().enumerate() {
        let v = pred[i];
        if !(v.as_f64() > cfg.peak_threshold) {
            continue;
        }
        let mut is_peak = true;
        'scan: for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                for &dz in zs {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let (x, y, z) = (c.x as i64 + dx, c.y as i64 + dy, c.z as i64 + dz);
                    if x < 0 || y < 0 || z < 0 {
                        continue;
                    }
                    let Some(&j) = index.get(&Cell::new(c.batch, x as u32, y as u32, z as u32)) else { continue };
                    let u = pred[j];
                    if u > v || (u == v && cells[j] < c) {
                        is_peak = false;
                        break 'scan;
                    }
                }
            }
        }
        if is_peak {
            peaks.push(i);
        }
    }
    Ok(peaks)
}
