//! Scene frame: the metric region gridded views cover and the range-image layout.

use serde::{Deserialize, Serialize};

use crate::arch::Branch;
use crate::pcrep::{io::Scan, GridSpec, PcrepError, PointSet, RangeLayout, View};
use crate::Real;

/// Axis-aligned region covered by pillar and voxel grids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Region {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self, PcrepError> {
        if (0..3).any(|a| !(min[a].is_finite() && max[a].is_finite() && max[a] > min[a])) {
            return Err(PcrepError::InvalidSpec(format!("region {min:?}..{max:?} is empty")));
        }
        Ok(Self { min, max })
    }

    /// `[-half, half]` in x and y, `[z_min, z_max]` in z.
    pub fn square(half: f64, z_min: f64, z_max: f64) -> Result<Self, PcrepError> {
        Self::new([-half, -half, z_min], [half, half, z_max])
    }

    pub fn size(&self) -> [f64; 3] {
        [self.max[0] - self.min[0], self.max[1] - self.min[1], self.max[2] - self.min[2]]
    }
}

impl Default for Region {
    fn default() -> Self {
        Self { min: [-40.96, -40.96, -3.0], max: [40.96, 40.96, 3.0] }
    }
}

/// Number of cells of size `cell` needed to cover `len`.
fn cells(len: f64, cell: f64) -> usize {
    ((len / cell) - 1e-9).ceil().max(1.0) as usize
}

/// Where gridded and perspective branches live for one scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub region: Region,
    pub layout: RangeLayout,
}

impl Frame {
    pub fn new(region: Region, layout: RangeLayout) -> Self {
        Self { region, layout }
    }

    /// Uses the scan's own layout, or fits a uniform one to its points.
    pub fn for_scan<T: Real>(scan: &Scan<T>, region: Region) -> Self {
        let layout = scan.layout.clone().unwrap_or_else(|| fit_layout(&scan.points, 64, 512));
        Self { region, layout }
    }

    /// Base-resolution grid of a pillar or voxel branch.
    pub fn grid_for(&self, branch: &Branch) -> Result<GridSpec, PcrepError> {
        let cell = branch
            .cell_size()
            .ok_or_else(|| PcrepError::InvalidSpec(format!("branch {} has no resolution", branch.id)))?;
        self.grid(branch.view, cell)
    }

    /// Grid for `view` with per-axis `cell` size anchored at the region minimum.
    pub fn grid(&self, view: View, cell: [f64; 3]) -> Result<GridSpec, PcrepError> {
        let size = self.region.size();
        let xy = [cells(size[0], cell[0]), cells(size[1], cell[1])];
        match view {
            View::Pillar => GridSpec::pillar(self.region.min, [cell[0], cell[1], size[2]], xy),
            View::Voxel => GridSpec::voxel(self.region.min, cell, [xy[0], xy[1], cells(size[2], cell[2])]),
            other => Err(PcrepError::InvalidSpec(format!("{other} view has no grid"))),
        }
    }
}

/// Uniform layout spanning the inclinations observed in `points`.
pub fn fit_layout<T: Real>(points: &PointSet<T>, height: usize, width: usize) -> RangeLayout {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in points.coords() {
        let [x, y, z] = [c[0].as_f64(), c[1].as_f64(), c[2].as_f64()];
        let inc = z.atan2(x.hypot(y));
        if inc.is_finite() {
            lo = lo.min(inc);
            hi = hi.max(inc);
        }
    }
    if !(hi > lo) {
        lo = -0.3;
        hi = 0.05;
    }
    RangeLayout::uniform(height, width, lo, hi).expect("nonzero layout")
}
