use serde::{Deserialize, Serialize};

use super::PcrepError;

/// Integer address of one element of a grid or range image.
///
/// For pillar grids `z` is always 0; for range images `x` is the row and
/// `y` the column. Ordering is lexicographic over `(batch, x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Cell {
    pub batch: u32,
    pub x: u32,
    pub y: u32,
    pub z: u32,
}

impl Cell {
    pub const fn new(batch: u32, x: u32, y: u32, z: u32) -> Self {
        Self { batch, x, y, z }
    }

    /// Parent cell after downsampling by `2` on x/y and `z_stride` on z.
    #[inline]
    pub fn parent(self, z_stride: u32) -> Self {
        Self { batch: self.batch, x: self.x / 2, y: self.y / 2, z: self.z / z_stride }
    }

    /// True when `other` lies within Chebyshev distance 1 of `self` in the same batch.
    pub fn is_neighbor(self, other: Cell, use_z: bool) -> bool {
        let d = |a: u32, b: u32| a.abs_diff(b) <= 1;
        self.batch == other.batch
            && d(self.x, other.x)
            && d(self.y, other.y)
            && (!use_z || d(self.z, other.z))
    }
}

/// Placement of a regular pillar (2D) or voxel (3D) grid in the scene frame.
///
/// A pillar grid has no z extent; its `cell_size[2]` is only used to place
/// the cell center height (`origin.z + 0.5 * cell_size.z`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    origin: [f64; 3],
    cell_size: [f64; 3],
    extent: [usize; 2],
    z_cells: Option<usize>,
}

impl GridSpec {
    pub fn pillar(origin: [f64; 3], cell_size: [f64; 3], extent: [usize; 2]) -> Result<Self, PcrepError> {
        let spec = Self { origin, cell_size, extent, z_cells: None };
        spec.check()?;
        Ok(spec)
    }

    pub fn voxel(origin: [f64; 3], cell_size: [f64; 3], extent: [usize; 3]) -> Result<Self, PcrepError> {
        let spec = Self {
            origin,
            cell_size,
            extent: [extent[0], extent[1]],
            z_cells: Some(extent[2]),
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<(), PcrepError> {
        let axes = if self.is_voxel() { 3 } else { 2 };
        for a in 0..axes {
            let s = self.cell_size[a];
            if !(s.is_finite() && s > 0.0) {
                return Err(PcrepError::InvalidSpec(format!("cell size along axis {a} must be > 0, got {s}")));
            }
        }
        if !self.cell_size[2].is_finite() || self.cell_size[2] < 0.0 {
            return Err(PcrepError::InvalidSpec("cell height must be finite and non-negative".into()));
        }
        if self.origin.iter().any(|v| !v.is_finite()) {
            return Err(PcrepError::InvalidSpec("origin must be finite".into()));
        }
        if self.extent.contains(&0) || self.z_cells == Some(0) {
            return Err(PcrepError::InvalidSpec("extents must be >= 1".into()));
        }
        Ok(())
    }

    pub fn is_voxel(&self) -> bool {
        self.z_cells.is_some()
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn cell_size(&self) -> [f64; 3] {
        self.cell_size
    }

    /// `[X, Y, Z]`, with `Z = 1` for pillar grids.
    pub fn extent(&self) -> [usize; 3] {
        [self.extent[0], self.extent[1], self.z_cells.unwrap_or(1)]
    }

    pub fn z_cells(&self) -> Option<usize> {
        self.z_cells
    }

    pub fn cells_per_batch(&self) -> usize {
        let [x, y, z] = self.extent();
        x * y * z
    }

    /// Cell index containing `p`, or `None` outside the grid. Pillar grids ignore z.
    pub fn cell_of(&self, p: [f64; 3]) -> Option<[u32; 3]> {
        let ext = self.extent();
        let axes = if self.is_voxel() { 3 } else { 2 };
        let mut out = [0u32; 3];
        for a in 0..axes {
            let t = ((p[a] - self.origin[a]) / self.cell_size[a]).floor();
            if !(t >= 0.0 && t < ext[a] as f64) {
                return None;
            }
            out[a] = t as u32;
        }
        Some(out)
    }

    pub fn contains(&self, cell: Cell) -> bool {
        let [x, y, z] = self.extent();
        (cell.x as usize) < x && (cell.y as usize) < y && (cell.z as usize) < z
    }

    /// `origin + (index + 0.5) * cell_size` per axis.
    pub fn center(&self, cell: Cell) -> [f64; 3] {
        let idx = [cell.x, cell.y, cell.z];
        let mut c = [0.0; 3];
        for a in 0..3 {
            c[a] = self.origin[a] + (idx[a] as f64 + 0.5) * self.cell_size[a];
        }
        c
    }

    /// Grid after one strided downsample: x/y cells doubled, z doubled when `z_stride == 2`.
    pub fn coarsen(&self, z_stride: u32) -> Self {
        let half = |n: usize| n.div_ceil(2);
        let mut cell_size = self.cell_size;
        cell_size[0] *= 2.0;
        cell_size[1] *= 2.0;
        let z_cells = self.z_cells.map(|z| {
            if z_stride == 2 {
                cell_size[2] *= 2.0;
                half(z)
            } else {
                z
            }
        });
        Self {
            origin: self.origin,
            cell_size,
            extent: [half(self.extent[0]), half(self.extent[1])],
            z_cells,
        }
    }

    /// Dense row-major offset of `cell` within one batch.
    #[inline]
    pub(crate) fn offset(&self, cell: Cell) -> usize {
        let [_, y, z] = self.extent();
        (cell.x as usize * y + cell.y as usize) * z + cell.z as usize
    }

    pub(crate) fn cell_at(&self, batch: usize, offset: usize) -> Cell {
        let [_, y, z] = self.extent();
        let cz = offset % z;
        let cy = (offset / z) % y;
        let cx = offset / (z * y);
        Cell::new(batch as u32, cx as u32, cy as u32, cz as u32)
    }
}

/// Cell centers for a list of cells, `v = origin + (i + 0.5) * size`.
pub fn cell_centers(spec: &GridSpec, cells: &[Cell]) -> Vec<[f64; 3]> {
    cells.iter().map(|&c| spec.center(c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centers_follow_index_formula() {
        let spec = GridSpec::pillar([0.0, 0.0, 0.0], [0.32, 0.32, 0.0], [4, 4]).unwrap();
        let c = spec.center(Cell::new(0, 0, 0, 0));
        assert!((c[0] - 0.16).abs() < 1e-12 && (c[1] - 0.16).abs() < 1e-12);

        let spec = GridSpec::pillar([-10.0, -10.0, 0.0], [1.0, 1.0, 0.0], [20, 20]).unwrap();
        let c = spec.center(Cell::new(0, 10, 10, 0));
        assert!((c[0] - 0.5).abs() < 1e-12 && (c[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_cell_size_is_rejected() {
        assert!(GridSpec::pillar([0.0; 3], [0.0, 0.32, 0.0], [4, 4]).is_err());
        assert!(GridSpec::voxel([0.0; 3], [0.2, 0.2, 0.0], [4, 4, 4]).is_err());
        assert!(GridSpec::voxel([0.0; 3], [0.2, 0.2, 0.2], [4, 0, 4]).is_err());
    }

    #[test]
    fn pillar_binning_ignores_z() {
        let spec = GridSpec::pillar([0.0; 3], [1.0, 1.0, 0.0], [2, 2]).unwrap();
        assert_eq!(spec.cell_of([1.5, 0.2, 1e6]), Some([1, 0, 0]));
        assert_eq!(spec.cell_of([-0.1, 0.2, 0.0]), None);
        assert_eq!(spec.cell_of([2.0, 0.2, 0.0]), None);
    }

    #[test]
    fn coarsen_is_consistent_with_parent_indices() {
        let spec = GridSpec::voxel([-3.0, -2.0, -1.0], [0.3, 0.3, 0.2], [11, 7, 5]).unwrap();
        let coarse = spec.coarsen(2);
        assert_eq!(coarse.extent(), [6, 4, 3]);
        let p = [-0.71, -0.13, -0.33];
        let fine = spec.cell_of(p).unwrap();
        let up = coarse.cell_of(p).unwrap();
        let parent = Cell::new(0, fine[0], fine[1], fine[2]).parent(2);
        assert_eq!([parent.x, parent.y, parent.z], up);
        assert_eq!(spec.coarsen(1).extent()[2], 5);
    }

    #[test]
    fn offsets_round_trip() {
        let spec = GridSpec::voxel([0.0; 3], [1.0; 3], [3, 4, 5]).unwrap();
        for off in 0..spec.cells_per_batch() {
            let c = spec.cell_at(0, off);
            assert_eq!(spec.offset(c), off);
        }
    }
}
