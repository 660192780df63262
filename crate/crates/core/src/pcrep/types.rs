use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{Cell, GridSpec, Kind, PcrepError, RangeLayout};
use crate::Real;

/// Row-major `rows x cols` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, PcrepError> {
        if data.len() != rows * cols {
            return Err(PcrepError::InvalidData(format!(
                "matrix data has {} values, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(cols: usize, rows: &[Vec<T>]) -> Result<Self, PcrepError> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(PcrepError::InvalidData("ragged feature rows".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }
}

/// Unordered point set: `[N, C]` features aligned row-by-row with `[N, 3]` coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet<T> {
    coords: Vec<[T; 3]>,
    features: Matrix<T>,
}

impl<T: Real> PointSet<T> {
    pub fn new(coords: Vec<[T; 3]>, features: Matrix<T>) -> Result<Self, PcrepError> {
        if coords.len() != features.rows() {
            return Err(PcrepError::InvalidData(format!(
                "{} coordinates but {} feature rows",
                coords.len(),
                features.rows()
            )));
        }
        if coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(PcrepError::InvalidData("point coordinates must be finite".into()));
        }
        Ok(Self { coords, features })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.features.cols()
    }

    pub fn coords(&self) -> &[[T; 3]] {
        &self.coords
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub(crate) fn with_features(&self, features: Matrix<T>) -> Self {
        debug_assert_eq!(features.rows(), self.coords.len());
        Self { coords: self.coords.clone(), features }
    }

    /// Converts the element type.
    pub fn cast<U: Real>(&self) -> PointSet<U> {
        PointSet {
            coords: self.coords.iter().map(|p| p.map(|v| U::of(v.as_f64()))).collect(),
            features: Matrix {
                rows: self.features.rows,
                cols: self.features.cols,
                data: self.features.data.iter().map(|v| U::of(v.as_f64())).collect(),
            },
        }
    }
}

/// Dense top-down grid, features `[B, X, Y, C]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensePillarGrid<T> {
    spec: GridSpec,
    batch: usize,
    channels: usize,
    features: Vec<T>,
}

impl<T: Real> DensePillarGrid<T> {
    pub fn zeros(spec: GridSpec, batch: usize, channels: usize) -> Result<Self, PcrepError> {
        if spec.is_voxel() {
            return Err(PcrepError::SpecMismatch("dense pillar grid needs a pillar spec".into()));
        }
        if batch == 0 {
            return Err(PcrepError::InvalidData("batch size must be >= 1".into()));
        }
        let n = batch * spec.cells_per_batch() * channels;
        Ok(Self { spec, batch, channels, features: vec![T::zero(); n] })
    }

    pub fn from_vec(spec: GridSpec, batch: usize, channels: usize, features: Vec<T>) -> Result<Self, PcrepError> {
        let mut g = Self::zeros(spec, batch, 0)?;
        if features.len() != batch * g.spec.cells_per_batch() * channels {
            return Err(PcrepError::InvalidData("dense pillar feature length mismatch".into()));
        }
        g.channels = channels;
        g.features = features;
        Ok(g)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn cell_count(&self) -> usize {
        self.batch * self.spec.cells_per_batch()
    }

    #[inline]
    pub(crate) fn flat(&self, cell: Cell) -> usize {
        cell.batch as usize * self.spec.cells_per_batch() + self.spec.offset(cell)
    }

    pub(crate) fn cell_of_flat(&self, flat: usize) -> Cell {
        let per = self.spec.cells_per_batch();
        self.spec.cell_at(flat / per, flat % per)
    }

    pub fn at(&self, cell: Cell) -> &[T] {
        let i = self.flat(cell);
        &self.features[i * self.channels..(i + 1) * self.channels]
    }

    pub(crate) fn at_mut(&mut self, cell: Cell) -> &mut [T] {
        let i = self.flat(cell);
        let c = self.channels;
        &mut self.features[i * c..(i + 1) * c]
    }

    /// True when any channel of the cell is nonzero.
    pub fn is_occupied(&self, flat: usize) -> bool {
        self.features[flat * self.channels..(flat + 1) * self.channels].iter().any(|v| !v.is_zero())
    }
}

/// Dense range image: features `[B, H, W, C]`, coordinates `[B, H, W, 3]` and a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DensePerspectiveImage<T> {
    layout: RangeLayout,
    batch: usize,
    channels: usize,
    features: Vec<T>,
    coords: Vec<[T; 3]>,
    mask: Vec<bool>,
}

impl<T: Real> DensePerspectiveImage<T> {
    pub fn empty(layout: RangeLayout, batch: usize, channels: usize) -> Result<Self, PcrepError> {
        if batch == 0 {
            return Err(PcrepError::InvalidData("batch size must be >= 1".into()));
        }
        let px = batch * layout.height() * layout.width();
        Ok(Self {
            layout,
            batch,
            channels,
            features: vec![T::zero(); px * channels],
            coords: vec![[T::zero(); 3]; px],
            mask: vec![false; px],
        })
    }

    /// Builds an image from full tensors; masked pixels must carry zero features.
    pub fn from_parts(
        layout: RangeLayout,
        batch: usize,
        channels: usize,
        features: Vec<T>,
        coords: Vec<[T; 3]>,
        mask: Vec<bool>,
    ) -> Result<Self, PcrepError> {
        let px = batch * layout.height() * layout.width();
        if batch == 0 || features.len() != px * channels || coords.len() != px || mask.len() != px {
            return Err(PcrepError::InvalidData("dense perspective tensor sizes mismatch".into()));
        }
        let img = Self { layout, batch, channels, features, coords, mask };
        for p in 0..px {
            if !img.mask[p] && img.pixel(p).iter().any(|v| !v.is_zero()) {
                return Err(PcrepError::InvalidData("masked pixel carries a nonzero feature".into()));
            }
        }
        Ok(img)
    }

    pub fn layout(&self) -> &RangeLayout {
        &self.layout
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn coords(&self) -> &[[T; 3]] {
        &self.coords
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn pixel_count(&self) -> usize {
        self.mask.len()
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    #[inline]
    pub fn flat(&self, cell: Cell) -> usize {
        (cell.batch as usize * self.layout.height() + cell.x as usize) * self.layout.width() + cell.y as usize
    }

    pub fn cell_of_flat(&self, flat: usize) -> Cell {
        let w = self.layout.width();
        let h = self.layout.height();
        Cell::new((flat / (w * h)) as u32, ((flat / w) % h) as u32, (flat % w) as u32, 0)
    }

    pub fn pixel(&self, flat: usize) -> &[T] {
        &self.features[flat * self.channels..(flat + 1) * self.channels]
    }

    pub(crate) fn set_pixel(&mut self, flat: usize, coord: [T; 3], feature: &[T]) {
        self.mask[flat] = true;
        self.coords[flat] = coord;
        let c = self.channels;
        self.features[flat * c..(flat + 1) * c].copy_from_slice(feature);
    }

    pub(crate) fn replace_features(&mut self, channels: usize, features: Vec<T>) {
        debug_assert_eq!(features.len(), self.mask.len() * channels);
        self.channels = channels;
        self.features = features;
        for p in 0..self.mask.len() {
            if !self.mask[p] {
                for v in &mut self.features[p * channels..(p + 1) * channels] {
                    *v = T::zero();
                }
            }
        }
    }
}

/// Sparse pillar or voxel grid: `[N, C]` features and `N` unique cell indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseGrid<T> {
    spec: GridSpec,
    batch: usize,
    cells: Vec<Cell>,
    features: Matrix<T>,
}

impl<T: Real> SparseGrid<T> {
    pub fn new(spec: GridSpec, batch: usize, cells: Vec<Cell>, features: Matrix<T>) -> Result<Self, PcrepError> {
        check_sparse_cells(&cells, features.rows(), batch, |c| spec.contains(c) && (spec.is_voxel() || c.z == 0))?;
        Ok(Self { spec, batch, cells, features })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.features.cols()
    }

    pub(crate) fn from_sorted_unchecked(spec: GridSpec, batch: usize, cells: Vec<Cell>, features: Matrix<T>) -> Self {
        debug_assert_eq!(cells.len(), features.rows());
        Self { spec, batch, cells, features }
    }
}

/// Sparse range image: `[N, C]` features, pixel indices `(batch, row, col)` and `[N, 3]` coordinates.
///
/// `level` counts stride-2 downsamples relative to the base layout.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseImage<T> {
    layout: RangeLayout,
    level: u32,
    batch: usize,
    cells: Vec<Cell>,
    coords: Vec<[T; 3]>,
    features: Matrix<T>,
}

impl<T: Real> SparseImage<T> {
    pub fn new(
        layout: RangeLayout,
        level: u32,
        batch: usize,
        cells: Vec<Cell>,
        coords: Vec<[T; 3]>,
        features: Matrix<T>,
    ) -> Result<Self, PcrepError> {
        if coords.len() != cells.len() {
            return Err(PcrepError::InvalidData("sparse image coordinates/cells length mismatch".into()));
        }
        let (h, w) = layout.extent_at(level);
        check_sparse_cells(&cells, features.rows(), batch, |c| {
            (c.x as usize) < h && (c.y as usize) < w && c.z == 0
        })?;
        Ok(Self { layout, level, batch, cells, coords, features })
    }

    pub(crate) fn from_sorted_unchecked(
        layout: RangeLayout,
        level: u32,
        batch: usize,
        cells: Vec<Cell>,
        coords: Vec<[T; 3]>,
        features: Matrix<T>,
    ) -> Self {
        Self { layout, level, batch, cells, coords, features }
    }

    pub fn layout(&self) -> &RangeLayout {
        &self.layout
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn coords(&self) -> &[[T; 3]] {
        &self.coords
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.features.cols()
    }

    pub fn extent(&self) -> (usize, usize) {
        self.layout.extent_at(self.level)
    }
}

fn check_sparse_cells(
    cells: &[Cell],
    rows: usize,
    batch: usize,
    in_bounds: impl Fn(Cell) -> bool,
) -> Result<(), PcrepError> {
    if batch == 0 {
        return Err(PcrepError::InvalidData("batch size must be >= 1".into()));
    }
    if cells.len() != rows {
        return Err(PcrepError::InvalidData(format!("{} cells but {rows} feature rows", cells.len())));
    }
    let mut seen = HashSet::with_capacity(cells.len());
    for &c in cells {
        if c.batch as usize >= batch || !in_bounds(c) {
            return Err(PcrepError::InvalidData(format!("cell {c:?} outside the grid")));
        }
        if !seen.insert(c) {
            return Err(PcrepError::InvalidData(format!("duplicate cell {c:?}")));
        }
    }
    Ok(())
}

/// One of the six view/format representations.
#[derive(Clone, Debug, PartialEq)]
pub enum Representation<T> {
    Point(PointSet<T>),
    DensePillar(DensePillarGrid<T>),
    SparsePillar(SparseGrid<T>),
    Voxel(SparseGrid<T>),
    DensePerspective(DensePerspectiveImage<T>),
    SparsePerspective(SparseImage<T>),
}

impl<T: Real> Representation<T> {
    pub fn kind(&self) -> Kind {
        match self {
            Self::Point(_) => Kind::Point,
            Self::DensePillar(_) => Kind::PillarDense,
            Self::SparsePillar(_) => Kind::PillarSparse,
            Self::Voxel(_) => Kind::Voxel,
            Self::DensePerspective(_) => Kind::PerspectiveDense,
            Self::SparsePerspective(_) => Kind::PerspectiveSparse,
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            Self::Point(p) => p.channels(),
            Self::DensePillar(g) => g.channels(),
            Self::SparsePillar(g) | Self::Voxel(g) => g.channels(),
            Self::DensePerspective(i) => i.channels(),
            Self::SparsePerspective(i) => i.channels(),
        }
    }

    /// Stored elements: points, all dense cells, valid pixels, or sparse rows.
    pub fn element_count(&self) -> usize {
        match self {
            Self::Point(p) => p.len(),
            Self::DensePillar(g) => g.cell_count(),
            Self::SparsePillar(g) | Self::Voxel(g) => g.len(),
            Self::DensePerspective(i) => i.valid_count(),
            Self::SparsePerspective(i) => i.len(),
        }
    }

    pub fn shape(&self) -> Shape {
        let extent = match self {
            Self::Point(p) => Extent::Points(p.len()),
            Self::DensePillar(g) => Extent::grid(g.spec()),
            Self::SparsePillar(g) | Self::Voxel(g) => Extent::grid(g.spec()),
            Self::DensePerspective(i) => Extent::Image { height: i.layout().height(), width: i.layout().width() },
            Self::SparsePerspective(i) => {
                let (height, width) = i.extent();
                Extent::Image { height, width }
            }
        };
        let batch = match self {
            Self::Point(_) => 1,
            Self::DensePillar(g) => g.batch(),
            Self::SparsePillar(g) | Self::Voxel(g) => g.batch(),
            Self::DensePerspective(i) => i.batch(),
            Self::SparsePerspective(i) => i.batch(),
        };
        Shape { kind: self.kind(), batch, extent, channels: self.channels() }
    }
}

/// Spatial extent of a representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extent {
    Points(usize),
    Grid { x: usize, y: usize, z: Option<usize> },
    Image { height: usize, width: usize },
}

impl Extent {
    pub fn grid(spec: &GridSpec) -> Self {
        let [x, y, _] = spec.extent();
        Extent::Grid { x, y, z: spec.z_cells() }
    }
}

/// Tensor signature of a representation: kind, batch, spatial extent and channels.
///
/// The number of occupied sparse elements is data-dependent and not part of the signature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub kind: Kind,
    pub batch: usize,
    pub extent: Extent,
    pub channels: usize,
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.extent {
            Extent::Points(n) => write!(f, "[{n},{}]", self.channels),
            Extent::Grid { x, y, z: None } => write!(f, "[{},{x},{y},{}]", self.batch, self.channels),
            Extent::Grid { x, y, z: Some(z) } => write!(f, "[{},{x},{y},{z},{}]", self.batch, self.channels),
            Extent::Image { height, width } => write!(f, "[{},{height},{width},{}]", self.batch, self.channels),
        }
    }
}
