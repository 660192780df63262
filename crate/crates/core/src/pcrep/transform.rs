use std::collections::{BTreeMap, HashMap};

use super::{
    Cell, DensePerspectiveImage, DensePillarGrid, GridSpec, Kind, Matrix, PcrepError, PointSet, RangeLayout,
    Representation, SparseGrid, SparseImage,
};
use crate::scalar::{from_f64_3, to_f64_3};
use crate::Real;

/// Destination frame of a transform.
#[derive(Clone, Copy, Debug)]
pub enum TransformTarget<'a, T> {
    /// Point destination with one point per occupied source element.
    Points,
    /// Point destination gathered onto the given coordinates.
    PointsAt(&'a [[T; 3]]),
    /// Pillar or voxel destination.
    Grid(&'a GridSpec),
    /// Perspective destination at base resolution.
    Image(&'a RangeLayout),
}

/// Converts `src` into the `dst` view/format.
///
/// Scatters into grids mean-pool features per cell and drop out-of-range
/// elements; voxel-to-pillar collapses z by max-pooling; projections into a
/// range image keep the nearest-range element per pixel; gathers onto points
/// read the containing cell (zero when empty or out of range).
pub fn transform<T: Real>(
    src: &Representation<T>,
    dst: Kind,
    target: TransformTarget<'_, T>,
) -> Result<Representation<T>, PcrepError> {
    let src_kind = src.kind();
    if !src_kind.supports(dst) {
        return Err(PcrepError::UnsupportedTransform { src: src_kind, dst });
    }
    match dst {
        Kind::Point => to_points(src, target),
        Kind::PillarDense | Kind::PillarSparse | Kind::Voxel => {
            let TransformTarget::Grid(spec) = target else {
                return Err(PcrepError::SpecMismatch(format!("{dst} needs a grid target")));
            };
            if spec.is_voxel() != (dst == Kind::Voxel) {
                return Err(PcrepError::SpecMismatch(format!("grid spec does not match {dst}")));
            }
            if let (Kind::PillarDense, Representation::DensePillar(g)) = (dst, src) {
                if g.spec() == spec {
                    return Ok(src.clone());
                }
            }
            let sparse = to_sparse_grid(src, spec)?;
            Ok(match dst {
                Kind::PillarDense => Representation::DensePillar(densify_grid(&sparse)?),
                Kind::PillarSparse => Representation::SparsePillar(sparse),
                _ => Representation::Voxel(sparse),
            })
        }
        Kind::PerspectiveDense | Kind::PerspectiveSparse => {
            let TransformTarget::Image(layout) = target else {
                return Err(PcrepError::SpecMismatch(format!("{dst} needs an image target")));
            };
            if let (Kind::PerspectiveDense, Representation::DensePerspective(img)) = (dst, src) {
                if img.layout() == layout {
                    return Ok(src.clone());
                }
            }
            let sparse = to_sparse_image(src, layout)?;
            Ok(if dst == Kind::PerspectiveDense {
                Representation::DensePerspective(densify_image(&sparse)?)
            } else {
                Representation::SparsePerspective(sparse)
            })
        }
    }
}

/// Occupied source elements as `(batch, coordinate, feature row)`.
///
/// Dense pillar cells count as occupied when any channel is nonzero; dense
/// range-image pixels when unmasked.
pub(crate) fn occupied_elements<T: Real>(src: &Representation<T>) -> Vec<(u32, [f64; 3], &[T])> {
    match src {
        Representation::Point(p) => {
            (0..p.len()).map(|i| (0, to_f64_3(&p.coords()[i]), p.features().row(i))).collect()
        }
        Representation::DensePillar(g) => (0..g.cell_count())
            .filter(|&f| g.is_occupied(f))
            .map(|f| {
                let cell = g.cell_of_flat(f);
                (cell.batch, g.spec().center(cell), g.at(cell))
            })
            .collect(),
        Representation::SparsePillar(g) | Representation::Voxel(g) => g
            .cells()
            .iter()
            .enumerate()
            .map(|(i, &c)| (c.batch, g.spec().center(c), g.features().row(i)))
            .collect(),
        Representation::DensePerspective(img) => (0..img.pixel_count())
            .filter(|&f| img.mask()[f])
            .map(|f| (img.cell_of_flat(f).batch, to_f64_3(&img.coords()[f]), img.pixel(f)))
            .collect(),
        Representation::SparsePerspective(img) => img
            .cells()
            .iter()
            .enumerate()
            .map(|(i, &c)| (c.batch, to_f64_3(&img.coords()[i]), img.features().row(i)))
            .collect(),
    }
}

fn batch_of<T: Real>(src: &Representation<T>) -> usize {
    src.shape().batch
}

fn to_points<T: Real>(src: &Representation<T>, target: TransformTarget<'_, T>) -> Result<Representation<T>, PcrepError> {
    if batch_of(src) > 1 {
        return Err(PcrepError::SpecMismatch("point sets hold a single scan".into()));
    }
    match target {
        TransformTarget::Points => {
            if let Representation::Point(_) = src {
                return Ok(src.clone());
            }
            let elems = occupied_elements(src);
            let channels = src.channels();
            let mut data = Vec::with_capacity(elems.len() * channels);
            let mut coords = Vec::with_capacity(elems.len());
            for (_, p, f) in elems {
                coords.push(from_f64_3(p));
                data.extend_from_slice(f);
            }
            let n = coords.len();
            Ok(Representation::Point(PointSet::new(coords, Matrix::from_vec(n, channels, data)?)?))
        }
        TransformTarget::PointsAt(reference) => {
            if let Representation::Point(p) = src {
                if p.coords() != reference {
                    return Err(PcrepError::SpecMismatch("point-to-point transform needs identical points".into()));
                }
                return Ok(src.clone());
            }
            let channels = src.channels();
            let mut out = Matrix::zeros(reference.len(), channels);
            let lookup = CellLookup::new(src);
            for (i, p) in reference.iter().enumerate() {
                if let Some(f) = lookup.feature_at(src, to_f64_3(p)) {
                    out.row_mut(i).copy_from_slice(f);
                }
            }
            Ok(Representation::Point(PointSet::new(reference.to_vec(), out)?))
        }
        _ => Err(PcrepError::SpecMismatch("point destination needs a point target".into())),
    }
}

/// Cell-to-row index for gathering from sparse sources.
struct CellLookup {
    rows: HashMap<Cell, usize>,
}

impl CellLookup {
    fn new<T: Real>(src: &Representation<T>) -> Self {
        let cells: &[Cell] = match src {
            Representation::SparsePillar(g) | Representation::Voxel(g) => g.cells(),
            Representation::SparsePerspective(img) => img.cells(),
            _ => &[],
        };
        Self { rows: cells.iter().enumerate().map(|(i, &c)| (c, i)).collect() }
    }

    fn feature_at<'a, T: Real>(&self, src: &'a Representation<T>, p: [f64; 3]) -> Option<&'a [T]> {
        match src {
            Representation::Point(_) => None,
            Representation::DensePillar(g) => {
                let [x, y, z] = g.spec().cell_of(p)?;
                Some(g.at(Cell::new(0, x, y, z)))
            }
            Representation::SparsePillar(g) | Representation::Voxel(g) => {
                let [x, y, z] = g.spec().cell_of(p)?;
                self.rows.get(&Cell::new(0, x, y, z)).map(|&r| g.features().row(r))
            }
            Representation::DensePerspective(img) => {
                let (r, c, _) = img.layout().project(p)?;
                let f = img.flat(Cell::new(0, r, c, 0));
                img.mask()[f].then(|| img.pixel(f))
            }
            Representation::SparsePerspective(img) => {
                let (r, c) = img.layout().project_at(p, img.level())?;
                self.rows.get(&Cell::new(0, r, c, 0)).map(|&i| img.features().row(i))
            }
        }
    }
}

fn to_sparse_grid<T: Real>(src: &Representation<T>, spec: &GridSpec) -> Result<SparseGrid<T>, PcrepError> {
    match src {
        Representation::SparsePillar(g) | Representation::Voxel(g) if g.spec() == spec => return Ok(g.clone()),
        Representation::DensePillar(g) if g.spec() == spec => return Ok(sparsify_grid(g)),
        _ => {}
    }
    let batch = batch_of(src);
    let channels = src.channels();
    let elems = occupied_elements(src);
    let pool = if src.kind() == Kind::Voxel && !spec.is_voxel() { Pool::Max } else { Pool::Mean };
    Ok(scatter(&elems, spec, batch, channels, pool))
}

#[derive(Clone, Copy, PartialEq)]
enum Pool {
    Mean,
    Max,
}

fn scatter<T: Real>(elems: &[(u32, [f64; 3], &[T])], spec: &GridSpec, batch: usize, channels: usize, pool: Pool) -> SparseGrid<T> {
    let mut acc: BTreeMap<Cell, (Vec<T>, usize)> = BTreeMap::new();
    for &(b, p, f) in elems {
        let Some([x, y, z]) = spec.cell_of(p) else { continue };
        let entry = acc.entry(Cell::new(b, x, y, z)).or_insert_with(|| (Vec::new(), 0));
        if entry.1 == 0 {
            entry.0.extend_from_slice(f);
        } else {
            for (a, &v) in entry.0.iter_mut().zip(f) {
                match pool {
                    Pool::Mean => *a += v,
                    Pool::Max => *a = a.max(v),
                }
            }
        }
        entry.1 += 1;
    }
    let mut cells = Vec::with_capacity(acc.len());
    let mut data = Vec::with_capacity(acc.len() * channels);
    for (cell, (mut sum, n)) in acc {
        if pool == Pool::Mean && n > 1 {
            let inv = T::one() / T::of(n as f64);
            for v in &mut sum {
                *v *= inv;
            }
        }
        cells.push(cell);
        data.extend(sum);
    }
    let rows = cells.len();
    SparseGrid::from_sorted_unchecked(spec.clone(), batch, cells, Matrix::from_vec(rows, channels, data).expect("sized"))
}

/// Converts a sparse pillar grid into its dense counterpart, zero-padding absent cells.
pub fn densify_grid<T: Real>(g: &SparseGrid<T>) -> Result<DensePillarGrid<T>, PcrepError> {
    let mut dense = DensePillarGrid::zeros(g.spec().clone(), g.batch(), g.channels())?;
    for (i, &c) in g.cells().iter().enumerate() {
        dense.at_mut(c).copy_from_slice(g.features().row(i));
    }
    Ok(dense)
}

/// Keeps the nonzero cells of a dense pillar grid.
pub fn sparsify_grid<T: Real>(g: &DensePillarGrid<T>) -> SparseGrid<T> {
    let mut cells = Vec::new();
    let mut data = Vec::new();
    for f in 0..g.cell_count() {
        if g.is_occupied(f) {
            let cell = g.cell_of_flat(f);
            cells.push(cell);
            data.extend_from_slice(g.at(cell));
        }
    }
    let n = cells.len();
    SparseGrid::from_sorted_unchecked(g.spec().clone(), g.batch(), cells, Matrix::from_vec(n, g.channels(), data).expect("sized"))
}

fn to_sparse_image<T: Real>(src: &Representation<T>, layout: &RangeLayout) -> Result<SparseImage<T>, PcrepError> {
    match src {
        Representation::SparsePerspective(img) if img.layout() == layout && img.level() == 0 => return Ok(img.clone()),
        Representation::DensePerspective(img) if img.layout() == layout => return Ok(sparsify_image(img)),
        _ => {}
    }
    let batch = batch_of(src);
    let channels = src.channels();
    let mut best: BTreeMap<Cell, (f64, usize)> = BTreeMap::new();
    let elems = occupied_elements(src);
    for (i, &(b, p, _)) in elems.iter().enumerate() {
        let Some((r, c, range)) = layout.project(p) else { continue };
        let cell = Cell::new(b, r, c, 0);
        match best.get(&cell) {
            Some(&(d, _)) if d <= range => {}
            _ => {
                best.insert(cell, (range, i));
            }
        }
    }
    let mut cells = Vec::with_capacity(best.len());
    let mut coords = Vec::with_capacity(best.len());
    let mut data = Vec::with_capacity(best.len() * channels);
    for (cell, (_, i)) in best {
        cells.push(cell);
        coords.push(from_f64_3(elems[i].1));
        data.extend_from_slice(elems[i].2);
    }
    let n = cells.len();
    Ok(SparseImage::from_sorted_unchecked(
        layout.clone(),
        0,
        batch,
        cells,
        coords,
        Matrix::from_vec(n, channels, data)?,
    ))
}

/// Converts a base-resolution sparse range image into a dense one.
pub fn densify_image<T: Real>(img: &SparseImage<T>) -> Result<DensePerspectiveImage<T>, PcrepError> {
    if img.level() != 0 {
        return Err(PcrepError::SpecMismatch("only base-resolution images can be densified".into()));
    }
    let mut dense = DensePerspectiveImage::empty(img.layout().clone(), img.batch(), img.channels())?;
    for (i, &c) in img.cells().iter().enumerate() {
        let f = dense.flat(c);
        dense.set_pixel(f, img.coords()[i], img.features().row(i));
    }
    Ok(dense)
}

/// Keeps the unmasked pixels of a dense range image.
pub fn sparsify_image<T: Real>(img: &DensePerspectiveImage<T>) -> SparseImage<T> {
    let mut cells = Vec::new();
    let mut coords = Vec::new();
    let mut data = Vec::new();
    for f in 0..img.pixel_count() {
        if img.mask()[f] {
            cells.push(img.cell_of_flat(f));
            coords.push(img.coords()[f]);
            data.extend_from_slice(img.pixel(f));
        }
    }
    let n = cells.len();
    SparseImage::from_sorted_unchecked(
        img.layout().clone(),
        0,
        img.batch(),
        cells,
        coords,
        Matrix::from_vec(n, img.channels(), data).expect("sized"),
    )
}
