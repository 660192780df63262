use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{
    Cell, DensePerspectiveImage, DensePillarGrid, Matrix, PcrepError, PointSet, Representation, SparseGrid, SparseImage,
};
use crate::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeMode {
    #[default]
    Concat,
    Sum,
}

/// Output channel count of merging parts with `channels` under `mode`.
pub fn merged_channels(channels: &[usize], mode: MergeMode) -> Result<usize, PcrepError> {
    match mode {
        MergeMode::Concat => Ok(channels.iter().sum()),
        MergeMode::Sum => {
            if channels.windows(2).any(|w| w[0] != w[1]) {
                Err(PcrepError::ChannelMismatch(channels.to_vec()))
            } else {
                Ok(channels.first().copied().unwrap_or(0))
            }
        }
    }
}

/// Merges same-kind representations by channel concatenation or summation.
///
/// Sparse parts are aligned on the union of their cells; a part missing a
/// cell contributes a zero vector there.
pub fn merge<T: Real>(parts: &[Representation<T>], mode: MergeMode) -> Result<Representation<T>, PcrepError> {
    let first = parts.first().ok_or_else(|| PcrepError::InvalidData("merge needs at least one part".into()))?;
    if parts.iter().any(|p| p.kind() != first.kind()) {
        return Err(PcrepError::MixedViews);
    }
    let channels: Vec<usize> = parts.iter().map(|p| p.channels()).collect();
    let out_c = merged_channels(&channels, mode)?;
    if parts.len() == 1 {
        return Ok(first.clone());
    }
    let same_frame = parts.iter().all(|p| p.shape().extent == first.shape().extent && p.shape().batch == first.shape().batch);
    if !same_frame {
        return Err(PcrepError::SpecMismatch("merge parts have different frames".into()));
    }
    match first {
        Representation::Point(p0) => {
            let sets: Vec<&PointSet<T>> = parts.iter().map(as_points).collect();
            if sets.iter().any(|s| s.coords() != p0.coords()) {
                return Err(PcrepError::SpecMismatch("point sets are not aligned".into()));
            }
            let rows = (0..p0.len()).map(|i| sets.iter().map(move |s| s.features().row(i)));
            let data = combine_rows(rows, p0.len(), out_c, mode);
            Ok(Representation::Point(p0.with_features(Matrix::from_vec(p0.len(), out_c, data)?)))
        }
        Representation::DensePillar(g0) => {
            let grids: Vec<&DensePillarGrid<T>> =
                parts.iter().map(|p| if let Representation::DensePillar(g) = p { g } else { unreachable!() }).collect();
            if grids.iter().any(|g| g.spec() != g0.spec()) {
                return Err(PcrepError::SpecMismatch("dense pillar grids differ in spec".into()));
            }
            let n = g0.cell_count();
            let rows = (0..n).map(|f| grids.iter().map(move |g| &g.features()[f * g.channels()..(f + 1) * g.channels()]));
            let data = combine_rows(rows, n, out_c, mode);
            Ok(Representation::DensePillar(DensePillarGrid::from_vec(g0.spec().clone(), g0.batch(), out_c, data)?))
        }
        Representation::DensePerspective(i0) => {
            let imgs: Vec<&DensePerspectiveImage<T>> = parts
                .iter()
                .map(|p| if let Representation::DensePerspective(i) = p { i } else { unreachable!() })
                .collect();
            if imgs.iter().any(|i| i.layout() != i0.layout()) {
                return Err(PcrepError::SpecMismatch("range images differ in layout".into()));
            }
            let n = i0.pixel_count();
            let rows = (0..n).map(|f| imgs.iter().map(move |i| i.pixel(f)));
            let data = combine_rows(rows, n, out_c, mode);
            let mut mask = vec![false; n];
            let mut coords = vec![[T::zero(); 3]; n];
            for f in 0..n {
                if let Some(i) = imgs.iter().find(|i| i.mask()[f]) {
                    mask[f] = true;
                    coords[f] = i.coords()[f];
                }
            }
            Ok(Representation::DensePerspective(DensePerspectiveImage::from_parts(
                i0.layout().clone(),
                i0.batch(),
                out_c,
                data,
                coords,
                mask,
            )?))
        }
        Representation::SparsePillar(g0) | Representation::Voxel(g0) => {
            let grids: Vec<&SparseGrid<T>> = parts
                .iter()
                .map(|p| match p {
                    Representation::SparsePillar(g) | Representation::Voxel(g) => g,
                    _ => unreachable!(),
                })
                .collect();
            if grids.iter().any(|g| g.spec() != g0.spec()) {
                return Err(PcrepError::SpecMismatch("sparse grids differ in spec".into()));
            }
            let (cells, data) = union_rows(grids.iter().map(|g| (g.cells(), g.features())), out_c, mode);
            let n = cells.len();
            let merged = SparseGrid::from_sorted_unchecked(g0.spec().clone(), g0.batch(), cells, Matrix::from_vec(n, out_c, data)?);
            Ok(if matches!(first, Representation::Voxel(_)) {
                Representation::Voxel(merged)
            } else {
                Representation::SparsePillar(merged)
            })
        }
        Representation::SparsePerspective(i0) => {
            let imgs: Vec<&SparseImage<T>> = parts
                .iter()
                .map(|p| if let Representation::SparsePerspective(i) = p { i } else { unreachable!() })
                .collect();
            if imgs.iter().any(|i| i.layout() != i0.layout() || i.level() != i0.level()) {
                return Err(PcrepError::SpecMismatch("sparse images differ in layout".into()));
            }
            let (cells, data) = union_rows(imgs.iter().map(|i| (i.cells(), i.features())), out_c, mode);
            let index: Vec<HashMap<Cell, usize>> =
                imgs.iter().map(|i| i.cells().iter().enumerate().map(|(r, &c)| (c, r)).collect()).collect();
            let coords = cells
                .iter()
                .map(|c| {
                    imgs.iter()
                        .zip(&index)
                        .find_map(|(i, idx)| idx.get(c).map(|&r| i.coords()[r]))
                        .expect("cell comes from some part")
                })
                .collect();
            let n = cells.len();
            Ok(Representation::SparsePerspective(SparseImage::from_sorted_unchecked(
                i0.layout().clone(),
                i0.level(),
                i0.batch(),
                cells,
                coords,
                Matrix::from_vec(n, out_c, data)?,
            )))
        }
    }
}

fn as_points<T: Real>(p: &Representation<T>) -> &PointSet<T> {
    match p {
        Representation::Point(s) => s,
        _ => unreachable!("kinds checked"),
    }
}

fn combine_rows<'a, T: Real, R, I>(rows: R, n: usize, out_c: usize, mode: MergeMode) -> Vec<T>
where
    R: Iterator<Item = I>,
    I: Iterator<Item = &'a [T]>,
{
    let mut data = Vec::with_capacity(n * out_c);
    for parts in rows {
        match mode {
            MergeMode::Concat => parts.for_each(|r| data.extend_from_slice(r)),
            MergeMode::Sum => {
                let start = data.len();
                data.resize(start + out_c, T::zero());
                for r in parts {
                    for (a, &v) in data[start..].iter_mut().zip(r) {
                        *a += v;
                    }
                }
            }
        }
    }
    data
}

fn union_rows<'a, T: Real + 'a>(
    parts: impl Iterator<Item = (&'a [Cell], &'a Matrix<T>)> + Clone,
    out_c: usize,
    mode: MergeMode,
) -> (Vec<Cell>, Vec<T>) {
    let cells: Vec<Cell> = parts.clone().flat_map(|(c, _)| c.iter().copied()).collect::<BTreeSet<_>>().into_iter().collect();
    let index: Vec<(HashMap<Cell, usize>, &Matrix<T>)> =
        parts.map(|(c, m)| (c.iter().enumerate().map(|(i, &c)| (c, i)).collect(), m)).collect();
    let mut data = Vec::with_capacity(cells.len() * out_c);
    for c in &cells {
        let start = data.len();
        match mode {
            MergeMode::Concat => {
                for (idx, m) in &index {
                    match idx.get(c) {
                        Some(&r) => data.extend_from_slice(m.row(r)),
                        None => data.resize(data.len() + m.cols(), T::zero()),
                    }
                }
            }
            MergeMode::Sum => {
                data.resize(start + out_c, T::zero());
                for (idx, m) in &index {
                    if let Some(&r) = idx.get(c) {
                        for (a, &v) in data[start..].iter_mut().zip(m.row(r)) {
                            *a += v;
                        }
                    }
                }
            }
        }
    }
    (cells, data)
}
