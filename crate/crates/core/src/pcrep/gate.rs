use super::transform::sparsify_image;
use super::{Matrix, PcrepError, Representation, SparseImage};
use crate::Real;

pub const DEFAULT_KEEP_FRACTION: f64 = 0.25;

/// Foreground gating surrogate: keeps the `ceil(keep_fraction * N)` valid
/// pixels with the largest feature L2 norm. Ties go to the smaller
/// `(batch, row, col)` index. The result is a sparse range image in index order.
pub fn foreground_gate<T: Real>(rep: &Representation<T>, keep_fraction: f64) -> Result<Representation<T>, PcrepError> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(PcrepError::InvalidData(format!("keep_fraction must be in (0, 1], got {keep_fraction}")));
    }
    let sparse = match rep {
        Representation::DensePerspective(img) => sparsify_image(img),
        Representation::SparsePerspective(img) => img.clone(),
        other => return Err(PcrepError::WrongView(other.kind())),
    };
    let n = sparse.len();
    let keep = ((keep_fraction * n as f64).ceil() as usize).min(n);
    let norms: Vec<f64> = (0..n)
        .map(|i| sparse.features().row(i).iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    // rows are already in index order, so a stable sort breaks ties by index
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let mut kept = order[..keep].to_vec();
    kept.sort_unstable();

    let c = sparse.channels();
    let mut data = Vec::with_capacity(keep * c);
    for &i in &kept {
        data.extend_from_slice(sparse.features().row(i));
    }
    Ok(Representation::SparsePerspective(SparseImage::from_sorted_unchecked(
        sparse.layout().clone(),
        sparse.level(),
        sparse.batch(),
        kept.iter().map(|&i| sparse.cells()[i]).collect(),
        kept.iter().map(|&i| sparse.coords()[i]).collect(),
        Matrix::from_vec(keep, c, data)?,
    )))
}
