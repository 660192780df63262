use std::collections::HashMap;

use super::weights::{add_relu, axpy, concat_rows, relu_inplace, WeightSource};
use crate::arch::{Kernel, LayerSpec, Progression, SPARSE_DOWN_BLOCKS, SPARSE_UP_BLOCKS};
use crate::pcrep::Cell;
use crate::Real;

/// Active sites of one sparse level with their neighbour table.
pub(crate) struct Level {
    pub cells: Vec<Cell>,
    /// Mean coordinate of the base elements under each site (range images only).
    pub coords: Vec<[f64; 3]>,
    nbr: Vec<u32>,
    kvol: usize,
}

const NONE: u32 = u32::MAX;

/// Kernel offsets of a submanifold convolution.
fn offsets(use_z: bool) -> Vec<[i64; 3]> {
    let zs: &[i64] = if use_z { &[-1, 0, 1] } else { &[0] };
    let mut out = Vec::new();
    for dx in -1..=1 {
        for dy in -1..=1 {
            for &dz in zs {
                out.push([dx, dy, dz]);
            }
        }
    }
    out
}

impl Level {
    fn new(cells: Vec<Cell>, coords: Vec<[f64; 3]>, use_z: bool) -> Self {
        let index: HashMap<Cell, u32> = cells.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect();
        let offs = offsets(use_z);
        let mut nbr = Vec::with_capacity(cells.len() * offs.len());
        for c in &cells {
            for o in &offs {
                let (x, y, z) = (c.x as i64 + o[0], c.y as i64 + o[1], c.z as i64 + o[2]);
                let hit = if x < 0 || y < 0 || z < 0 {
                    None
                } else {
                    index.get(&Cell::new(c.batch, x as u32, y as u32, z as u32)).copied()
                };
                nbr.push(hit.unwrap_or(NONE));
            }
        }
        Self { cells, coords, nbr, kvol: offs.len() }
    }

    fn kvol(&self) -> usize {
        self.kvol
    }

    /// Submanifold convolution: output sites equal input sites.
    fn subm<T: Real>(&self, x: &[T], cin: usize, wt: &[T], cout: usize) -> Vec<T> {
        let kvol = self.kvol();
        let mut out = vec![T::zero(); self.cells.len() * cout];
        for i in 0..self.cells.len() {
            let o = &mut out[i * cout..(i + 1) * cout];
            for k in 0..kvol {
                let j = self.nbr[i * kvol + k];
                if j == NONE {
                    continue;
                }
                let xin = &x[j as usize * cin..(j as usize + 1) * cin];
                let wk = &wt[k * cin * cout..(k + 1) * cin * cout];
                for (ci, &v) in xin.iter().enumerate() {
                    if v != T::zero() {
                        axpy(o, v, &wk[ci * cout..(ci + 1) * cout]);
                    }
                }
            }
        }
        out
    }
}

/// Sparse U-Net result at its output level.
pub(crate) struct SparseOutput<T> {
    pub cells: Vec<Cell>,
    pub coords: Vec<[f64; 3]>,
    pub features: Vec<T>,
    pub level: u32,
}

/// Sparse 2D or 3D U-Net. `use_z` selects 3D kernels; `z_stride` the z downsampling.
pub(crate) fn unet_sparse<T: Real>(
    cells: Vec<Cell>,
    coords: Vec<[f64; 3]>,
    features: Vec<T>,
    cin: usize,
    layer: &LayerSpec,
    weights: &WeightSource<'_>,
) -> SparseOutput<T> {
    let Progression::DownUp(down, up) = layer.progression else { unreachable!("sparse family") };
    let (use_z, z_stride) = match layer.kernel {
        Some(Kernel::K333) => (true, 2),
        Some(Kernel::K331) => (false, 1),
        None => (false, 1),
    };
    let down_vol = if z_stride == 2 { 8 } else { 4 };
    let f = layer.width();
    let block = |lv: &Level, x: &mut Vec<T>, name: String| {
        let kv = lv.kvol();
        let mut r = lv.subm(x, f, &weights.draw(&format!("{name}.0"), kv, f, f), f);
        relu_inplace(&mut r);
        let r = lv.subm(&r, f, &weights.draw(&format!("{name}.1"), kv, f, f), f);
        add_relu(x, &r);
    };

    let mut levels = vec![Level::new(cells, coords, use_z)];
    let kv0 = levels[0].kvol();
    let mut x = levels[0].subm(&features, cin, &weights.draw("stem", kv0, cin, f), f);
    relu_inplace(&mut x);
    let mut skips: Vec<Vec<T>> = Vec::new();
    for l in 0..=down as usize {
        if l > 0 {
            let fine = &levels[l - 1];
            let parents: Vec<Cell> = fine.cells.iter().map(|c| c.parent(z_stride)).collect();
            let mut coarse: Vec<Cell> = parents.clone();
            coarse.sort_unstable();
            coarse.dedup();
            let index: HashMap<Cell, usize> = coarse.iter().enumerate().map(|(i, &c)| (c, i)).collect();
            let mut sums = vec![[0.0f64; 3]; coarse.len()];
            let mut counts = vec![0usize; coarse.len()];
            let wt = weights.draw(&format!("down{l}"), down_vol, f, f);
            let mut out = vec![T::zero(); coarse.len() * f];
            for (i, (c, p)) in fine.cells.iter().zip(&parents).enumerate() {
                let j = index[p];
                let k = ((c.x & 1) * 2 + (c.y & 1)) as usize * (down_vol / 4) + if z_stride == 2 { (c.z & 1) as usize } else { 0 };
                let o = &mut out[j * f..(j + 1) * f];
                for (ci, &v) in x[i * f..(i + 1) * f].iter().enumerate() {
                    if v != T::zero() {
                        axpy(o, v, &wt[(k * f + ci) * f..(k * f + ci + 1) * f]);
                    }
                }
                if let Some(p) = fine.coords.get(i) {
                    for a in 0..3 {
                        sums[j][a] += p[a];
                    }
                    counts[j] += 1;
                }
            }
            let coords = if fine.coords.is_empty() {
                Vec::new()
            } else {
                sums.iter().zip(&counts).map(|(s, &n)| [s[0] / n as f64, s[1] / n as f64, s[2] / n as f64]).collect()
            };
            relu_inplace(&mut out);
            skips.push(std::mem::replace(&mut x, out));
            levels.push(Level::new(coarse, coords, use_z));
        }
        for k in 0..SPARSE_DOWN_BLOCKS[l.min(2)] {
            block(&levels[l], &mut x, format!("block{l}.{k}"));
        }
    }
    let mut level = down as usize;
    for _ in 0..up {
        let target = level - 1;
        let fine = &levels[target];
        let coarse = &levels[level];
        let index: HashMap<Cell, usize> = coarse.cells.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let mut lifted = Vec::with_capacity(fine.cells.len() * f);
        for c in &fine.cells {
            let j = index[&c.parent(z_stride)];
            lifted.extend_from_slice(&x[j * f..(j + 1) * f]);
        }
        let skip = skips.pop().expect("skip per level");
        let cat = concat_rows(&lifted, f, &skip, f);
        let wt = weights.draw(&format!("fuse{target}"), 1, 2 * f, f);
        let mut fused = vec![T::zero(); fine.cells.len() * f];
        for i in 0..fine.cells.len() {
            let o = &mut fused[i * f..(i + 1) * f];
            for (ci, &v) in cat[i * 2 * f..(i + 1) * 2 * f].iter().enumerate() {
                if v != T::zero() {
                    axpy(o, v, &wt[ci * f..(ci + 1) * f]);
                }
            }
        }
        relu_inplace(&mut fused);
        x = fused;
        for k in 0..SPARSE_UP_BLOCKS[target.min(2)] {
            block(fine, &mut x, format!("up{target}.{k}"));
        }
        level = target;
    }
    let out = levels.swap_remove(level);
    SparseOutput { cells: out.cells, coords: out.coords, features: x, level: level as u32 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sites() -> Vec<Cell> {
        vec![Cell::new(0, 0, 0, 0), Cell::new(0, 1, 0, 0), Cell::new(0, 2, 3, 0), Cell::new(0, 5, 5, 0)]
    }

    #[test]
    fn submanifold_keeps_site_set_and_down_unions_parents() {
        let layer = LayerSpec::unet2d_sparse(4.0, 2, 0);
        let out = unet_sparse(sites(), Vec::new(), vec![1.0f64; 8], 2, &layer, &WeightSource::new(0, "s"));
        assert_eq!(out.level, 2);
        // parents at level 2: (0,0), (0,0), (0,0), (1,1)
        assert_eq!(out.cells, vec![Cell::new(0, 0, 0, 0), Cell::new(0, 1, 1, 0)]);
        assert_eq!(out.features.len(), 2 * 4);
    }

    #[test]
    fn full_up_path_returns_base_sites() {
        let layer = LayerSpec::unet3d_sparse(3.0, 2, 2, Kernel::K333);
        let cells = vec![Cell::new(0, 0, 0, 0), Cell::new(0, 1, 1, 1), Cell::new(0, 4, 0, 3)];
        let out = unet_sparse(cells.clone(), Vec::new(), vec![0.5f32; 3], 1, &layer, &WeightSource::new(0, "v"));
        assert_eq!(out.level, 0);
        assert_eq!(out.cells, cells);
        assert!(out.features.iter().all(|v| *v >= 0.0));
    }
}
