//! Reference forward executor with deterministically seeded weights, and the
//! coverage quality surrogate built on it.

mod dense;
mod sparse;
mod weights;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::arch::{validate, ArchGenome, Branch, Family, Kernel, Profile, ValidationReport};
use crate::frame::Frame;
use crate::pcrep::{
    foreground_gate, merge, transform, Box3D, Cell, DensePillarGrid, Matrix, PcrepError,
    PointSet, Representation, Shape, SparseGrid, SparseImage, TransformTarget, View, DEFAULT_KEEP_FRACTION,
};
use crate::scalar::{from_f64_3, to_f64_3};
use crate::Real;
use dense::Tensor;
use weights::{relu_inplace, WeightSource};

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("invalid genome: {}", .0.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "))]
    InvalidGenome(ValidationReport),
    #[error("scene has no points")]
    EmptyScene,
    #[error(transparent)]
    Pcrep(#[from] PcrepError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecConfig {
    pub seed: u64,
    /// Fraction of valid pixels the foreground gate keeps.
    pub keep_fraction: f64,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self { seed: 0, keep_fraction: DEFAULT_KEEP_FRACTION }
    }
}

/// Outputs of every branch in execution order.
#[derive(Clone, Debug)]
pub struct ForwardOutput<T> {
    pub branches: Vec<(String, Representation<T>)>,
    pub head: String,
    /// Scene points still referenced after the foreground gate (all points when ungated).
    pub reference_points: usize,
}

impl<T: Real> ForwardOutput<T> {
    pub fn get(&self, id: &str) -> Option<&Representation<T>> {
        self.branches.iter().find(|(b, _)| b == id).map(|(_, r)| r)
    }

    /// The representation the detection head attaches to.
    pub fn head(&self) -> &Representation<T> {
        self.get(&self.head).expect("head branch executed")
    }

    pub fn shapes(&self) -> Vec<(String, Shape)> {
        self.branches.iter().map(|(id, r)| (id.clone(), r.shape())).collect()
    }
}

/// Points every point-view transform gathers onto.
struct Reference<T> {
    coords: Vec<[T; 3]>,
    /// Indices into the scene, when a gate reduced the set.
    subset: Option<Vec<usize>>,
    scene_len: usize,
}

impl<T: Real> Reference<T> {
    /// Restricts a scene-aligned point set to the current reference.
    fn align(&self, rep: Representation<T>) -> Result<Representation<T>, PcrepError> {
        match (&self.subset, rep) {
            (Some(idx), Representation::Point(p)) if p.len() == self.scene_len && idx.len() != p.len() => {
                let c = p.channels();
                let mut data = Vec::with_capacity(idx.len() * c);
                for &i in idx {
                    data.extend_from_slice(p.features().row(i));
                }
                Ok(Representation::Point(PointSet::new(
                    idx.iter().map(|&i| p.coords()[i]).collect(),
                    Matrix::from_vec(idx.len(), c, data)?,
                )?))
            }
            (_, rep) => Ok(rep),
        }
    }
}

/// Runs every branch stage by stage: transform each input into the branch's
/// frame, merge, apply the layer family, and gate the first perspective
/// branch when the genome asks for foreground segmentation.
pub fn run_forward<T: Real>(
    g: &ArchGenome,
    scene: &PointSet<T>,
    frame: &Frame,
    cfg: &ExecConfig,
) -> Result<ForwardOutput<T>, ExecError> {
    let report = validate(g, Profile::Framework);
    if !report.ok() {
        return Err(ExecError::InvalidGenome(report));
    }
    if scene.is_empty() {
        return Err(ExecError::EmptyScene);
    }
    let gated = g.gated_branch().map(|b| b.id.clone());
    let scene_rep = Representation::Point(scene.clone());
    let mut reference = Reference { coords: scene.coords().to_vec(), subset: None, scene_len: scene.len() };
    let mut done: Vec<(String, Representation<T>)> = Vec::new();
    let mut pending_gate: Option<Vec<usize>> = None;

    for (s, stage) in g.stages.iter().enumerate() {
        if let Some(idx) = pending_gate.take() {
            reference.coords = idx.iter().map(|&i| scene.coords()[i]).collect();
            reference.subset = Some(idx);
        }
        let mut stage_out = Vec::with_capacity(stage.len());
        for b in stage {
            let kind = b.kind().expect("validated");
            let sources: Vec<&Representation<T>> = if s == 0 {
                vec![&scene_rep]
            } else {
                b.inputs.iter().map(|id| &done.iter().find(|(d, _)| d == id).expect("validated").1).collect()
            };
            let spec = if b.uses_grid() { Some(frame.grid_for(b)?) } else { None };
            let target = match kind.view() {
                View::Point => TransformTarget::PointsAt(&reference.coords),
                View::Pillar | View::Voxel => TransformTarget::Grid(spec.as_ref().expect("grid view")),
                View::Perspective => TransformTarget::Image(&frame.layout),
            };
            let parts = sources
                .into_iter()
                .map(|src| reference.align(src.clone()).and_then(|src| transform(&src, kind, target)))
                .collect::<Result<Vec<_>, _>>()?;
            let input = merge(&parts, b.merge)?;
            let mut out = apply_layer(b, input, cfg.seed)?;
            if gated.as_deref() == Some(b.id.as_str()) {
                out = foreground_gate(&out, cfg.keep_fraction)?;
                pending_gate = Some(retained_points(&out, scene, reference.subset.as_deref()));
            }
            stage_out.push((b.id.clone(), out));
        }
        done.extend(stage_out);
    }
    let reference_points = pending_gate.as_ref().map_or(reference.coords.len(), Vec::len);
    Ok(ForwardOutput { branches: done, head: g.head_attach.clone(), reference_points })
}

/// Scene indices (within the current reference) whose pixel survived the gate.
fn retained_points<T: Real>(gated: &Representation<T>, scene: &PointSet<T>, subset: Option<&[usize]>) -> Vec<usize> {
    let Representation::SparsePerspective(img) = gated else { unreachable!("gate emits sparse images") };
    let kept: HashSet<Cell> = img.cells().iter().copied().collect();
    let candidates: Box<dyn Iterator<Item = usize>> = match subset {
        Some(idx) => Box::new(idx.iter().copied()),
        None => Box::new(0..scene.len()),
    };
    candidates
        .filter(|&i| {
            img.layout()
                .project_at(to_f64_3(&scene.coords()[i]), img.level())
                .is_some_and(|(r, c)| kept.contains(&Cell::new(0, r, c, 0)))
        })
        .collect()
}

fn apply_layer<T: Real>(b: &Branch, input: Representation<T>, seed: u64) -> Result<Representation<T>, PcrepError> {
    let weights = WeightSource::new(seed, &b.id);
    let layer = &b.layer;
    let f = layer.width();
    match (layer.family, input) {
        (Family::PointMlp, Representation::Point(p)) => {
            let crate::arch::Progression::Repeats(n) = layer.progression else { unreachable!() };
            let rows = p.len();
            let mut x = p.features().as_slice().to_vec();
            let mut c = p.channels();
            for i in 0..n {
                let wt = weights.draw::<T>(&format!("dense{i}"), 1, c, f);
                let mut y = vec![T::zero(); rows * f];
                for r in 0..rows {
                    let o = &mut y[r * f..(r + 1) * f];
                    for (ci, &v) in x[r * c..(r + 1) * c].iter().enumerate() {
                        if v != T::zero() {
                            weights::axpy(o, v, &wt[ci * f..(ci + 1) * f]);
                        }
                    }
                }
                // inference-form normalization is the identity
                relu_inplace(&mut y);
                x = y;
                c = f;
            }
            Ok(Representation::Point(PointSet::new(p.coords().to_vec(), Matrix::from_vec(rows, f, x)?)?))
        }
        (Family::Unet2dDense, Representation::DensePillar(g)) => {
            let [xs, ys, _] = g.spec().extent();
            let per = xs * ys * g.channels();
            let mut data = Vec::with_capacity(g.batch() * xs * ys * f);
            for bi in 0..g.batch() {
                let slab = Tensor { h: xs, w: ys, c: g.channels(), data: g.features()[bi * per..(bi + 1) * per].to_vec() };
                data.extend(dense::unet2d_dense(slab, layer, &weights).data);
            }
            Ok(Representation::DensePillar(DensePillarGrid::from_vec(g.spec().clone(), g.batch(), f, data)?))
        }
        (Family::Unet2dDense, Representation::DensePerspective(mut img)) => {
            let (h, w) = (img.layout().height(), img.layout().width());
            let per = h * w * img.channels();
            let mut data = Vec::with_capacity(img.batch() * h * w * f);
            for bi in 0..img.batch() {
                let slab = Tensor { h, w, c: img.channels(), data: img.features()[bi * per..(bi + 1) * per].to_vec() };
                data.extend(dense::unet2d_dense(slab, layer, &weights).data);
            }
            img.replace_features(f, data);
            Ok(Representation::DensePerspective(img))
        }
        (Family::Unet2dSparse | Family::Unet3dSparse, Representation::SparsePillar(g) | Representation::Voxel(g)) => {
            let voxel = g.spec().is_voxel();
            let cin = g.channels();
            let out = sparse::unet_sparse(g.cells().to_vec(), Vec::new(), g.features().as_slice().to_vec(), cin, layer, &weights);
            let z_stride = layer.kernel.map_or(1, Kernel::z_stride);
            let mut spec = g.spec().clone();
            for _ in 0..out.level {
                spec = spec.coarsen(z_stride);
            }
            let rows = out.cells.len();
            let grid = SparseGrid::new(spec, g.batch(), out.cells, Matrix::from_vec(rows, f, out.features)?)?;
            Ok(if voxel { Representation::Voxel(grid) } else { Representation::SparsePillar(grid) })
        }
        (Family::Unet2dSparse, Representation::SparsePerspective(img)) => {
            let coords = img.coords().iter().map(to_f64_3).collect();
            let out = sparse::unet_sparse(img.cells().to_vec(), coords, img.features().as_slice().to_vec(), img.channels(), layer, &weights);
            let rows = out.cells.len();
            Ok(Representation::SparsePerspective(SparseImage::new(
                img.layout().clone(),
                img.level() + out.level,
                img.batch(),
                out.cells,
                out.coords.into_iter().map(from_f64_3).collect(),
                Matrix::from_vec(rows, f, out.features)?,
            )?))
        }
        (_, other) => Err(PcrepError::SpecMismatch(format!("layer family {:?} cannot run on {}", layer.family, other.kind()))),
    }
}

/// Fraction of `boxes` whose center lands on an occupied element of the head representation.
///
/// Dense pillar cells are always occupied; sparse cells and range-image pixels
/// must be present (and unmasked); point heads need a point inside the box.
/// An empty box list scores 0.
pub fn coverage_quality<T: Real>(
    g: &ArchGenome,
    scene: &PointSet<T>,
    frame: &Frame,
    boxes: &[Box3D],
    cfg: &ExecConfig,
) -> Result<f64, ExecError> {
    let out = run_forward(g, scene, frame, cfg)?;
    Ok(coverage_of(out.head(), boxes))
}

/// Coverage of `boxes` by the elements of `rep`.
pub fn coverage_of<T: Real>(rep: &Representation<T>, boxes: &[Box3D]) -> f64 {
    if boxes.is_empty() {
        return 0.0;
    }
    let occupied: HashSet<Cell> = match rep {
        Representation::SparsePillar(g) | Representation::Voxel(g) => g.cells().iter().copied().collect(),
        Representation::SparsePerspective(img) => img.cells().iter().copied().collect(),
        _ => HashSet::new(),
    };
    let covered = boxes
        .iter()
        .filter(|b| {
            let c = b.center;
            match rep {
                Representation::Point(p) => p.coords().iter().any(|q| b.contains(to_f64_3(q))),
                Representation::DensePillar(g) => g.spec().cell_of(c).is_some(),
                Representation::SparsePillar(g) | Representation::Voxel(g) => {
                    g.spec().cell_of(c).is_some_and(|[x, y, z]| occupied.contains(&Cell::new(0, x, y, z)))
                }
                Representation::DensePerspective(img) => img
                    .layout()
                    .project(c)
                    .is_some_and(|(r, col, _)| img.mask()[img.flat(Cell::new(0, r, col, 0))]),
                Representation::SparsePerspective(img) => img
                    .layout()
                    .project_at(c, img.level())
                    .is_some_and(|(r, col)| occupied.contains(&Cell::new(0, r, col, 0))),
            }
        })
        .count();
    covered as f64 / boxes.len() as f64
}

