use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, Calibration, SceneStats};
use crate::arch::{
    validate, ArchGenome, Branch, Family, Kernel, Profile, Progression, DENSE_UNET_BLOCKS, SPARSE_DOWN_BLOCKS,
    SPARSE_UP_BLOCKS,
};
use crate::pcrep::{merged_channels, Extent, Kind, Shape, View};

/// Bytes per stored scalar in the latency proxy.
const SCALAR_BYTES: u64 = 4;

/// One convolution or dense layer of a branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub name: String,
    pub kernel_volume: u64,
    pub cin: u64,
    pub cout: u64,
    /// Output sites the layer is evaluated at.
    pub sites: u64,
    pub params: u64,
    pub flops: u64,
    /// Output tensor bytes when the layer runs on a dense tensor, else 0.
    pub dense_bytes: u64,
}

impl LayerCost {
    fn new(name: String, kernel_volume: u64, cin: u64, cout: u64, sites: u64, dense: bool) -> Self {
        Self {
            name,
            kernel_volume,
            cin,
            cout,
            sites,
            params: kernel_volume * cin * cout,
            flops: 2 * kernel_volume * cin * cout * sites,
            dense_bytes: if dense { SCALAR_BYTES * sites * cout } else { 0 },
        }
    }

    /// Whether the layer is the input stem, whose cost is linear in the base width.
    pub fn is_stem(&self) -> bool {
        self.name == "stem" || self.name == "dense0"
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchCost {
    pub id: String,
    pub stage: usize,
    pub kind: Kind,
    /// Shape after transforming and merging the inputs.
    pub input: Shape,
    pub output: Shape,
    /// Estimated active input elements at base resolution.
    pub input_elements: u64,
    /// Estimated active output elements.
    pub output_elements: u64,
    /// Estimated active sites per sparse U-Net level (empty for other families).
    pub level_sites: Vec<u64>,
    /// Element counts depend on the foreground gate and are estimates only.
    pub after_gate: bool,
    pub layers: Vec<LayerCost>,
    pub params: u64,
    pub flops: u64,
    pub dense_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub branches: Vec<BranchCost>,
    pub total_params: u64,
    pub total_flops: u64,
    pub max_dense_bytes: u64,
    pub latency_ms: f64,
}

impl CostReport {
    pub fn branch(&self, id: &str) -> Option<&BranchCost> {
        self.branches.iter().find(|b| b.id == id)
    }

    /// Output shapes keyed by branch id.
    pub fn shapes(&self) -> HashMap<String, Shape> {
        self.branches.iter().map(|b| (b.id.clone(), b.output)).collect()
    }
}

/// Per-branch shapes and costs under the default calibration.
pub fn infer_shapes(g: &ArchGenome, stats: &SceneStats) -> Result<CostReport, AnalysisError> {
    count_cost(g, stats, &Calibration::default())
}

/// Per-branch shapes, sparsity estimates, parameters, FLOPs and proxy latency.
///
/// Sparse level sizes follow the occupancy decay held by `stats`; `cal` only
/// supplies the latency constants.
pub fn count_cost(g: &ArchGenome, stats: &SceneStats, cal: &Calibration) -> Result<CostReport, AnalysisError> {
    let report = validate(g, Profile::Framework);
    if !report.ok() {
        return Err(AnalysisError::InvalidGenome(report));
    }
    let decay = stats.occupancy_decay();
    let gate = g.gated_branch().map(|b| (g.branch(&b.id).expect("present").0, b.id.clone()));
    let frame = stats.frame();
    let mut outputs: HashMap<&str, (Shape, u64)> = HashMap::new();
    let mut branches = Vec::new();

    for (s, stage) in g.stages.iter().enumerate() {
        let after_gate = gate.as_ref().is_some_and(|(gs, _)| s > *gs);
        let scale = |n: u64| if after_gate { (n as f64 * stats.keep_fraction()).ceil() as u64 } else { n };
        let ref_points = scale(stats.points() as u64);
        for b in stage {
            let kind = b.kind().expect("validated");
            let in_channels: Vec<usize> = if s == 0 {
                vec![stats.channels()]
            } else {
                b.inputs.iter().map(|id| outputs[id.as_str()].0.channels).collect()
            };
            let cin = merged_channels(&in_channels, b.merge)?;
            let (base_extent, base_cells, input_elements) = match kind.view() {
                View::Point => (Extent::Points(ref_points as usize), ref_points, ref_points),
                View::Pillar | View::Voxel => {
                    let spec = frame.grid_for(b)?;
                    let cells = spec.cells_per_batch() as u64;
                    let occ = scale(stats.occupied_cells(&spec) as u64);
                    let active = if kind.is_dense() { cells } else { occ };
                    (Extent::grid(&spec), cells, active)
                }
                View::Perspective => {
                    let l = &frame.layout;
                    (Extent::Image { height: l.height(), width: l.width() }, (l.height() * l.width()) as u64,
                        scale(stats.valid_pixels() as u64))
                }
            };
            let input = Shape { kind, batch: 1, extent: base_extent, channels: cin };
            let plan = layer_plan(b, kind, cin as u64, base_cells, input_elements, decay, frame_levels(b, kind, stats)?);
            let f = b.layer.width();
            let mut output = Shape { kind, batch: 1, extent: plan.extent, channels: f };
            let mut output_elements = plan.output_elements;
            if gate.as_ref().is_some_and(|(_, id)| *id == b.id) {
                output.kind = Kind::PerspectiveSparse;
                output_elements = (output_elements as f64 * stats.keep_fraction()).ceil() as u64;
            }
            let params = plan.layers.iter().map(|l| l.params).sum::<u64>() + plan.norm_params;
            let flops = plan.layers.iter().map(|l| l.flops).sum();
            let dense_bytes = plan.layers.iter().map(|l| l.dense_bytes).max().unwrap_or(0);
            outputs.insert(b.id.as_str(), (output, output_elements));
            branches.push(BranchCost {
                id: b.id.clone(),
                stage: s,
                kind,
                input,
                output,
                input_elements,
                output_elements,
                level_sites: plan.level_sites,
                after_gate,
                layers: plan.layers,
                params,
                flops,
                dense_bytes,
            });
        }
    }
    let total_params = branches.iter().map(|b| b.params).sum();
    let total_flops = branches.iter().map(|b| b.flops).sum();
    let max_dense_bytes = branches.iter().map(|b| b.dense_bytes).max().unwrap_or(0);
    Ok(CostReport { branches, total_params, total_flops, max_dense_bytes, latency_ms: cal.latency_ms(total_flops, max_dense_bytes) })
}

/// Cell counts and extents of a branch's frame at each downsample level.
struct Levels {
    cells: Vec<u64>,
    extents: Vec<Extent>,
}

fn frame_levels(b: &Branch, kind: Kind, stats: &SceneStats) -> Result<Levels, AnalysisError> {
    let depth = match b.layer.progression {
        Progression::Scales(s) => s.saturating_sub(1),
        Progression::DownUp(d, _) => d,
        Progression::Repeats(_) => 0,
    };
    let mut cells = Vec::new();
    let mut extents = Vec::new();
    match kind.view() {
        View::Point => {}
        View::Pillar | View::Voxel => {
            let z_stride = b.layer.kernel.map_or(1, Kernel::z_stride);
            let mut spec = stats.frame().grid_for(b)?;
            for _ in 0..=depth {
                cells.push(spec.cells_per_batch() as u64);
                extents.push(Extent::grid(&spec));
                spec = spec.coarsen(z_stride);
            }
        }
        View::Perspective => {
            for l in 0..=depth {
                let (height, width) = stats.frame().layout.extent_at(l);
                cells.push((height * width) as u64);
                extents.push(Extent::Image { height, width });
            }
        }
    }
    Ok(Levels { cells, extents })
}

struct Plan {
    layers: Vec<LayerCost>,
    norm_params: u64,
    extent: Extent,
    output_elements: u64,
    level_sites: Vec<u64>,
}

fn layer_plan(b: &Branch, kind: Kind, cin: u64, base_cells: u64, active0: u64, decay: f64, levels: Levels) -> Plan {
    let f = b.layer.width() as u64;
    let mut layers = Vec::new();
    match (b.layer.family, b.layer.progression) {
        (Family::PointMlp, Progression::Repeats(n)) => {
            let mut c = cin;
            for i in 0..n {
                layers.push(LayerCost::new(format!("dense{i}"), 1, c, f, active0, false));
                c = f;
            }
            Plan {
                layers,
                norm_params: 2 * f * n as u64,
                extent: Extent::Points(active0 as usize),
                output_elements: active0,
                level_sites: Vec::new(),
            }
        }
        (Family::Unet2dDense, Progression::Scales(s)) => {
            let ch: Vec<u64> = b.layer.dense_unet_channels().into_iter().map(|c| c as u64).collect();
            let s = s as usize;
            layers.push(LayerCost::new("stem".into(), 9, cin, ch[0], levels.cells[0], true));
            for l in 0..s {
                if l > 0 {
                    layers.push(LayerCost::new(format!("down{l}"), 9, ch[l - 1], ch[l], levels.cells[l], true));
                }
                for k in 0..DENSE_UNET_BLOCKS[l.min(4)] {
                    for j in 0..2 {
                        layers.push(LayerCost::new(format!("block{l}.{k}.{j}"), 9, ch[l], ch[l], levels.cells[l], true));
                    }
                }
            }
            for l in (1..s).rev() {
                layers.push(LayerCost::new(format!("fuse{}", l - 1), 1, ch[l] + ch[l - 1], ch[l - 1], levels.cells[l - 1], true));
            }
            let output_elements = if kind.view() == View::Perspective { active0 } else { base_cells };
            Plan { layers, norm_params: 0, extent: levels.extents[0], output_elements, level_sites: Vec::new() }
        }
        (Family::Unet2dSparse | Family::Unet3dSparse, Progression::DownUp(d, u)) => {
            let (kvol, down_vol) = match b.layer.kernel {
                Some(Kernel::K333) => (27, 8),
                Some(Kernel::K331) | None => (9, 4),
            };
            let sites: Vec<u64> = (0..=d as usize)
                .map(|l| {
                    if active0 == 0 {
                        0
                    } else {
                        ((active0 as f64 * decay.powi(l as i32)).round() as u64).clamp(1, levels.cells[l])
                    }
                })
                .collect();
            layers.push(LayerCost::new("stem".into(), kvol, cin, f, sites[0], false));
            for l in 0..=d as usize {
                if l > 0 {
                    layers.push(LayerCost::new(format!("down{l}"), down_vol, f, f, sites[l], false));
                }
                for k in 0..SPARSE_DOWN_BLOCKS[l.min(2)] {
                    for j in 0..2 {
                        layers.push(LayerCost::new(format!("block{l}.{k}.{j}"), kvol, f, f, sites[l], false));
                    }
                }
            }
            for step in 1..=u as usize {
                let l = d as usize - step;
                layers.push(LayerCost::new(format!("fuse{l}"), 1, 2 * f, f, sites[l], false));
                for k in 0..SPARSE_UP_BLOCKS[l.min(2)] {
                    for j in 0..2 {
                        layers.push(LayerCost::new(format!("up{l}.{k}.{j}"), kvol, f, f, sites[l], false));
                    }
                }
            }
            let out = (d - u) as usize;
            Plan { layers, norm_params: 0, extent: levels.extents[out], output_elements: sites[out], level_sites: sites }
        }
        _ => unreachable!("validated family/progression pairing"),
    }
}

pub const CSV_HEADER: &str = "branch,stage,kind,input_shape,output_shape,input_elements,output_elements,params,flops,dense_bytes";

/// One CSV row per branch.
pub fn write_csv<W: Write>(mut w: W, report: &CostReport) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for b in &report.branches {
        writeln!(
            w,
            "{},{},{},\"{}\",\"{}\",{},{},{},{},{}",
            b.id,
            b.stage + 1,
            b.kind,
            b.input,
            b.output,
            b.input_elements,
            b.output_elements,
            b.params,
            b.flops,
            b.dense_bytes
        )?;
    }
    Ok(())
}
