//! Architecture genomes: connected subsets of the S-stage view/format trellis.

mod document;
mod presets;
mod validate;

use serde::{Deserialize, Serialize};

pub use crate::pcrep::MergeMode;
use crate::pcrep::{Format, Kind, View};
pub use document::{deserialize, genome_hash, serialize, GenomeHash, SCHEMA};
pub use presets::{preset, LIDARNASNET_R, PRESET_NAMES};
pub use validate::{validate, Profile, Rule, ValidationReport, Violation};

/// Number of stages in the search space.
pub const SEARCH_STAGES: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum ArchError {
    #[error("malformed genome document: {0}")]
    MalformedDocument(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    PointMlp,
    Unet2dDense,
    Unet2dSparse,
    Unet3dSparse,
}

impl Family {
    /// The layer family that conforms to a view/format pair.
    pub fn for_kind(kind: Kind) -> Family {
        match kind {
            Kind::Point => Family::PointMlp,
            Kind::PillarDense | Kind::PerspectiveDense => Family::Unet2dDense,
            Kind::PillarSparse | Kind::PerspectiveSparse => Family::Unet2dSparse,
            Kind::Voxel => Family::Unet3dSparse,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Progression {
    /// Number of dense-normalization-ReLU layers (point family).
    Repeats(u32),
    /// Number of U-Net scales (dense 2D family).
    Scales(u32),
    /// Downsampling and upsampling scale counts (sparse families), `up <= down`.
    DownUp(u32, u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    Batch,
    Layer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// 3x3x3 kernel, 2x2x2 stride.
    K333,
    /// 3x3x1 kernel, 2x2x1 stride.
    K331,
}

impl Kernel {
    pub fn z_extent(self) -> u32 {
        match self {
            Kernel::K333 => 3,
            Kernel::K331 => 1,
        }
    }

    pub fn z_stride(self) -> u32 {
        match self {
            Kernel::K333 => 2,
            Kernel::K331 => 1,
        }
    }
}

/// One layer family instance with its searchable parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub family: Family,
    /// Base channel count `F`, kept real-valued so multiplicative mutations compose exactly.
    pub channels: f64,
    pub progression: Progression,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<Norm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Kernel>,
}

/// Dense U-Net channel multipliers per scale.
pub const DENSE_UNET_MULTIPLIERS: [usize; 5] = [1, 4, 8, 8, 16];
/// Residual blocks per dense U-Net scale (downsampling path).
pub const DENSE_UNET_BLOCKS: [usize; 5] = [1, 2, 2, 2, 2];
/// Residual blocks per sparse U-Net level on the downsampling path.
pub const SPARSE_DOWN_BLOCKS: [usize; 3] = [1, 2, 3];
/// Residual blocks per sparse U-Net level on the upsampling path.
pub const SPARSE_UP_BLOCKS: [usize; 3] = [0, 2, 2];

impl LayerSpec {
    pub fn point_mlp(channels: f64, repeats: u32, norm: Norm) -> Self {
        Self { family: Family::PointMlp, channels, progression: Progression::Repeats(repeats), norm: Some(norm), kernel: None }
    }

    pub fn unet2d_dense(channels: f64, scales: u32) -> Self {
        Self { family: Family::Unet2dDense, channels, progression: Progression::Scales(scales), norm: None, kernel: None }
    }

    pub fn unet2d_sparse(channels: f64, down: u32, up: u32) -> Self {
        Self { family: Family::Unet2dSparse, channels, progression: Progression::DownUp(down, up), norm: None, kernel: None }
    }

    pub fn unet3d_sparse(channels: f64, down: u32, up: u32, kernel: Kernel) -> Self {
        Self {
            family: Family::Unet3dSparse,
            channels,
            progression: Progression::DownUp(down, up),
            norm: None,
            kernel: Some(kernel),
        }
    }

    /// Default layer used when a view is added by mutation.
    pub fn default_for(kind: Kind, channels: f64) -> Self {
        match Family::for_kind(kind) {
            Family::PointMlp => Self::point_mlp(channels, 2, Norm::Batch),
            Family::Unet2dDense => Self::unet2d_dense(channels, 3),
            Family::Unet2dSparse => Self::unet2d_sparse(channels, 2, 2),
            Family::Unet3dSparse => Self::unet3d_sparse(channels, 2, 2, Kernel::K333),
        }
    }

    /// Materialized integer width `F = round(channels)`, at least 1.
    pub fn width(&self) -> usize {
        (self.channels.round().max(1.0)) as usize
    }

    /// Output channel count of the layer.
    pub fn output_channels(&self) -> usize {
        self.width()
    }

    /// Per-scale channel counts of the dense U-Net, `[F, 4F, 8F, 8F, 16F]` truncated to the scale count.
    pub fn dense_unet_channels(&self) -> Vec<usize> {
        let scales = match self.progression {
            Progression::Scales(s) => s as usize,
            _ => 1,
        };
        let f = self.width();
        (0..scales).map(|l| f * DENSE_UNET_MULTIPLIERS[l.min(4)]).collect()
    }

    /// Output downsample level of a sparse U-Net, `down - up`.
    pub fn output_level(&self) -> u32 {
        match self.progression {
            Progression::DownUp(d, u) => d.saturating_sub(u),
            _ => 0,
        }
    }
}

pub type BranchId = String;

/// One (view, format, layer) node of a stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: BranchId,
    pub view: View,
    #[serde(default)]
    pub format: Option<Format>,
    /// Cubic (voxel) or square (pillar) cell edge in meters.
    #[serde(default)]
    pub resolution_m: Option<f64>,
    /// Optional per-axis cell size override, scaled together with `resolution_m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution_axes: Option<[f64; 3]>,
    pub layer: LayerSpec,
    #[serde(default)]
    pub inputs: Vec<BranchId>,
    #[serde(default)]
    pub merge: MergeMode,
}

impl Branch {
    pub fn new(id: impl Into<BranchId>, kind: Kind, layer: LayerSpec) -> Self {
        let resolution_m = matches!(kind.view(), View::Pillar | View::Voxel).then_some(0.32);
        Self {
            id: id.into(),
            view: kind.view(),
            format: kind.format(),
            resolution_m,
            resolution_axes: None,
            layer,
            inputs: Vec::new(),
            merge: MergeMode::Concat,
        }
    }

    pub fn with_inputs(mut self, inputs: &[&str]) -> Self {
        self.inputs = inputs.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_resolution(mut self, r: f64) -> Self {
        self.resolution_m = Some(r);
        self
    }

    pub fn kind(&self) -> Option<Kind> {
        Kind::from_parts(self.view, self.format)
    }

    /// Grid cell size in meters (per axis), when the view is gridded.
    pub fn cell_size(&self) -> Option<[f64; 3]> {
        let r = self.resolution_m?;
        Some(self.resolution_axes.unwrap_or([r, r, r]))
    }

    pub fn uses_grid(&self) -> bool {
        matches!(self.view, View::Pillar | View::Voxel)
    }

    pub fn scale_resolution(&mut self, factor: f64) {
        if let Some(r) = &mut self.resolution_m {
            *r *= factor;
        }
        if let Some(axes) = &mut self.resolution_axes {
            for a in axes.iter_mut() {
                *a *= factor;
            }
        }
    }
}

/// An S-stage trellis subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchGenome {
    pub stages: Vec<Vec<Branch>>,
    /// Gate the first perspective branch's output with foreground segmentation.
    #[serde(default)]
    pub foreground_seg: bool,
    pub head_attach: BranchId,
}

impl ArchGenome {
    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn branch(&self, id: &str) -> Option<(usize, &Branch)> {
        self.stages
            .iter()
            .enumerate()
            .find_map(|(s, bs)| bs.iter().find(|b| b.id == id).map(|b| (s, b)))
    }

    pub fn branches(&self) -> impl Iterator<Item = (usize, &Branch)> {
        self.stages.iter().enumerate().flat_map(|(s, bs)| bs.iter().map(move |b| (s, b)))
    }

    /// The branch after which foreground gating applies: the first perspective
    /// branch in stage order, when gating is enabled.
    pub fn gated_branch(&self) -> Option<&Branch> {
        if !self.foreground_seg {
            return None;
        }
        self.stages.iter().flatten().find(|b| b.view == View::Perspective)
    }

    /// Id not used by any branch, built from `stem`.
    pub fn fresh_id(&self, stem: &str) -> BranchId {
        if self.branch(stem).is_none() {
            return stem.to_string();
        }
        (2..).map(|i| format!("{stem}.{i}")).find(|id| self.branch(id).is_none()).expect("unbounded")
    }

    /// Presence indicator per (view, stage), views in `View::ALL` order, stage-major within a view.
    pub fn presence(&self) -> Vec<[bool; 4]> {
        self.stages
            .iter()
            .map(|bs| {
                let mut p = [false; 4];
                for b in bs {
                    p[b.view.index()] = true;
                }
                p
            })
            .collect()
    }
}
