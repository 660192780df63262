//! Point-cloud representations for every view/format combination and the
//! lightweight, learning-free transforms between them.

mod boxes;
mod gate;
mod grid;
pub mod io;
mod layout;
mod merge;
mod transform;
mod types;

use serde::{Deserialize, Serialize};

pub use boxes::{wrap_angle, Box3D};
pub use gate::{foreground_gate, DEFAULT_KEEP_FRACTION};
pub use grid::{cell_centers, Cell, GridSpec};
pub use layout::RangeLayout;
pub use merge::{merge, merged_channels, MergeMode};
pub use transform::{transform, TransformTarget};
pub use types::{
    DensePerspectiveImage, DensePillarGrid, Extent, Matrix, PointSet, Representation, Shape, SparseGrid, SparseImage,
};

#[derive(Debug, thiserror::Error)]
pub enum PcrepError {
    #[error("unsupported transform {src} -> {dst}")]
    UnsupportedTransform { src: Kind, dst: Kind },
    #[error("spec mismatch: {0}")]
    SpecMismatch(String),
    #[error("cannot merge representations of different kinds")]
    MixedViews,
    #[error("sum merge needs equal channels, got {0:?}")]
    ChannelMismatch(Vec<usize>),
    #[error("expected a perspective representation, got {0}")]
    WrongView(Kind),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("malformed point-cloud file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Point,
    Pillar,
    Voxel,
    Perspective,
}

impl View {
    pub const ALL: [View; 4] = [View::Point, View::Pillar, View::Voxel, View::Perspective];

    /// Formats this view can be stored in; empty for the point view.
    pub fn formats(self) -> &'static [Format] {
        match self {
            View::Point => &[],
            View::Voxel => &[Format::Sparse],
            View::Pillar | View::Perspective => &[Format::Dense, Format::Sparse],
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            View::Point => "point",
            View::Pillar => "pillar",
            View::Voxel => "voxel",
            View::Perspective => "perspective",
        }
    }
}

impl std::fmt::Display for View {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Dense,
    Sparse,
}

/// The six view/format combinations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Point,
    PillarDense,
    PillarSparse,
    Voxel,
    PerspectiveDense,
    PerspectiveSparse,
}

impl Kind {
    pub const ALL: [Kind; 6] = [
        Kind::Point,
        Kind::PillarDense,
        Kind::PillarSparse,
        Kind::Voxel,
        Kind::PerspectiveDense,
        Kind::PerspectiveSparse,
    ];

    /// Combines a view with an optional format; `None` when the pair is not representable.
    pub fn from_parts(view: View, format: Option<Format>) -> Option<Kind> {
        match (view, format) {
            (View::Point, None) => Some(Kind::Point),
            (View::Pillar, Some(Format::Dense)) => Some(Kind::PillarDense),
            (View::Pillar, Some(Format::Sparse)) => Some(Kind::PillarSparse),
            (View::Voxel, Some(Format::Sparse)) => Some(Kind::Voxel),
            (View::Perspective, Some(Format::Dense)) => Some(Kind::PerspectiveDense),
            (View::Perspective, Some(Format::Sparse)) => Some(Kind::PerspectiveSparse),
            _ => None,
        }
    }

    pub fn view(self) -> View {
        match self {
            Kind::Point => View::Point,
            Kind::PillarDense | Kind::PillarSparse => View::Pillar,
            Kind::Voxel => View::Voxel,
            Kind::PerspectiveDense | Kind::PerspectiveSparse => View::Perspective,
        }
    }

    pub fn format(self) -> Option<Format> {
        match self {
            Kind::Point => None,
            Kind::PillarDense | Kind::PerspectiveDense => Some(Format::Dense),
            Kind::PillarSparse | Kind::Voxel | Kind::PerspectiveSparse => Some(Format::Sparse),
        }
    }

    pub fn is_sparse(self) -> bool {
        self.format() == Some(Format::Sparse)
    }

    pub fn is_dense(self) -> bool {
        self.format() == Some(Format::Dense)
    }

    /// Whether `self -> dst` is implemented. Pillar never feeds voxel, and
    /// voxel only feeds the pillar view (or itself).
    pub fn supports(self, dst: Kind) -> bool {
        !matches!(
            (self.view(), dst.view()),
            (View::Pillar, View::Voxel) | (View::Voxel, View::Point | View::Perspective)
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Point => "point",
            Kind::PillarDense => "pillar_dense",
            Kind::PillarSparse => "pillar_sparse",
            Kind::Voxel => "voxel",
            Kind::PerspectiveDense => "perspective_dense",
            Kind::PerspectiveSparse => "perspective_sparse",
        }
    }
}

impl std::fmt::Display for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
