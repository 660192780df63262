use super::{ArchError, ArchGenome, Branch, Kernel, LayerSpec, Norm};
use crate::pcrep::{Kind, MergeMode};

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 6] = ["rsn_car", "rsn_ped", "pointpillars_like", "lasernet_like", "mvf_like", "spv_like"];

/// Extra searched topology with a sparse pillar branch added to the first stage.
pub const LIDARNASNET_R: &str = "lidarnasnet_r";

fn genome(stages: Vec<Vec<Branch>>, foreground_seg: bool) -> ArchGenome {
    let head_attach = stages.last().and_then(|s| s.first()).map(|b| b.id.clone()).unwrap_or_default();
    ArchGenome { stages, foreground_seg, head_attach }
}

fn rsn(kernel: Kernel, resolution: f64, axes: Option<[f64; 3]>) -> ArchGenome {
    let persp = Branch::new("s1.perspective", Kind::PerspectiveDense, LayerSpec::unet2d_dense(16.0, 3));
    let point = Branch::new("s2.point", Kind::Point, LayerSpec::point_mlp(32.0, 1, Norm::Batch))
        .with_inputs(&["s1.perspective"]);
    let mut voxel = Branch::new("s3.voxel", Kind::Voxel, LayerSpec::unet3d_sparse(64.0, 2, 2, kernel))
        .with_inputs(&["s2.point"])
        .with_resolution(resolution);
    voxel.resolution_axes = axes;
    genome(vec![vec![persp], vec![point], vec![voxel]], true)
}

/// Builds a named reference topology. Every preset is search-space valid.
pub fn preset(name: &str) -> Result<ArchGenome, ArchError> {
    let g = match name {
        "rsn_car" => rsn(Kernel::K333, 0.2, None),
        "rsn_ped" => rsn(Kernel::K331, 0.1, Some([0.1, 0.1, 20.0])),
        "pointpillars_like" => {
            let p1 = Branch::new("s1.point", Kind::Point, LayerSpec::point_mlp(64.0, 1, Norm::Batch));
            let p2 = Branch::new("s2.point", Kind::Point, LayerSpec::point_mlp(64.0, 1, Norm::Batch))
                .with_inputs(&["s1.point"]);
            let pillar = Branch::new("s3.pillar", Kind::PillarDense, LayerSpec::unet2d_dense(32.0, 3))
                .with_inputs(&["s2.point"])
                .with_resolution(0.32);
            genome(vec![vec![p1], vec![p2], vec![pillar]], false)
        }
        "lasernet_like" => {
            let a = Branch::new("s1.perspective", Kind::PerspectiveDense, LayerSpec::unet2d_dense(8.0, 2));
            let b = Branch::new("s2.perspective", Kind::PerspectiveDense, LayerSpec::unet2d_dense(16.0, 3))
                .with_inputs(&["s1.perspective"]);
            let c = Branch::new("s3.perspective", Kind::PerspectiveDense, LayerSpec::unet2d_dense(16.0, 4))
                .with_inputs(&["s2.perspective"]);
            genome(vec![vec![a], vec![b], vec![c]], false)
        }
        "mvf_like" => {
            let persp = Branch::new("s1.perspective", Kind::PerspectiveDense, LayerSpec::unet2d_dense(16.0, 2));
            let point = Branch::new("s1.point", Kind::Point, LayerSpec::point_mlp(32.0, 1, Norm::Batch));
            let pillar = Branch::new("s1.pillar", Kind::PillarDense, LayerSpec::unet2d_dense(16.0, 2)).with_resolution(0.32);
            let fused = Branch::new("s2.point", Kind::Point, LayerSpec::point_mlp(64.0, 2, Norm::Batch))
                .with_inputs(&["s1.perspective", "s1.point", "s1.pillar"]);
            let head = Branch::new("s3.pillar", Kind::PillarDense, LayerSpec::unet2d_dense(32.0, 3))
                .with_inputs(&["s2.point"])
                .with_resolution(0.32);
            genome(vec![vec![persp, point, pillar], vec![fused], vec![head]], false)
        }
        "spv_like" => {
            let p1 = Branch::new("s1.point", Kind::Point, LayerSpec::point_mlp(32.0, 1, Norm::Batch));
            let p2 = Branch::new("s2.point", Kind::Point, LayerSpec::point_mlp(32.0, 2, Norm::Batch))
                .with_inputs(&["s1.point"]);
            let voxel = Branch::new("s2.voxel", Kind::Voxel, LayerSpec::unet3d_sparse(32.0, 1, 1, Kernel::K333))
                .with_inputs(&["s1.point"])
                .with_resolution(0.2);
            let head = Branch::new("s3.pillar", Kind::PillarSparse, LayerSpec::unet2d_sparse(64.0, 2, 2))
                .with_inputs(&["s2.point", "s2.voxel"])
                .with_resolution(0.32);
            genome(vec![vec![p1], vec![p2, voxel], vec![head]], false)
        }
        LIDARNASNET_R => {
            let mut g = rsn(Kernel::K333, 0.2, None);
            g.stages[0][0].layer.channels = 8.0;
            let pillar = Branch::new("s1.pillar", Kind::PillarSparse, LayerSpec::unet2d_sparse(16.0, 2, 2)).with_resolution(0.32);
            g.stages[0].push(pillar);
            g.stages[1][0].inputs.push("s1.pillar".into());
            g.stages[1][0].merge = MergeMode::Concat;
            g
        }
        other => return Err(ArchError::UnknownPreset(other.to_string())),
    };
    Ok(g)
}
