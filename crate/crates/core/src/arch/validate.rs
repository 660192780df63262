use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ArchGenome, Branch, Family, Progression, SEARCH_STAGES};
use crate::pcrep::{MergeMode, View};

/// Which rule set to check against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Structural rules only; any stage count.
    Framework,
    /// Framework rules plus stage count, final-stage, per-stage view and layer bounds.
    #[default]
    SearchSpace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    EmptyGenome,
    EmptyStage,
    DuplicateId,
    InvalidViewFormat,
    FamilyMismatch,
    InvalidLayer,
    InvalidResolution,
    MissingInputs,
    InputsOnFirstStage,
    UnknownInput,
    DuplicateInput,
    UnsupportedTransform,
    NoPillarToVoxel,
    VoxelFeedsOnlyPillar,
    SumChannelMismatch,
    Disconnected,
    HeadAttachInvalid,
    NonSearchStageCount,
    FinalStageNotSingle,
    DuplicateView,
    LayerOutOfBounds,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub branch: Option<String>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.branch {
            Some(id) => write!(f, "{} branch={}", self.rule, id),
            None => write!(f, "{} branch=-", self.rule),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, rule: Rule) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    fn push(&mut self, rule: Rule, branch: Option<&str>) {
        self.violations.push(Violation { rule, branch: branch.map(str::to_string) });
    }
}

/// Checks a genome against `profile`. Violations are returned as data.
pub fn validate(g: &ArchGenome, profile: Profile) -> ValidationReport {
    let mut r = ValidationReport::default();
    if g.stages.is_empty() {
        r.push(Rule::EmptyGenome, None);
        return r;
    }
    let search = profile == Profile::SearchSpace;
    if search && g.stages.len() != SEARCH_STAGES {
        r.push(Rule::NonSearchStageCount, None);
    }

    let mut seen = HashSet::new();
    for (_, b) in g.branches() {
        if !seen.insert(b.id.as_str()) {
            r.push(Rule::DuplicateId, Some(&b.id));
        }
    }

    for (s, stage) in g.stages.iter().enumerate() {
        if stage.is_empty() {
            r.push(Rule::EmptyStage, None);
            continue;
        }
        if search {
            let mut views = HashSet::new();
            for b in stage {
                if !views.insert(b.view) {
                    r.push(Rule::DuplicateView, Some(&b.id));
                }
            }
        }
        let prev: HashMap<&str, &Branch> =
            if s > 0 { g.stages[s - 1].iter().map(|b| (b.id.as_str(), b)).collect() } else { HashMap::new() };
        for b in stage {
            check_branch(b, search, &mut r);
            check_inputs(b, s, &prev, &mut r);
        }
    }

    for s in 0..g.stages.len().saturating_sub(1) {
        let used: HashSet<&str> = g.stages[s + 1].iter().flat_map(|b| b.inputs.iter().map(String::as_str)).collect();
        for b in &g.stages[s] {
            if !used.contains(b.id.as_str()) {
                r.push(Rule::Disconnected, Some(&b.id));
            }
        }
    }

    let last = g.stages.last().expect("nonempty");
    if search && last.len() != 1 {
        r.push(Rule::FinalStageNotSingle, None);
    }
    if !last.iter().any(|b| b.id == g.head_attach) {
        r.push(Rule::HeadAttachInvalid, Some(&g.head_attach));
    }
    r
}

fn check_branch(b: &Branch, search: bool, r: &mut ValidationReport) {
    let Some(kind) = b.kind() else {
        r.push(Rule::InvalidViewFormat, Some(&b.id));
        return;
    };
    let layer = &b.layer;
    if layer.family != Family::for_kind(kind) {
        r.push(Rule::FamilyMismatch, Some(&b.id));
    }
    let structural = layer.channels.is_finite()
        && layer.channels >= 0.5
        && match (layer.family, layer.progression) {
            (Family::PointMlp, Progression::Repeats(n)) => n >= 1 && layer.norm.is_some() && layer.kernel.is_none(),
            (Family::Unet2dDense, Progression::Scales(n)) => n >= 1 && layer.norm.is_none() && layer.kernel.is_none(),
            (Family::Unet2dSparse, Progression::DownUp(d, u)) => u <= d && layer.norm.is_none() && layer.kernel.is_none(),
            (Family::Unet3dSparse, Progression::DownUp(d, u)) => u <= d && layer.norm.is_none() && layer.kernel.is_some(),
            _ => false,
        };
    if !structural {
        r.push(Rule::InvalidLayer, Some(&b.id));
    } else if search {
        let bounded = match layer.progression {
            Progression::Repeats(n) | Progression::Scales(n) => n <= 5,
            Progression::DownUp(d, _) => d <= 2,
        };
        if !bounded {
            r.push(Rule::LayerOutOfBounds, Some(&b.id));
        }
    }
    if b.uses_grid() {
        let ok = b.cell_size().is_some_and(|c| c.iter().all(|v| v.is_finite() && *v > 0.0));
        if !ok {
            r.push(Rule::InvalidResolution, Some(&b.id));
        }
    }
}

fn check_inputs(b: &Branch, s: usize, prev: &HashMap<&str, &Branch>, r: &mut ValidationReport) {
    if s == 0 {
        if !b.inputs.is_empty() {
            r.push(Rule::InputsOnFirstStage, Some(&b.id));
        }
        return;
    }
    if b.inputs.is_empty() {
        r.push(Rule::MissingInputs, Some(&b.id));
        return;
    }
    let mut seen = HashSet::new();
    let mut widths = Vec::new();
    for id in &b.inputs {
        if !seen.insert(id.as_str()) {
            r.push(Rule::DuplicateInput, Some(&b.id));
            continue;
        }
        let Some(src) = prev.get(id.as_str()) else {
            r.push(Rule::UnknownInput, Some(&b.id));
            continue;
        };
        widths.push(src.layer.output_channels());
        match (src.view, b.view) {
            (View::Pillar, View::Voxel) => r.push(Rule::NoPillarToVoxel, Some(&b.id)),
            (View::Voxel, dst) if dst != View::Pillar => r.push(Rule::VoxelFeedsOnlyPillar, Some(&b.id)),
            _ => {
                if let (Some(sk), Some(dk)) = (src.kind(), b.kind()) {
                    if !sk.supports(dk) {
                        r.push(Rule::UnsupportedTransform, Some(&b.id));
                    }
                }
            }
        }
    }
    if b.merge == MergeMode::Sum && widths.windows(2).any(|w| w[0] != w[1]) {
        r.push(Rule::SumChannelMismatch, Some(&b.id));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{preset, Branch, LayerSpec, Norm, PRESET_NAMES};
    use crate::pcrep::Kind;

    fn two_stage(first: Kind, second: Kind) -> ArchGenome {
        let a = Branch::new("a", first, LayerSpec::default_for(first, 16.0));
        let b = Branch::new("b", second, LayerSpec::default_for(second, 16.0)).with_inputs(&["a"]);
        ArchGenome { stages: vec![vec![a], vec![b]], foreground_seg: false, head_attach: "b".into() }
    }

    #[test]
    fn presets_validate_under_both_profiles() {
        for name in PRESET_NAMES {
            let g = preset(name).unwrap();
            assert!(validate(&g, Profile::SearchSpace).ok(), "{name}: {:?}", validate(&g, Profile::SearchSpace));
            assert!(validate(&g, Profile::Framework).ok());
        }
    }

    #[test]
    fn pillar_to_voxel_edge_is_flagged() {
        let r = validate(&two_stage(Kind::PillarSparse, Kind::Voxel), Profile::Framework);
        assert_eq!(r.violations, vec![Violation { rule: Rule::NoPillarToVoxel, branch: Some("b".into()) }]);
    }

    #[test]
    fn voxel_feeding_point_is_flagged() {
        let r = validate(&two_stage(Kind::Voxel, Kind::Point), Profile::Framework);
        assert!(r.has(Rule::VoxelFeedsOnlyPillar));
        let r = validate(&two_stage(Kind::Voxel, Kind::PillarDense), Profile::Framework);
        assert!(r.ok());
    }

    #[test]
    fn missing_successor_is_disconnected() {
        let mut g = two_stage(Kind::Point, Kind::PillarDense);
        g.stages[0].push(Branch::new("c", Kind::Point, LayerSpec::point_mlp(8.0, 1, Norm::Batch)));
        let r = validate(&g, Profile::Framework);
        assert_eq!(r.violations, vec![Violation { rule: Rule::Disconnected, branch: Some("c".into()) }]);
    }

    #[test]
    fn stage_count_only_matters_for_search_profile() {
        let g = two_stage(Kind::Point, Kind::PillarDense);
        assert!(validate(&g, Profile::Framework).ok());
        assert!(validate(&g, Profile::SearchSpace).has(Rule::NonSearchStageCount));
    }

    #[test]
    fn layer_family_must_match_kind() {
        let mut g = two_stage(Kind::Point, Kind::PillarDense);
        g.stages[1][0].layer = LayerSpec::unet2d_sparse(8.0, 1, 0);
        assert!(validate(&g, Profile::Framework).has(Rule::FamilyMismatch));
        g.stages[1][0].layer = LayerSpec::unet2d_dense(8.0, 6);
        assert!(validate(&g, Profile::Framework).ok());
        assert!(validate(&g, Profile::SearchSpace).has(Rule::LayerOutOfBounds));
    }

    #[test]
    fn sum_merge_requires_equal_widths() {
        let mut g = two_stage(Kind::Point, Kind::PillarDense);
        g.stages[0].push(Branch::new("c", Kind::Point, LayerSpec::point_mlp(8.0, 1, Norm::Batch)));
        g.stages[1][0].inputs.push("c".into());
        g.stages[1][0].merge = MergeMode::Sum;
        assert!(validate(&g, Profile::Framework).has(Rule::SumChannelMismatch));
    }

    #[test]
    fn violation_display_names_rule_and_branch() {
        let v = Violation { rule: Rule::NoPillarToVoxel, branch: Some("s3.voxel".into()) };
        assert_eq!(v.to_string(), "NoPillarToVoxel branch=s3.voxel");
    }
}
