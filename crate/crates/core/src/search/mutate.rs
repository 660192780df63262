use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SearchError;
use crate::arch::{validate, ArchGenome, Branch, BranchId, LayerSpec, Profile, Progression};
use crate::pcrep::Kind;

/// Consecutive failed draws before `mutate` gives up.
pub const MAX_MUTATION_ATTEMPTS: u32 = 1000;
/// Multiplicative steps for resolution and channel mutations.
pub const MUTATION_FACTORS: [f64; 2] = [0.8, 1.2];
const MAX_PROGRESSION: u32 = 5;
const MAX_SPARSE_DOWN: u32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    AddView,
    RemoveView,
    SwitchView,
    AdjustResolution,
    AdjustChannels,
    AdjustProgression,
}

impl MutationKind {
    pub const ALL: [MutationKind; 6] = [
        MutationKind::AddView,
        MutationKind::RemoveView,
        MutationKind::SwitchView,
        MutationKind::AdjustResolution,
        MutationKind::AdjustChannels,
        MutationKind::AdjustProgression,
    ];

    /// Channel and progression changes touch only the layer, not the transforms.
    pub fn is_layer_only(self) -> bool {
        matches!(self, MutationKind::AdjustChannels | MutationKind::AdjustProgression)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgressionAxis {
    Repeats,
    Scales,
    Down,
    Up,
}

/// What a mutation changed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mutation {
    AddView { branch: BranchId, view: Kind },
    RemoveView { branch: BranchId, view: Kind },
    SwitchView { branch: BranchId, from: Kind, to: Kind },
    AdjustResolution { factor: f64 },
    AdjustChannels { factor: f64 },
    AdjustProgression { branch: BranchId, axis: ProgressionAxis, delta: i32 },
}

impl Mutation {
    pub fn kind(&self) -> MutationKind {
        match self {
            Mutation::AddView { .. } => MutationKind::AddView,
            Mutation::RemoveView { .. } => MutationKind::RemoveView,
            Mutation::SwitchView { .. } => MutationKind::SwitchView,
            Mutation::AdjustResolution { .. } => MutationKind::AdjustResolution,
            Mutation::AdjustChannels { .. } => MutationKind::AdjustChannels,
            Mutation::AdjustProgression { .. } => MutationKind::AdjustProgression,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MutationRecord {
    /// 1-based stage index.
    pub stage: usize,
    #[serde(flatten)]
    pub mutation: Mutation,
    /// Draws spent, including the successful one.
    pub attempts: u32,
}

impl MutationRecord {
    pub fn kind(&self) -> MutationKind {
        self.mutation.kind()
    }
}

/// Draws a stage and a mutation kind uniformly until one applies and the child
/// is a search-space-valid genome different from `g`.
pub fn mutate<R: Rng + ?Sized>(g: &ArchGenome, rng: &mut R) -> Result<(ArchGenome, MutationRecord), SearchError> {
    let report = validate(g, Profile::SearchSpace);
    if !report.ok() {
        return Err(SearchError::InvalidGenome(report));
    }
    for attempt in 1..=MAX_MUTATION_ATTEMPTS {
        let stage = rng.gen_range(0..g.stage_count());
        let kind = *MutationKind::ALL.choose(rng).expect("nonempty");
        if let Some((child, mutation)) = try_mutation(g, stage, kind, rng) {
            return Ok((child, MutationRecord { stage: stage + 1, mutation, attempts: attempt }));
        }
    }
    Err(SearchError::Exhausted { attempts: MAX_MUTATION_ATTEMPTS })
}

/// One draw of `kind` on 0-based `stage`; `None` when a precondition fails,
/// the result is invalid, or nothing changed.
pub fn try_mutation<R: Rng + ?Sized>(
    g: &ArchGenome,
    stage: usize,
    kind: MutationKind,
    rng: &mut R,
) -> Option<(ArchGenome, Mutation)> {
    let stage_branches = g.stages.get(stage)?;
    let (child, mutation) = match kind {
        MutationKind::AddView => {
            let present: Vec<_> = stage_branches.iter().map(|b| b.view).collect();
            let absent: Vec<Kind> = Kind::ALL.into_iter().filter(|k| !present.contains(&k.view())).collect();
            let views: Vec<_> = {
                let mut v: Vec<_> = absent.iter().map(|k| k.view()).collect();
                v.dedup();
                v
            };
            let view = *views.choose(rng)?;
            let formats: Vec<Kind> = absent.into_iter().filter(|k| k.view() == view).collect();
            let kind = *formats.choose(rng)?;
            let (child, id) = add_view(g, stage, kind, rng)?;
            (child, Mutation::AddView { branch: id, view: kind })
        }
        MutationKind::RemoveView => {
            let victim = stage_branches.choose(rng)?;
            let view = victim.kind()?;
            let id = victim.id.clone();
            (remove_view(g, stage, &id, rng)?, Mutation::RemoveView { branch: id, view })
        }
        MutationKind::SwitchView => switch_view(g, stage, rng)?,
        MutationKind::AdjustResolution => {
            let factor = *MUTATION_FACTORS.choose(rng).expect("nonempty");
            let mut child = g.clone();
            let mut any = false;
            for b in child.stages[stage].iter_mut().filter(|b| b.uses_grid()) {
                b.scale_resolution(factor);
                any = true;
            }
            if !any {
                return None;
            }
            (child, Mutation::AdjustResolution { factor })
        }
        MutationKind::AdjustChannels => {
            let factor = *MUTATION_FACTORS.choose(rng).expect("nonempty");
            let mut child = g.clone();
            scale_channels(&mut child.stages[stage], factor);
            (child, Mutation::AdjustChannels { factor })
        }
        MutationKind::AdjustProgression => {
            let idx = rng.gen_range(0..stage_branches.len());
            let delta = if rng.gen_bool(0.5) { 1 } else { -1 };
            let mut child = g.clone();
            let b = &mut child.stages[stage][idx];
            let axis = step_progression(&mut b.layer, delta, rng)?;
            let branch = b.id.clone();
            (child, Mutation::AdjustProgression { branch, axis, delta })
        }
    };
    (child != *g && validate(&child, Profile::SearchSpace).ok()).then_some((child, mutation))
}

fn scale_channels(stage: &mut [Branch], factor: f64) {
    for b in stage {
        b.layer.channels *= factor;
    }
}

fn step_progression<R: Rng + ?Sized>(layer: &mut LayerSpec, delta: i32, rng: &mut R) -> Option<ProgressionAxis> {
    let step = |n: u32, max: u32| n.checked_add_signed(delta).filter(|v| *v <= max);
    let (progression, axis) = match layer.progression {
        Progression::Repeats(n) => (Progression::Repeats(step(n, MAX_PROGRESSION).filter(|v| *v >= 1)?), ProgressionAxis::Repeats),
        Progression::Scales(n) => (Progression::Scales(step(n, MAX_PROGRESSION).filter(|v| *v >= 1)?), ProgressionAxis::Scales),
        Progression::DownUp(d, u) => {
            if rng.gen_bool(0.5) {
                let d = step(d, MAX_SPARSE_DOWN).filter(|v| *v >= u)?;
                (Progression::DownUp(d, u), ProgressionAxis::Down)
            } else {
                let u = step(u, d)?;
                (Progression::DownUp(d, u), ProgressionAxis::Up)
            }
        }
    };
    layer.progression = progression;
    Some(axis)
}

fn compatible(src: &Branch, dst: Kind) -> bool {
    src.kind().is_some_and(|k| k.supports(dst))
}

/// Adds a `kind` branch to `stage` with a default layer, one random compatible
/// predecessor and one random compatible successor, then halves every channel
/// base in the stage. Returns the child and the new branch id.
pub fn add_view<R: Rng + ?Sized>(g: &ArchGenome, stage: usize, kind: Kind, rng: &mut R) -> Option<(ArchGenome, BranchId)> {
    let branches = g.stages.get(stage)?;
    if branches.is_empty() || branches.iter().any(|b| b.view == kind.view()) {
        return None;
    }
    let base = branches.iter().map(|b| b.layer.channels).sum::<f64>() / branches.len() as f64;
    let id = g.fresh_id(&format!("s{}.{}", stage + 1, kind.name()));
    let mut b = Branch::new(id.clone(), kind, LayerSpec::default_for(kind, base));
    if b.uses_grid() {
        if let Some(r) = branches.iter().find_map(|o| o.resolution_m) {
            b.resolution_m = Some(r);
        }
    }
    if stage > 0 {
        let preds: Vec<&Branch> = g.stages[stage - 1].iter().filter(|p| compatible(p, kind)).collect();
        b.inputs = vec![preds.choose(rng)?.id.clone()];
    }
    let mut child = g.clone();
    if stage + 1 < g.stage_count() {
        let succs: Vec<usize> = (0..g.stages[stage + 1].len())
            .filter(|&i| g.stages[stage + 1][i].kind().is_some_and(|d| kind.supports(d)))
            .collect();
        let &s = succs.choose(rng)?;
        child.stages[stage + 1][s].inputs.push(id.clone());
    }
    child.stages[stage].push(b);
    scale_channels(&mut child.stages[stage], 0.5);
    Some((child, id))
}

/// Removes branch `id` from `stage`, drops its uses in the next stage and
/// doubles the remaining channel bases. Next-stage branches left without
/// inputs, and predecessors left without successors, are reattached to a
/// random compatible remaining branch; `None` when that is impossible.
pub fn remove_view<R: Rng + ?Sized>(g: &ArchGenome, stage: usize, id: &str, rng: &mut R) -> Option<ArchGenome> {
    let branches = g.stages.get(stage)?;
    let idx = branches.iter().position(|b| b.id == id)?;
    if branches.len() < 2 || g.head_attach == id {
        return None;
    }
    let mut child = g.clone();
    let removed = child.stages[stage].remove(idx);
    let remaining: Vec<Branch> = child.stages[stage].clone();

    if stage + 1 < child.stage_count() {
        for dst in child.stages[stage + 1].iter_mut() {
            let before = dst.inputs.len();
            dst.inputs.retain(|i| i != id);
            if before > 0 && dst.inputs.is_empty() {
                let dk = dst.kind()?;
                let srcs: Vec<&Branch> = remaining.iter().filter(|s| compatible(s, dk)).collect();
                dst.inputs.push(srcs.choose(rng)?.id.clone());
            }
        }
    }
    if stage > 0 {
        for pred in &removed.inputs {
            let still_used = remaining.iter().any(|b| b.inputs.contains(pred));
            if still_used {
                continue;
            }
            let src = child.stages[stage - 1].iter().find(|b| &b.id == pred)?.clone();
            let dsts: Vec<usize> = (0..remaining.len())
                .filter(|&i| remaining[i].kind().is_some_and(|k| compatible(&src, k)))
                .collect();
            let &d = dsts.choose(rng)?;
            child.stages[stage][d].inputs.push(pred.clone());
        }
    }
    scale_channels(&mut child.stages[stage], 2.0);
    Some(child)
}

fn switch_view<R: Rng + ?Sized>(g: &ArchGenome, stage: usize, rng: &mut R) -> Option<(ArchGenome, Mutation)> {
    let [old] = g.stages.get(stage)?.as_slice() else { return None };
    let from = old.kind()?;
    let options: Vec<Kind> = Kind::ALL.into_iter().filter(|k| k.view() != old.view).collect();
    let to = *options.choose(rng)?;
    let mut child = g.clone();
    let id = g.fresh_id(&format!("s{}.{}", stage + 1, to.name()));
    let mut b = Branch::new(id.clone(), to, LayerSpec::default_for(to, old.layer.channels));
    if b.uses_grid() {
        if let Some(r) = old.resolution_m {
            b.resolution_m = Some(r);
        }
    }
    b.inputs = old.inputs.clone();
    b.merge = old.merge;
    if stage + 1 < g.stage_count() {
        for dst in child.stages[stage + 1].iter_mut() {
            for i in dst.inputs.iter_mut().filter(|i| **i == old.id) {
                *i = id.clone();
            }
        }
    }
    if child.head_attach == old.id {
        child.head_attach = id.clone();
    }
    child.stages[stage] = vec![b];
    Some((child, Mutation::SwitchView { branch: id, from, to }))
}
