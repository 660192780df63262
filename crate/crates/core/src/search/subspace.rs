use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Mutation, MutationRecord, Mutator, SearchError, MAX_MUTATION_ATTEMPTS};
use crate::arch::{validate, ArchGenome, Branch, LayerSpec, Norm, Profile};
use crate::pcrep::{Kind, View};

pub const SUBSPACE_RESOLUTIONS: [f64; 3] = [0.256, 0.32, 0.384];
pub const SUBSPACE_CHANNELS: [f64; 3] = [8.0, 16.0, 32.0];

/// Stages 1 and 2 frozen; stage 3 varies over kind, cell size and channels
/// (6 x 3 x 3 grid points). Point and perspective heads ignore the cell size,
/// so several grid points share one genome.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSubspace {
    frozen: Vec<Vec<Branch>>,
}

impl GridSubspace {
    /// `frozen` holds the first two stages of a search-space genome.
    pub fn new(frozen: Vec<Vec<Branch>>) -> Result<Self, SearchError> {
        let s = Self { frozen };
        if s.frozen.len() != 2 {
            return Err(SearchError::InvalidConfig("the subspace freezes exactly two stages".into()));
        }
        let report = validate(&s.genome(Kind::PillarDense, 1, 1), Profile::SearchSpace);
        if !report.ok() {
            return Err(SearchError::InvalidGenome(report));
        }
        Ok(s)
    }

    /// point(F=16) -> point(F=16) prefix; every final kind is reachable from it.
    pub fn standard() -> Self {
        let a = Branch::new("s1.point", Kind::Point, LayerSpec::point_mlp(16.0, 1, Norm::Batch));
        let b = Branch::new("s2.point", Kind::Point, LayerSpec::point_mlp(16.0, 1, Norm::Batch)).with_inputs(&["s1.point"]);
        Self::new(vec![vec![a], vec![b]]).expect("standard prefix is valid")
    }

    pub fn genome(&self, kind: Kind, resolution: usize, channels: usize) -> ArchGenome {
        let id = format!("s3.{}", kind.name());
        let mut last = Branch::new(id.clone(), kind, LayerSpec::default_for(kind, SUBSPACE_CHANNELS[channels]));
        if last.uses_grid() {
            last.resolution_m = Some(SUBSPACE_RESOLUTIONS[resolution]);
        }
        last.inputs = self.frozen[1].iter().map(|b| b.id.clone()).collect();
        let mut stages = self.frozen.clone();
        stages.push(vec![last]);
        ArchGenome { stages, foreground_seg: false, head_attach: id }
    }

    /// Distinct valid genomes over the whole grid.
    pub fn enumerate(&self) -> Vec<ArchGenome> {
        let mut out: Vec<ArchGenome> = Vec::new();
        for kind in Kind::ALL {
            for r in 0..SUBSPACE_RESOLUTIONS.len() {
                for c in 0..SUBSPACE_CHANNELS.len() {
                    let g = self.genome(kind, r, c);
                    if validate(&g, Profile::SearchSpace).ok() && !out.contains(&g) {
                        out.push(g);
                    }
                }
            }
        }
        out
    }

    /// Grid coordinates of `g`; non-grid heads report the middle cell size.
    pub fn locate(&self, g: &ArchGenome) -> Option<(Kind, usize, usize)> {
        if g.stages.len() != 3 || g.stages[..2] != self.frozen[..] {
            return None;
        }
        let [b] = g.stages[2].as_slice() else { return None };
        let kind = b.kind()?;
        let c = SUBSPACE_CHANNELS.iter().position(|&v| v == b.layer.channels)?;
        let r = match b.resolution_m {
            Some(res) if b.uses_grid() => SUBSPACE_RESOLUTIONS.iter().position(|&v| v == res)?,
            _ => 1,
        };
        (self.genome(kind, r, c) == *g).then_some((kind, r, c))
    }
}

fn step(i: usize, len: usize, rng: &mut ChaCha8Rng) -> (usize, i32) {
    let up = if i == 0 {
        true
    } else if i + 1 == len {
        false
    } else {
        rng.gen_bool(0.5)
    };
    if up {
        (i + 1, 1)
    } else {
        (i - 1, -1)
    }
}

impl Mutator for GridSubspace {
    /// Moves along one axis: a different kind, or one step in cell size or channels.
    fn mutate(&self, g: &ArchGenome, rng: &mut ChaCha8Rng) -> Result<(ArchGenome, MutationRecord), SearchError> {
        let Some((kind, r, c)) = self.locate(g) else {
            return Err(SearchError::InvalidConfig("genome lies outside the subspace".into()));
        };
        for attempt in 1..=MAX_MUTATION_ATTEMPTS {
            let (child, mutation) = match rng.gen_range(0..3) {
                0 => {
                    let others: Vec<Kind> = Kind::ALL.into_iter().filter(|k| *k != kind).collect();
                    let to = *others.choose(rng).expect("nonempty");
                    let child = self.genome(to, r, c);
                    let branch = child.head_attach.clone();
                    (child, Mutation::SwitchView { branch, from: kind, to })
                }
                1 => {
                    if !matches!(kind.view(), View::Pillar | View::Voxel) {
                        continue;
                    }
                    let (nr, _) = step(r, SUBSPACE_RESOLUTIONS.len(), rng);
                    let factor = SUBSPACE_RESOLUTIONS[nr] / SUBSPACE_RESOLUTIONS[r];
                    (self.genome(kind, nr, c), Mutation::AdjustResolution { factor })
                }
                _ => {
                    let (nc, _) = step(c, SUBSPACE_CHANNELS.len(), rng);
                    let factor = SUBSPACE_CHANNELS[nc] / SUBSPACE_CHANNELS[c];
                    (self.genome(kind, r, nc), Mutation::AdjustChannels { factor })
                }
            };
            if child != *g && validate(&child, Profile::SearchSpace).ok() {
                return Ok((child, MutationRecord { stage: 3, mutation, attempts: attempt }));
            }
        }
        Err(SearchError::Exhausted { attempts: MAX_MUTATION_ATTEMPTS })
    }
}
