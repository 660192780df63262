use rand::seq::SliceRandom;
use rand::Rng;

use super::SearchError;
use crate::arch::{validate, ArchGenome, Branch, Family, Kernel, LayerSpec, Norm, Profile};
use crate::pcrep::{Kind, View};

pub const RANDOM_BASE_CHANNELS: f64 = 32.0;
pub const RANDOM_CHANNEL_FACTORS: [f64; 3] = [0.8, 1.0, 1.2];
/// Fixed cell edge of random genomes.
pub const RANDOM_RESOLUTION_M: f64 = 0.32;
/// Down/up choices of sparse U-Nets, indexed by the progression draw.
pub const SPARSE_PROGRESSIONS: [(u32, u32); 5] = [(0, 0), (1, 0), (2, 0), (2, 1), (2, 2)];
/// Rejection-sampling cap per genome.
pub const MAX_RANDOM_DRAWS: u64 = 10_000;
const FINAL_VIEWS: [View; 3] = [View::Voxel, View::Perspective, View::Pillar];

/// Raw draw counters, collected before rejection.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RandomStats {
    pub draws: u64,
    pub rejections: u64,
    /// Times each view was drawn present in stages 1 and 2, `View::ALL` order.
    pub view_draws: [[u64; 4]; 2],
}

impl RandomStats {
    /// Raw presence frequency of `view` in stage `stage` (1 or 2).
    pub fn frequency(&self, stage: usize, view: View) -> f64 {
        self.view_draws[stage - 1][view.index()] as f64 / self.draws.max(1) as f64
    }
}

pub fn random_genome<R: Rng + ?Sized>(rng: &mut R) -> Result<ArchGenome, SearchError> {
    random_genome_tracked(rng, &mut RandomStats::default())
}

/// Samples stage by stage and rejects invalid draws until one passes the
/// search-space profile.
pub fn random_genome_tracked<R: Rng + ?Sized>(rng: &mut R, stats: &mut RandomStats) -> Result<ArchGenome, SearchError> {
    for _ in 0..MAX_RANDOM_DRAWS {
        stats.draws += 1;
        let g = draw(rng, stats);
        if validate(&g, Profile::SearchSpace).ok() {
            return Ok(g);
        }
        stats.rejections += 1;
    }
    Err(SearchError::Exhausted { attempts: MAX_RANDOM_DRAWS as u32 })
}

fn draw<R: Rng + ?Sized>(rng: &mut R, stats: &mut RandomStats) -> ArchGenome {
    let mut stages: Vec<Vec<Branch>> = Vec::with_capacity(3);
    for s in 0..2 {
        let mut stage = Vec::new();
        for view in View::ALL {
            if !rng.gen_bool(0.5) {
                continue;
            }
            stats.view_draws[s][view.index()] += 1;
            let mut b = random_branch(s, view, rng);
            if s == 1 {
                b.inputs = stages[0].iter().filter(|_| rng.gen_bool(0.5)).map(|p: &Branch| p.id.clone()).collect();
            }
            stage.push(b);
        }
        stages.push(stage);
    }
    let view = *FINAL_VIEWS.choose(rng).expect("nonempty");
    let mut last = random_branch(2, view, rng);
    last.inputs = stages[1].iter().map(|b| b.id.clone()).collect();
    let head_attach = last.id.clone();
    stages.push(vec![last]);
    ArchGenome { stages, foreground_seg: false, head_attach }
}

fn random_branch<R: Rng + ?Sized>(stage: usize, view: View, rng: &mut R) -> Branch {
    let format = view.formats().choose(rng).copied();
    let kind = Kind::from_parts(view, format).expect("format drawn from the view");
    let channels = RANDOM_BASE_CHANNELS * RANDOM_CHANNEL_FACTORS.choose(rng).expect("nonempty");
    let choice = rng.gen_range(0..SPARSE_PROGRESSIONS.len());
    let (down, up) = SPARSE_PROGRESSIONS[choice];
    let n = choice as u32 + 1;
    let layer = match Family::for_kind(kind) {
        Family::PointMlp => LayerSpec::point_mlp(channels, n, Norm::Batch),
        Family::Unet2dDense => LayerSpec::unet2d_dense(channels, n),
        Family::Unet2dSparse => LayerSpec::unet2d_sparse(channels, down, up),
        Family::Unet3dSparse => LayerSpec::unet3d_sparse(channels, down, up, Kernel::K333),
    };
    let mut b = Branch::new(format!("s{}.{}", stage + 1, kind.name()), kind, layer);
    if b.uses_grid() {
        b.resolution_m = Some(RANDOM_RESOLUTION_M);
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_are_valid_and_single_final() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut stats = RandomStats::default();
        for _ in 0..300 {
            let g = random_genome_tracked(&mut rng, &mut stats).unwrap();
            assert_eq!(g.stages[2].len(), 1);
            assert_ne!(g.stages[2][0].view, View::Point);
            assert!(g.branches().all(|(_, b)| b.resolution_m.is_none_or(|r| r == RANDOM_RESOLUTION_M)));
        }
        assert!(stats.rejections > 0);
        for v in View::ALL {
            assert!((stats.frequency(1, v) - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn empty_second_stage_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut stats = RandomStats::default();
        for _ in 0..50 {
            let g = random_genome_tracked(&mut rng, &mut stats).unwrap();
            assert!(!g.stages[1].is_empty());
        }
    }
}
