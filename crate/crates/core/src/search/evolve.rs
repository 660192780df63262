use std::collections::VecDeque;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mutate, MutationRecord, SearchError};
use crate::analysis::{objective, ObjectiveWeights};
use crate::arch::{genome_hash, validate, ArchGenome, Profile};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub quality: f64,
    pub latency_ms: f64,
}

/// Maps a genome to quality and latency. Called concurrently when the
/// parallel width exceeds 1.
pub trait Evaluator: Sync {
    fn evaluate(&self, g: &ArchGenome) -> Result<Evaluation, String>;
}

impl<F> Evaluator for F
where
    F: Fn(&ArchGenome) -> Result<Evaluation, String> + Sync,
{
    fn evaluate(&self, g: &ArchGenome) -> Result<Evaluation, String> {
        self(g)
    }
}

/// Produces one child per call; must be deterministic given the rng.
pub trait Mutator: Sync {
    fn mutate(&self, g: &ArchGenome, rng: &mut ChaCha8Rng) -> Result<(ArchGenome, MutationRecord), SearchError>;
}

/// The six-choice mutation over the full search space.
#[derive(Clone, Copy, Debug, Default)]
pub struct SearchSpaceMutator;

impl Mutator for SearchSpaceMutator {
    fn mutate(&self, g: &ArchGenome, rng: &mut ChaCha8Rng) -> Result<(ArchGenome, MutationRecord), SearchError> {
        mutate(g, rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub tournament_size: usize,
    pub budget: usize,
    pub seed: u64,
    pub warm_start: ArchGenome,
    pub weights: ObjectiveWeights,
    /// Candidates evaluated concurrently.
    pub parallel: usize,
}

impl EvolutionConfig {
    pub fn new(warm_start: ArchGenome) -> Self {
        Self {
            population_size: 20,
            tournament_size: 5,
            budget: 100,
            seed: 0,
            warm_start,
            weights: ObjectiveWeights::default(),
            parallel: 1,
        }
    }

    pub fn check(&self) -> Result<(), SearchError> {
        let bad = |m: String| Err(SearchError::InvalidConfig(m));
        if self.tournament_size == 0 || self.tournament_size > self.population_size {
            return bad(format!("need 1 <= tournament ({}) <= population ({})", self.tournament_size, self.population_size));
        }
        if self.population_size > self.budget {
            return bad(format!("population ({}) exceeds budget ({})", self.population_size, self.budget));
        }
        if self.parallel == 0 {
            return bad("parallel width must be >= 1".into());
        }
        let report = validate(&self.warm_start, Profile::SearchSpace);
        if !report.ok() {
            return Err(SearchError::InvalidGenome(report));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "origin", rename_all = "snake_case")]
pub enum Origin {
    WarmStart,
    Mutation { parent: usize, record: MutationRecord },
}

/// One evaluated candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub index: usize,
    pub hash: String,
    #[serde(flatten)]
    pub origin: Origin,
    pub quality: Option<f64>,
    pub latency_ms: Option<f64>,
    /// `-inf` for failed evaluations; serialized as null.
    #[serde(with = "fitness_serde")]
    pub fitness: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub genome: ArchGenome,
    pub wall_ms: f64,
}

impl HistoryRecord {
    pub fn mutation(&self) -> Option<&MutationRecord> {
        match &self.origin {
            Origin::Mutation { record, .. } => Some(record),
            Origin::WarmStart => None,
        }
    }
}

mod fitness_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvolutionHistory {
    pub records: Vec<HistoryRecord>,
    /// Record indices of the final population, oldest first.
    pub population: Vec<usize>,
}

impl EvolutionHistory {
    /// Highest-fitness record; ties go to the earlier one.
    pub fn best(&self) -> Option<&HistoryRecord> {
        self.records.iter().reduce(|a, b| if b.fitness > a.fitness { b } else { a })
    }

    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.records
            .iter()
            .map(|r| {
                best = best.max(r.fitness);
                best
            })
            .collect()
    }
}

pub fn evolve(cfg: &EvolutionConfig, evaluator: &dyn Evaluator, mutator: &dyn Mutator) -> Result<EvolutionHistory, SearchError> {
    evolve_with(cfg, evaluator, mutator, &[], &mut |_| Ok(()))
}

struct Candidate {
    genome: ArchGenome,
    origin: Origin,
}

/// Regularized evolution. `prior` is a log prefix from an earlier run with the
/// same config; it is replayed without re-evaluation so the continued run is
/// identical to an uninterrupted one. `on_record` sees each new record in order.
pub fn evolve_with(
    cfg: &EvolutionConfig,
    evaluator: &dyn Evaluator,
    mutator: &dyn Mutator,
    prior: &[HistoryRecord],
    on_record: &mut dyn FnMut(&HistoryRecord) -> Result<(), SearchError>,
) -> Result<EvolutionHistory, SearchError> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records: Vec<HistoryRecord> = Vec::with_capacity(cfg.budget);
    let mut population: VecDeque<usize> = VecDeque::with_capacity(cfg.population_size + 1);

    let mut run_batch = |batch: Vec<Candidate>,
                         records: &mut Vec<HistoryRecord>,
                         population: &mut VecDeque<usize>|
     -> Result<(), SearchError> {
        let start = records.len();
        let fresh: Vec<usize> = (0..batch.len()).filter(|i| start + i >= prior.len()).collect();
        let results = evaluate_all(evaluator, batch.iter().map(|c| &c.genome).collect(), &fresh, cfg.parallel);
        for (i, (c, result)) in batch.into_iter().zip(results).enumerate() {
            let index = start + i;
            let hash = genome_hash(&c.genome).0;
            let rec = if let Some(old) = prior.get(index) {
                if old.hash != hash || old.origin != c.origin {
                    return Err(SearchError::HistoryMismatch { index });
                }
                old.clone()
            } else {
                let (eval, wall_ms) = result.expect("fresh candidates are evaluated");
                build_record(index, hash, c, eval, wall_ms, cfg.weights)
            };
            if index >= prior.len() {
                on_record(&rec)?;
            }
            records.push(rec);
            population.push_back(index);
            if population.len() > cfg.population_size {
                population.pop_front();
            }
        }
        Ok(())
    };

    let mut init = vec![Candidate { genome: cfg.warm_start.clone(), origin: Origin::WarmStart }];
    for _ in 1..cfg.population_size {
        let (genome, record) = mutator.mutate(&cfg.warm_start, &mut rng)?;
        init.push(Candidate { genome, origin: Origin::Mutation { parent: 0, record } });
    }
    for chunk in chunked(init, cfg.parallel) {
        run_batch(chunk, &mut records, &mut population)?;
    }

    while records.len() < cfg.budget {
        let width = cfg.parallel.min(cfg.budget - records.len());
        let mut batch = Vec::with_capacity(width);
        for _ in 0..width {
            let parent = tournament(&population, &records, cfg.tournament_size, &mut rng);
            let (genome, record) = mutator.mutate(&records[parent].genome, &mut rng)?;
            batch.push(Candidate { genome, origin: Origin::Mutation { parent, record } });
        }
        run_batch(batch, &mut records, &mut population)?;
    }
    Ok(EvolutionHistory { records, population: population.into_iter().collect() })
}

fn chunked<T>(items: Vec<T>, n: usize) -> Vec<Vec<T>> {
    let mut out = Vec::new();
    let mut it = items.into_iter().peekable();
    while it.peek().is_some() {
        out.push(it.by_ref().take(n).collect());
    }
    out
}

/// Uniform draws with replacement; the fittest wins and ties go to the older record.
fn tournament(population: &VecDeque<usize>, records: &[HistoryRecord], size: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut best: Option<usize> = None;
    for _ in 0..size {
        let cand = population[rng.gen_range(0..population.len())];
        best = Some(match best {
            None => cand,
            Some(b) => {
                let (fb, fc) = (records[b].fitness, records[cand].fitness);
                if fc > fb || (fc == fb && cand < b) {
                    cand
                } else {
                    b
                }
            }
        });
    }
    best.expect("tournament size >= 1")
}

type Timed = (Result<Evaluation, String>, f64);

fn evaluate_all(evaluator: &dyn Evaluator, genomes: Vec<&ArchGenome>, fresh: &[usize], width: usize) -> Vec<Option<Timed>> {
    let timed = |g: &ArchGenome| {
        let t = Instant::now();
        let r = evaluator.evaluate(g);
        (r, t.elapsed().as_secs_f64() * 1e3)
    };
    let mut out: Vec<Option<Timed>> = vec![None; genomes.len()];
    if width <= 1 || fresh.len() <= 1 {
        for &i in fresh {
            out[i] = Some(timed(genomes[i]));
        }
        return out;
    }
    let results: Vec<Timed> = std::thread::scope(|s| {
        let handles: Vec<_> = fresh.iter().map(|&i| {
            let g = genomes[i];
            let timed = &timed;
            s.spawn(move || timed(g))
        }).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| (Err("evaluator panicked".into()), 0.0)))
            .collect()
    });
    for (&i, r) in fresh.iter().zip(results) {
        out[i] = Some(r);
    }
    out
}

fn build_record(
    index: usize,
    hash: String,
    c: Candidate,
    eval: Result<Evaluation, String>,
    wall_ms: f64,
    weights: ObjectiveWeights,
) -> HistoryRecord {
    let scored = eval.and_then(|e| objective(e.quality, e.latency_ms, weights).map(|f| (e, f)).map_err(|e| e.to_string()));
    let (quality, latency_ms, fitness, error) = match scored {
        Ok((e, f)) => (Some(e.quality), Some(e.latency_ms), f, None),
        Err(msg) => (None, None, f64::NEG_INFINITY, Some(msg)),
    };
    HistoryRecord { index, hash, origin: c.origin, quality, latency_ms, fitness, error, genome: c.genome, wall_ms }
}
