//! Mutation operators, random generation, regularized evolution and run analysis.

mod analyze;
mod evaluator;
mod evolve;
mod history;
mod mutate;
mod random;
mod subspace;

pub use analyze::{
    analyze_format_latency, analyze_mutation_variance, analyze_presence_regression, format_features, least_squares,
    presence_features, FormatLatency, MutationVariance, Regression, PRESENCE_FEATURES,
};
pub use evaluator::{CoverageEvaluator, Memoized};
pub use evolve::{
    evolve, evolve_with, Evaluation, Evaluator, EvolutionConfig, EvolutionHistory, HistoryRecord, Mutator, Origin,
    SearchSpaceMutator,
};
pub use history::{read_history, write_record};
pub use mutate::{
    add_view, mutate, remove_view, try_mutation, Mutation, MutationKind, MutationRecord, ProgressionAxis,
    MAX_MUTATION_ATTEMPTS, MUTATION_FACTORS,
};
pub use random::{
    random_genome, random_genome_tracked, RandomStats, MAX_RANDOM_DRAWS, RANDOM_BASE_CHANNELS, RANDOM_CHANNEL_FACTORS,
    RANDOM_RESOLUTION_M, SPARSE_PROGRESSIONS,
};
pub use subspace::{GridSubspace, SUBSPACE_CHANNELS, SUBSPACE_RESOLUTIONS};

use crate::arch::ValidationReport;

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("no successful mutation after {attempts} draws")]
    Exhausted { attempts: u32 },
    #[error("genome violates the search space: {}", .0.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "))]
    InvalidGenome(ValidationReport),
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("resumed log diverges from the replayed run at record {index}")]
    HistoryMismatch { index: usize },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("malformed history line {line}: {message}")]
    MalformedHistory { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
