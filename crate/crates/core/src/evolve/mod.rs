//! Evolutionary search for per-cluster detection pipelines.

mod gene;
mod search;
mod space;

pub use gene::{mutate_gene, Gene, GeneSpec, GeneValue, MutationRule, SELECTION_RATE_RANGE};
pub use search::{
    cluster_seed, evolve, evolve_in, evolve_per_cluster, fitness, history_csv, save_history, EvolutionConfig, EvolutionOutcome,
    EvolvedPipeline, GenerationStats,
};
pub use space::{GeneSpace, Genome, MAX_SMOOTH_HALF_WINDOW};
