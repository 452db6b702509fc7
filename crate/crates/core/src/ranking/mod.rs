//! Leaderboards under five ranking schemes, pairwise significance maps,
//! bootstrap rank stability and Kendall's τ.

mod kendall;
mod schemes;
mod signed_rank;
mod stability;
mod table;

pub use kendall::kendall_tau;
pub use schemes::{
    aggregate, aggregate_then_rank, overall_rank, rank_then_aggregate, rank_values, run_scheme, significance_map,
    test_based_rank, Aggregate, Ranking, Scheme, SchemeResult, SignificanceMap, SignificanceOptions,
};
pub use signed_rank::{average_ranks, holm_adjust, wilcoxon_signed_rank, PValue, WilcoxonOptions, ZeroMethod};
pub use stability::{
    bootstrap_rankings, bootstrap_with, replicate_indices, stability_summary, BootstrapOptions, BootstrapRun,
    RankCount, Resampler, SeededResampler, StabilityReport, TaskStability, TeamStability,
};
pub use table::{Direction, MetricTable, Task};

use crate::mask::Structure;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum RankingError {
    #[error("no teams to rank")]
    NoTeams,
    #[error("no cases to aggregate")]
    NoCases,
    #[error("need at least {needed} teams, got {got}")]
    TooFewTeams { needed: usize, got: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("duplicate record for case `{case_id}`, team `{team}`, structure {structure}")]
    DuplicateCell {
        case_id: String,
        team: String,
        structure: Structure,
    },
    #[error("no record for case `{case_id}`, team `{team}`, structure {structure}")]
    MissingCell {
        case_id: String,
        team: String,
        structure: Structure,
    },
    #[error("task {0} is not in the table")]
    UnknownTask(Task),
    #[error("test undefined: {0}")]
    TestUndefined(&'static str),
    #[error("bootstrap needs at least one replicate")]
    NoReplicates,
    #[error("thread pool: {0}")]
    ThreadPool(String),
}
