use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{kendall_tau, run_scheme, MetricTable, Ranking, RankingError, Scheme, SignificanceOptions, Task};

/// Source of bootstrap row indices. Implementations must be pure in
/// `(replicate, n)` so replicates can run in any order.
pub trait Resampler: Sync {
    fn indices(&self, replicate: u64, n: usize) -> Vec<usize>;
}

/// Draws each replicate from its own ChaCha8 stream: the seed picks the key
/// and the replicate index picks the stream.
#[derive(Debug, Clone, Copy)]
pub struct SeededResampler {
    pub seed: u64,
}

impl Resampler for SeededResampler {
    fn indices(&self, replicate: u64, n: usize) -> Vec<usize> {
        replicate_indices(self.seed, replicate, n)
    }
}

/// The `n` row indices (with replacement) of one replicate.
pub fn replicate_indices(seed: u64, replicate: u64, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapOptions {
    pub scheme: Scheme,
    pub samples: usize,
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
    pub significance: SignificanceOptions,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::RankThenMean,
            samples: 1000,
            seed: 0,
            jobs: 0,
            significance: SignificanceOptions::default(),
        }
    }
}

/// Full-data rankings and every replicate's rankings, one per task.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapRun {
    pub scheme: Scheme,
    pub tasks: Vec<Task>,
    pub full: Vec<Ranking>,
    /// Indexed `[replicate][task]`.
    pub replicates: Vec<Vec<Ranking>>,
}

impl BootstrapRun {
    pub fn summary(&self, teams: &[String]) -> Result<StabilityReport, RankingError> {
        let mut report = stability_summary(teams, &self.tasks, &self.full, &self.replicates)?;
        report.scheme = self.scheme;
        Ok(report)
    }
}

fn rank_all(t: &MetricTable, opts: &BootstrapOptions) -> Result<Vec<Ranking>, RankingError> {
    t.tasks()
        .iter()
        .map(|&task| Ok(run_scheme(t, task, opts.scheme, &opts.significance)?.ranking))
        .collect()
}

pub fn bootstrap_rankings(t: &MetricTable, opts: &BootstrapOptions) -> Result<BootstrapRun, RankingError> {
    bootstrap_with(t, opts, &SeededResampler { seed: opts.seed })
}

/// Bootstrap with a caller-supplied resampler. Results are keyed by replicate
/// index, so the thread count never changes the output.
pub fn bootstrap_with(
    t: &MetricTable,
    opts: &BootstrapOptions,
    resampler: &dyn Resampler,
) -> Result<BootstrapRun, RankingError> {
    if opts.samples == 0 {
        return Err(RankingError::NoReplicates);
    }
    if t.n_cases() == 0 {
        return Err(RankingError::NoCases);
    }
    let full = rank_all(t, opts)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| RankingError::ThreadPool(e.to_string()))?;
    let n = t.n_cases();
    let replicates = pool.install(|| {
        (0..opts.samples as u64)
            .into_par_iter()
            .map(|b| rank_all(&t.resample(&resampler.indices(b, n)), opts))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(BootstrapRun {
        scheme: opts.scheme,
        tasks: t.tasks().to_vec(),
        full,
        replicates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankCount {
    pub rank: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TeamStability {
    pub team: String,
    pub full_rank: f64,
    /// Achieved ranks in increasing order with their replicate counts.
    pub frequencies: Vec<RankCount>,
    pub median_rank: f64,
    /// Nearest-rank 2.5th and 97.5th percentiles.
    pub interval: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskStability {
    pub task: Task,
    pub teams: Vec<TeamStability>,
    /// τ-b of each replicate against the full-data ranking, by replicate.
    pub tau: Vec<f64>,
    pub median_tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub scheme: Scheme,
    pub samples: usize,
    pub tasks: Vec<TaskStability>,
}

/// Nearest-rank percentile `per_mille / 1000` of sorted data.
fn nearest_rank(sorted: &[f64], per_mille: usize) -> f64 {
    let ordinal = (per_mille * sorted.len()).div_ceil(1000).max(1);
    sorted[ordinal - 1]
}

fn midpoint_median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Summarises replicate rankings (`boots[replicate][task]`) against the
/// full-data rankings.
pub fn stability_summary(
    teams: &[String],
    tasks: &[Task],
    full: &[Ranking],
    boots: &[Vec<Ranking>],
) -> Result<StabilityReport, RankingError> {
    if boots.is_empty() {
        return Err(RankingError::NoReplicates);
    }
    if full.len() != tasks.len() {
        return Err(RankingError::LengthMismatch {
            expected: tasks.len(),
            got: full.len(),
        });
    }
    let mut out = Vec::with_capacity(tasks.len());
    for (ti, (&task, full_r)) in tasks.iter().zip(full).enumerate() {
        if full_r.len() != teams.len() {
            return Err(RankingError::LengthMismatch {
                expected: teams.len(),
                got: full_r.len(),
            });
        }
        let mut tau = Vec::with_capacity(boots.len());
        let mut per_team: Vec<Vec<f64>> = vec![Vec::with_capacity(boots.len()); teams.len()];
        for rep in boots {
            let r = rep.get(ti).ok_or(RankingError::LengthMismatch {
                expected: tasks.len(),
                got: rep.len(),
            })?;
            if r.len() != teams.len() {
                return Err(RankingError::LengthMismatch {
                    expected: teams.len(),
                    got: r.len(),
                });
            }
            for (team, &rank) in r.ranks.iter().enumerate() {
                per_team[team].push(rank);
            }
            // A single team has nothing to correlate; count it as agreement.
            tau.push(if teams.len() < 2 { 1.0 } else { kendall_tau(full_r, r)? });
        }
        let team_stats = per_team
            .into_iter()
            .enumerate()
            .map(|(team, mut ranks)| {
                ranks.sort_by(f64::total_cmp);
                let mut frequencies: Vec<RankCount> = Vec::new();
                for &rank in &ranks {
                    match frequencies.last_mut() {
                        Some(last) if last.rank == rank => last.count += 1,
                        _ => frequencies.push(RankCount { rank, count: 1 }),
                    }
                }
                TeamStability {
                    team: teams[team].clone(),
                    full_rank: full_r.ranks[team],
                    frequencies,
                    median_rank: nearest_rank(&ranks, 500),
                    interval: [nearest_rank(&ranks, 25), nearest_rank(&ranks, 975)],
                }
            })
            .collect();
        let mut sorted_tau = tau.clone();
        sorted_tau.sort_by(f64::total_cmp);
        out.push(TaskStability {
            task,
            teams: team_stats,
            median_tau: midpoint_median(&sorted_tau),
            tau,
        });
    }
    Ok(StabilityReport {
        scheme: Scheme::RankThenMean,
        samples: boots.len(),
        tasks: out,
    })
}
