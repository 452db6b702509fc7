use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::signed_rank::{average_ranks, holm_adjust, SignedRanks, WilcoxonOptions};
use super::table::{Direction, MetricTable, Task};
use super::RankingError;
use crate::metrics::MetricValue;

/// Per-team ranks, 1 = best. Ties share the average of their positions, so
/// every rank is a multiple of one half and f64 holds it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub ranks: Vec<f64>,
}

impl Ranking {
    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    /// Team indices from best to worst; ties keep table order.
    pub fn order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.ranks.len()).collect();
        idx.sort_by(|&a, &b| self.ranks[a].total_cmp(&self.ranks[b]));
        idx
    }
}

/// Ranks `values` under `direction`; unbounded values tie at the worst end.
pub fn rank_values(values: &[MetricValue], direction: Direction) -> Result<Ranking, RankingError> {
    if values.is_empty() {
        return Err(RankingError::NoTeams);
    }
    let keys: Vec<f64> = values
        .iter()
        .map(|v| match (v, direction) {
            (MetricValue::Unbounded, _) => f64::INFINITY,
            // Adding 0.0 folds -0.0 into 0.0.
            (MetricValue::Finite(x), Direction::LowerBetter) => x + 0.0,
            (MetricValue::Finite(x), Direction::HigherBetter) => -x + 0.0,
        })
        .collect();
    Ok(Ranking {
        ranks: average_ranks(&keys),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Mean,
    Median,
}

/// Mean (unbounded if any value is) or median (midpoint of the middle two
/// for even counts, with unbounded sorting above every finite value).
pub fn aggregate(values: &[MetricValue], agg: Aggregate) -> Result<MetricValue, RankingError> {
    if values.is_empty() {
        return Err(RankingError::NoCases);
    }
    match agg {
        Aggregate::Mean => {
            let mut sum = 0.0;
            for v in values {
                match v {
                    MetricValue::Finite(x) => sum += x,
                    MetricValue::Unbounded => return Ok(MetricValue::Unbounded),
                }
            }
            Ok(MetricValue::Finite(sum / values.len() as f64))
        }
        Aggregate::Median => {
            let mut sorted = values.to_vec();
            sorted.sort_by(MetricValue::total_cmp);
            let n = sorted.len();
            if n % 2 == 1 {
                return Ok(sorted[n / 2]);
            }
            match (sorted[n / 2 - 1], sorted[n / 2]) {
                (MetricValue::Finite(a), MetricValue::Finite(b)) => Ok(MetricValue::Finite((a + b) / 2.0)),
                _ => Ok(MetricValue::Unbounded),
            }
        }
    }
}

/// The five leaderboard schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Scheme {
    MeanThenRank,
    MedianThenRank,
    #[default]
    RankThenMean,
    RankThenMedian,
    TestBased,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::MeanThenRank,
        Scheme::MedianThenRank,
        Scheme::RankThenMean,
        Scheme::RankThenMedian,
        Scheme::TestBased,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::MeanThenRank => "MeanThenRank",
            Scheme::MedianThenRank => "MedianThenRank",
            Scheme::RankThenMean => "RankThenMean",
            Scheme::RankThenMedian => "RankThenMedian",
            Scheme::TestBased => "TestBased",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.as_str().to_ascii_lowercase() == norm)
            .ok_or_else(|| format!("unknown scheme `{s}` (expected one of MeanThenRank, MedianThenRank, RankThenMean, RankThenMedian, TestBased)"))
    }
}

/// A ranking together with the per-team quantity it was derived from:
/// aggregated metric values, aggregated ranks, or significant-win counts.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeResult {
    pub scheme: Scheme,
    pub ranking: Ranking,
    pub aggregates: Vec<MetricValue>,
}

pub fn aggregate_then_rank(t: &MetricTable, task: Task, agg: Aggregate) -> Result<SchemeResult, RankingError> {
    let ti = t.task_index(task)?;
    let aggregates = (0..t.n_teams())
        .map(|team| aggregate(&t.column(team, ti), agg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SchemeResult {
        scheme: match agg {
            Aggregate::Mean => Scheme::MeanThenRank,
            Aggregate::Median => Scheme::MedianThenRank,
        },
        ranking: rank_values(&aggregates, task.direction())?,
        aggregates,
    })
}

/// Per-case ranks for one task, laid out `[team][case]`.
fn per_case_ranks(t: &MetricTable, ti: usize, direction: Direction) -> Result<Vec<Vec<MetricValue>>, RankingError> {
    let mut by_team = vec![Vec::with_capacity(t.n_cases()); t.n_teams()];
    for case in 0..t.n_cases() {
        let r = rank_values(&t.row(case, ti), direction)?;
        for (team, rank) in r.ranks.into_iter().enumerate() {
            by_team[team].push(MetricValue::Finite(rank));
        }
    }
    Ok(by_team)
}

pub fn rank_then_aggregate(t: &MetricTable, task: Task, agg: Aggregate) -> Result<SchemeResult, RankingError> {
    let ti = t.task_index(task)?;
    let ranks = per_case_ranks(t, ti, task.direction())?;
    let aggregates = ranks
        .iter()
        .map(|r| aggregate(r, agg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SchemeResult {
        scheme: match agg {
            Aggregate::Mean => Scheme::RankThenMean,
            Aggregate::Median => Scheme::RankThenMedian,
        },
        ranking: rank_values(&aggregates, Direction::LowerBetter)?,
        aggregates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignificanceOptions {
    pub alpha: f64,
    pub wilcoxon: WilcoxonOptions,
    /// Holm-adjust within each map. Applies to the TestBased score too.
    pub holm: bool,
}

impl Default for SignificanceOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            wilcoxon: WilcoxonOptions::default(),
            holm: true,
        }
    }
}

/// Team × team incidence matrix: `significant[i][j]` means team i is
/// significantly better than team j.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificanceMap {
    pub task: Task,
    pub alpha: f64,
    pub significant: Vec<Vec<bool>>,
    /// Adjusted one-sided p-values; 1 on the diagonal and for undefined tests.
    pub p_adjusted: Vec<Vec<f64>>,
    /// Team pairs `(i, j)`, `i < j`, whose test was undefined.
    pub undefined: Vec<(usize, usize)>,
}

impl SignificanceMap {
    /// Number of teams each team significantly beats.
    pub fn wins(&self) -> Vec<usize> {
        self.significant.iter().map(|row| row.iter().filter(|&&s| s).count()).collect()
    }
}

/// Paired difference oriented so that positive means "i better than j".
/// Two unbounded values compare equal.
fn oriented_diff(a: MetricValue, b: MetricValue, direction: Direction) -> f64 {
    if a.is_unbounded() && b.is_unbounded() {
        return 0.0;
    }
    let d = a.to_f64() - b.to_f64();
    match direction {
        Direction::HigherBetter => d,
        Direction::LowerBetter => -d,
    }
}

pub fn significance_map(t: &MetricTable, task: Task, opts: &SignificanceOptions) -> Result<SignificanceMap, RankingError> {
    let k = t.n_teams();
    if k < 2 {
        return Err(RankingError::TooFewTeams { needed: 2, got: k });
    }
    let ti = t.task_index(task)?;
    let direction = task.direction();
    let columns: Vec<Vec<MetricValue>> = (0..k).map(|team| t.column(team, ti)).collect();

    // Family of k(k-1) ordered pairs, in row-major order.
    let mut pairs = Vec::with_capacity(k * (k - 1));
    let mut raw = Vec::with_capacity(k * (k - 1));
    let mut p = vec![vec![1.0; k]; k];
    let mut undefined = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            let diffs: Vec<f64> = columns[i]
                .iter()
                .zip(&columns[j])
                .map(|(&a, &b)| oriented_diff(a, b, direction))
                .collect();
            let (pij, pji) = match SignedRanks::new(&diffs, opts.wilcoxon.zero_method)
                .and_then(|sr| Ok((sr.p_greater(&opts.wilcoxon)?.value, sr.p_less(&opts.wilcoxon)?.value)))
            {
                Ok(v) => v,
                Err(e) => {
                    log::info!(
                        "{task}: test {} vs {} undefined ({e}); counted as not significant",
                        t.teams()[i],
                        t.teams()[j]
                    );
                    undefined.push((i, j));
                    (1.0, 1.0)
                }
            };
            p[i][j] = pij;
            p[j][i] = pji;
        }
    }
    for (i, row) in p.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i != j {
                pairs.push((i, j));
                raw.push(v);
            }
        }
    }
    let adjusted = if opts.holm { holm_adjust(&raw) } else { raw };
    let mut significant = vec![vec![false; k]; k];
    let mut p_adjusted = vec![vec![1.0; k]; k];
    for (&(i, j), &q) in pairs.iter().zip(&adjusted) {
        p_adjusted[i][j] = q;
        significant[i][j] = q < opts.alpha;
    }
    Ok(SignificanceMap {
        task,
        alpha: opts.alpha,
        significant,
        p_adjusted,
        undefined,
    })
}

/// Ranks by number of significant wins. A lone team has no opponents and
/// ranks first with zero wins.
pub fn test_based_rank(t: &MetricTable, task: Task, opts: &SignificanceOptions) -> Result<SchemeResult, RankingError> {
    let wins = if t.n_teams() == 1 {
        t.task_index(task)?;
        vec![0]
    } else {
        significance_map(t, task, opts)?.wins()
    };
    let aggregates: Vec<MetricValue> = wins.into_iter().map(|w| MetricValue::Finite(w as f64)).collect();
    Ok(SchemeResult {
        scheme: Scheme::TestBased,
        ranking: rank_values(&aggregates, Direction::HigherBetter)?,
        aggregates,
    })
}

pub fn run_scheme(
    t: &MetricTable,
    task: Task,
    scheme: Scheme,
    sig: &SignificanceOptions,
) -> Result<SchemeResult, RankingError> {
    match scheme {
        Scheme::MeanThenRank => aggregate_then_rank(t, task, Aggregate::Mean),
        Scheme::MedianThenRank => aggregate_then_rank(t, task, Aggregate::Median),
        Scheme::RankThenMean => rank_then_aggregate(t, task, Aggregate::Mean),
        Scheme::RankThenMedian => rank_then_aggregate(t, task, Aggregate::Median),
        Scheme::TestBased => test_based_rank(t, task, sig),
    }
}

/// RankThenMean pooled over every (case, task) cell of `tasks`.
pub fn overall_rank(t: &MetricTable, tasks: &[Task]) -> Result<SchemeResult, RankingError> {
    if tasks.is_empty() {
        return Err(RankingError::LengthMismatch { expected: 1, got: 0 });
    }
    if t.n_cases() == 0 {
        return Err(RankingError::NoCases);
    }
    let mut sums = vec![0.0; t.n_teams()];
    for &task in tasks {
        let ti = t.task_index(task)?;
        for (team, ranks) in per_case_ranks(t, ti, task.direction())?.into_iter().enumerate() {
            sums[team] += ranks.iter().map(|r| r.to_f64()).sum::<f64>();
        }
    }
    let cells = (t.n_cases() * tasks.len()) as f64;
    let aggregates: Vec<MetricValue> = sums.into_iter().map(|s| MetricValue::Finite(s / cells)).collect();
    Ok(SchemeResult {
        scheme: Scheme::RankThenMean,
        ranking: rank_values(&aggregates, Direction::LowerBetter)?,
        aggregates,
    })
}
