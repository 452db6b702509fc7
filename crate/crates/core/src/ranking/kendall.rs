use std::cmp::Ordering;

use super::{Ranking, RankingError};

/// Kendall's τ-b between two rankings of the same teams.
///
/// When either ranking ties every team the coefficient is 0/0; it is
/// reported as 1 if both are fully tied (no disagreement is possible) and
/// 0 if only one is.
pub fn kendall_tau(a: &Ranking, b: &Ranking) -> Result<f64, RankingError> {
    let n = a.len();
    if n != b.len() {
        return Err(RankingError::LengthMismatch { expected: n, got: b.len() });
    }
    if n < 2 {
        return Err(RankingError::TooFewTeams { needed: 2, got: n });
    }
    let (mut concordant, mut discordant, mut ties_a, mut ties_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            let sa = a.ranks[i].total_cmp(&a.ranks[j]);
            let sb = b.ranks[i].total_cmp(&b.ranks[j]);
            match (sa, sb) {
                (Ordering::Equal, Ordering::Equal) => {
                    ties_a += 1;
                    ties_b += 1;
                }
                (Ordering::Equal, _) => ties_a += 1,
                (_, Ordering::Equal) => ties_b += 1,
                (x, y) if x == y => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    let (free_a, free_b) = (pairs - ties_a, pairs - ties_b);
    Ok(match (free_a, free_b) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ => (concordant - discordant) as f64 / ((free_a as f64) * (free_b as f64)).sqrt(),
    })
}
