use statrs::distribution::{ContinuousCDF, Normal};

use crate::ranking::average_ranks;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum MannWhitneyError {
    #[error("sample `{0}` is empty")]
    EmptySample(&'static str),
    #[error("NaN in sample")]
    NaN,
}

/// Result of a two-sample Mann–Whitney U test.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MannWhitney {
    /// Pairs (x from a, y from b) with x > y, ties counting one half.
    pub u: f64,
    /// P(U ≤ u): `a` tends to be smaller.
    pub p_less: f64,
    /// P(U ≥ u): `a` tends to be larger.
    pub p_greater: f64,
    pub p_two_sided: f64,
    pub exact: bool,
}

/// Largest pooled sample size handled by exact enumeration.
pub const EXACT_MAX_TOTAL: usize = 20;

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, MannWhitneyError> {
    if a.is_empty() {
        return Err(MannWhitneyError::EmptySample("a"));
    }
    if b.is_empty() {
        return Err(MannWhitneyError::EmptySample("b"));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(MannWhitneyError::NaN);
    }
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&pooled);
    let rank_sum_a: f64 = ranks[..na].iter().sum();
    let u = rank_sum_a - (na * (na + 1)) as f64 / 2.0;

    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let tie_sizes: Vec<usize> = sorted
        .chunk_by(|x, y| x == y)
        .map(|c| c.len())
        .filter(|&t| t > 1)
        .collect();

    let (p_less, p_greater, exact) = if na + nb <= EXACT_MAX_TOTAL && tie_sizes.is_empty() {
        let (le, ge) = exact_tails(na, nb, u.round() as usize);
        (le, ge, true)
    } else {
        let (le, ge) = normal_tails(na, nb, u, &tie_sizes);
        (le, ge, false)
    };
    Ok(MannWhitney {
        u,
        p_less,
        p_greater,
        p_two_sided: (2.0 * p_less.min(p_greater)).min(1.0),
        exact,
    })
}

/// Exact null tails P(U ≤ u) and P(U ≥ u) for tie-free samples, by counting
/// rank subsets of size `na` per rank sum.
fn exact_tails(na: usize, nb: usize, u: usize) -> (f64, f64) {
    let n = na + nb;
    let max_sum = n * (n + 1) / 2;
    // ways[k][s]: subsets of {1..i} of size k with rank sum s.
    let mut ways = vec![vec![0u64; max_sum + 1]; na + 1];
    ways[0][0] = 1;
    for r in 1..=n {
        for k in (1..=na.min(r)).rev() {
            for s in (r..=max_sum).rev() {
                ways[k][s] += ways[k - 1][s - r];
            }
        }
    }
    let offset = na * (na + 1) / 2;
    let counts = &ways[na][offset..=offset + na * nb];
    let total: u64 = counts.iter().sum();
    let le: u64 = counts[..=u].iter().sum();
    let ge: u64 = counts[u..].iter().sum();
    (le as f64 / total as f64, ge as f64 / total as f64)
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity
/// correction.
fn normal_tails(na: usize, nb: usize, u: f64, tie_sizes: &[usize]) -> (f64, f64) {
    let (na, nb) = (na as f64, nb as f64);
    let n = na + nb;
    let mean = na * nb / 2.0;
    let tie_term: f64 = tie_sizes.iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        // Every value identical: no evidence either way.
        return (1.0, 1.0);
    }
    let std = Normal::standard();
    let sd = var.sqrt();
    let le = std.cdf((u - mean + 0.5) / sd);
    let ge = std.sf((u - mean - 0.5) / sd);
    (le.min(1.0), ge.min(1.0))
}
