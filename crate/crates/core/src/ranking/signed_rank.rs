//! Wilcoxon signed-rank test and Holm step-down adjustment.

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num};
use statrs::function::erf::erfc;

use super::RankingError;

/// How zero differences enter the test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum ZeroMethod {
    /// Drop zeros before ranking.
    #[default]
    Wilcox,
    /// Rank zeros with the rest, then leave them out of the statistic.
    Pratt,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonOptions {
    pub zero_method: ZeroMethod,
    /// Largest number of nonzero differences handled by exact enumeration.
    pub exact_max_n: usize,
}

impl Default for WilcoxonOptions {
    fn default() -> Self {
        Self {
            zero_method: ZeroMethod::Wilcox,
            exact_max_n: 25,
        }
    }
}

/// A p-value; exact-path results also carry the rational `count / 2^n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PValue {
    pub value: f64,
    pub exact: Option<Ratio<u64>>,
}

impl PValue {
    fn exact(count: u64, total: u64) -> Self {
        let r = Ratio::new(count, total);
        Self {
            value: count as f64 / total as f64,
            exact: Some(r),
        }
    }

    fn approx(value: f64) -> Self {
        Self {
            value: value.clamp(0.0, 1.0),
            exact: None,
        }
    }
}

/// Average ranks (1-based) of `values`, ties sharing the mean position.
/// `+inf` sorts last.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        // Positions i+1..=j share their average.
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Ranked absolute differences prepared for either one-sided direction.
#[derive(Debug, Clone)]
pub(crate) struct SignedRanks {
    /// Ranks of the nonzero differences.
    ranks: Vec<f64>,
    /// Sum of ranks of the positive differences.
    w_plus: f64,
}

impl SignedRanks {
    pub(crate) fn new(diffs: &[f64], zero_method: ZeroMethod) -> Result<Self, RankingError> {
        if diffs.iter().any(|d| d.is_nan()) {
            return Err(RankingError::TestUndefined("NaN difference"));
        }
        let kept: Vec<f64> = match zero_method {
            ZeroMethod::Wilcox => diffs.iter().copied().filter(|&d| d != 0.0).collect(),
            ZeroMethod::Pratt => diffs.to_vec(),
        };
        let abs: Vec<f64> = kept.iter().map(|d| d.abs()).collect();
        let all_ranks = average_ranks(&abs);
        let mut ranks = Vec::with_capacity(kept.len());
        let mut w_plus = 0.0;
        for (&d, &r) in kept.iter().zip(&all_ranks) {
            if d != 0.0 {
                ranks.push(r);
                if d > 0.0 {
                    w_plus += r;
                }
            }
        }
        if ranks.is_empty() {
            return Err(RankingError::TestUndefined("all differences are zero"));
        }
        Ok(Self { ranks, w_plus })
    }

    fn total(&self) -> f64 {
        self.ranks.iter().sum()
    }

    /// P(W+ ≥ observed) under the null: the differences tend to be positive.
    pub(crate) fn p_greater(&self, opts: &WilcoxonOptions) -> Result<PValue, RankingError> {
        self.upper_tail(self.w_plus, opts)
    }

    /// P(W− ≥ observed): the differences tend to be negative.
    pub(crate) fn p_less(&self, opts: &WilcoxonOptions) -> Result<PValue, RankingError> {
        self.upper_tail(self.total() - self.w_plus, opts)
    }

    fn upper_tail(&self, w: f64, opts: &WilcoxonOptions) -> Result<PValue, RankingError> {
        if self.ranks.len() <= opts.exact_max_n {
            Ok(self.exact_upper_tail(w))
        } else {
            self.normal_upper_tail(w)
        }
    }

    /// Counts sign assignments with W+ ≥ `w` by dynamic programming over
    /// doubled (hence integral) ranks.
    fn exact_upper_tail(&self, w: f64) -> PValue {
        let doubled: Vec<usize> = self.ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max: usize = doubled.iter().sum();
        let mut counts = vec![0u64; max + 1];
        counts[0] = 1;
        let mut reach = 0;
        for &r in &doubled {
            for s in (0..=reach).rev() {
                if counts[s] > 0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        let threshold = (2.0 * w).round() as usize;
        let count: u64 = counts[threshold.min(max + 1)..].iter().sum();
        PValue::exact(count, 1u64 << self.ranks.len())
    }

    /// Normal approximation with continuity correction. The variance
    /// `Σr²/4` equals the textbook tie-corrected form for average ranks.
    fn normal_upper_tail(&self, w: f64) -> Result<PValue, RankingError> {
        let mean = self.total() / 2.0;
        let var: f64 = self.ranks.iter().map(|r| r * r).sum::<f64>() / 4.0;
        if var <= 0.0 {
            return Err(RankingError::TestUndefined("zero variance"));
        }
        let z = (w - mean - 0.5) / var.sqrt();
        Ok(PValue::approx(0.5 * erfc(z / std::f64::consts::SQRT_2)))
    }
}

/// One-sided Wilcoxon signed-rank test that the paired differences are
/// shifted above zero.
pub fn wilcoxon_signed_rank(diffs: &[f64], opts: &WilcoxonOptions) -> Result<PValue, RankingError> {
    SignedRanks::new(diffs, opts.zero_method)?.p_greater(opts)
}

/// Holm step-down adjustment; results keep the input order.
///
/// Generic so it can run on exact rationals as well as floats.
pub fn holm_adjust<T>(pvalues: &[T]) -> Vec<T>
where
    T: Copy + PartialOrd + Num + FromPrimitive,
{
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].partial_cmp(&pvalues[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = vec![T::zero(); m];
    let mut running = T::zero();
    for (i, &k) in order.iter().enumerate() {
        let factor = T::from_usize(m - i).expect("test count representable");
        let mut adj = pvalues[k] * factor;
        if adj > T::one() {
            adj = T::one();
        }
        if adj > running {
            running = adj;
        }
        out[k] = running;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn average_rank_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(average_ranks(&[f64::INFINITY, 1.0, f64::INFINITY]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn all_positive_five() {
        let p = wilcoxon_signed_rank(&[0.3, 1.2, 0.5, 2.0, 0.1], &WilcoxonOptions::default()).unwrap();
        assert_eq!(p.value, 0.03125);
        assert_eq!(p.exact, Some(Ratio::new(1, 32)));
    }

    #[test]
    fn symmetric_differences_are_not_significant() {
        let p = wilcoxon_signed_rank(&[1.0, -1.0, 2.0, -2.0, 3.0, -3.0], &WilcoxonOptions::default()).unwrap();
        assert!(p.value >= 0.5);
    }

    #[test]
    fn zeros_are_dropped_or_undefined() {
        let o = WilcoxonOptions::default();
        assert!(matches!(
            wilcoxon_signed_rank(&[0.0, 0.0, 0.0], &o),
            Err(RankingError::TestUndefined(_))
        ));
        let with_zero = wilcoxon_signed_rank(&[0.0, 1.0, 2.0, 3.0], &o).unwrap();
        assert_eq!(with_zero.exact, Some(Ratio::new(1, 8)));
        let pratt = WilcoxonOptions {
            zero_method: ZeroMethod::Pratt,
            ..o
        };
        // Ranks 2,3,4 keep their Pratt positions: only the all-positive pattern reaches 9.
        let p = wilcoxon_signed_rank(&[0.0, 1.0, 2.0, 3.0], &pratt).unwrap();
        assert_eq!(p.exact, Some(Ratio::new(1, 8)));
    }

    #[test]
    fn exact_enumeration_matches_brute_force() {
        let diffs = [0.5, -1.5, 2.0, 2.0, -0.25, 3.0, -2.0, 1.0];
        let p = wilcoxon_signed_rank(&diffs, &WilcoxonOptions::default()).unwrap();
        let abs: Vec<f64> = diffs.iter().map(|d: &f64| d.abs()).collect();
        let ranks = average_ranks(&abs);
        let observed: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
        let n = diffs.len();
        let hits = (0u32..1 << n)
            .filter(|mask| {
                let w: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
                w >= observed - 1e-9
            })
            .count();
        assert_eq!(p.exact, Some(Ratio::new(hits as u64, 1 << n)));
    }

    #[test]
    fn normal_path_is_close_to_exact() {
        let diffs: Vec<f64> = (1..=24).map(|i| if i % 3 == 0 { -(i as f64) } else { i as f64 }).collect();
        let exact = wilcoxon_signed_rank(&diffs, &WilcoxonOptions::default()).unwrap();
        let approx = wilcoxon_signed_rank(
            &diffs,
            &WilcoxonOptions {
                exact_max_n: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(approx.exact.is_none());
        assert!((exact.value - approx.value).abs() < 0.01, "{exact:?} {approx:?}");
    }

    #[test]
    fn holm_examples() {
        let adj = holm_adjust(&[Ratio::new(1i64, 100), Ratio::new(4, 100), Ratio::new(3, 100)]);
        assert_eq!(adj, vec![Ratio::new(3, 100), Ratio::new(6, 100), Ratio::new(6, 100)]);
        assert_eq!(holm_adjust(&[0.2]), vec![0.2]);
        assert_eq!(holm_adjust(&[0.2; 4]), vec![0.8; 4]);
        assert_eq!(holm_adjust(&[0.5, 0.4]), vec![0.8, 0.8]);
        assert_eq!(holm_adjust::<f64>(&[]), Vec::<f64>::new());
    }
}
