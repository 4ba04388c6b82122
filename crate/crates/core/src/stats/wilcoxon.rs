use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::rank::average_ranks;
use crate::error::{Error, Result};

pub const MIN_NONZERO: usize = 5;
/// Largest sample size for which the exact null distribution is used.
pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of the positive differences.
    pub statistic: f64,
    /// One-sided p-value for differences shifted above zero.
    pub p_value: f64,
    /// Differences left after dropping zeros.
    pub n: usize,
    pub exact: bool,
}

/// Number of sign assignments of ranks 1..=n reaching each rank sum.
fn rank_sum_counts(n: usize) -> Vec<f64> {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0.0; max + 1];
    counts[0] = 1.0;
    for r in 1..=n {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    counts
}

/// One-sided Wilcoxon signed-rank test (alternative: median difference > 0).
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<WilcoxonResult> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidConfig("differences must be finite".into()));
    }
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    if nonzero.is_empty() && !diffs.is_empty() {
        return Err(Error::AllZeroDiffs);
    }
    let n = nonzero.len();
    if n < MIN_NONZERO {
        return Err(Error::SeriesTooShort { len: n, min: MIN_NONZERO });
    }
    let magnitudes: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&magnitudes);
    let statistic: f64 = nonzero.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();

    let mut sorted = magnitudes.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }

    if tie_term == 0.0 && n <= EXACT_MAX_N {
        let counts = rank_sum_counts(n);
        let w = statistic.round() as usize;
        let upper: f64 = counts[w..].iter().sum();
        let p = upper / 2f64.powi(n as i32);
        return Ok(WilcoxonResult { statistic, p_value: p.clamp(0.0, 1.0), n, exact: true });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = (statistic - mean - 0.5) / var.sqrt();
    let p = 0.5 * erfc(z / std::f64::consts::SQRT_2);
    Ok(WilcoxonResult { statistic, p_value: p.clamp(0.0, 1.0), n, exact: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Upper-tail probability of W+ by enumerating every sign vector.
    fn enumerate_p(diffs: &[f64]) -> f64 {
        let n = diffs.len();
        let ranks = average_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
        let observed: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
        let mut hits = 0u64;
        for mask in 0u64..(1 << n) {
            let w: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
            if w >= observed {
                hits += 1;
            }
        }
        hits as f64 / (1u64 << n) as f64
    }

    #[test]
    fn all_positive_six() {
        let r = wilcoxon_signed_rank(&[0.3, 1.2, 0.5, 2.0, 0.9, 0.1]).unwrap();
        assert_eq!(r.statistic, 21.0);
        assert!(r.exact);
        assert!((r.p_value - 1.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn antisymmetric_is_not_rejected() {
        let r = wilcoxon_signed_rank(&[1.0, -1.0, 2.0, -2.0, 3.0, -3.0, 4.0, -4.0]).unwrap();
        assert!(r.p_value >= 0.5);
    }

    #[test]
    fn exact_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in MIN_NONZERO..=12 {
            for _ in 0..20 {
                let diffs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.5)).collect();
                let r = wilcoxon_signed_rank(&diffs).unwrap();
                assert!(r.exact);
                assert!((r.p_value - enumerate_p(&diffs)).abs() < 1e-12, "n = {n}");
            }
        }
    }

    #[test]
    fn large_sample_uses_normal_approximation() {
        let diffs: Vec<f64> = (1..=40).map(|i| f64::from(i) * if i % 4 == 0 { -1.0 } else { 1.0 }).collect();
        let r = wilcoxon_signed_rank(&diffs).unwrap();
        assert!(!r.exact);
        assert!(r.p_value < 0.01);
    }

    #[test]
    fn zeros_are_dropped() {
        assert!(matches!(wilcoxon_signed_rank(&[0.0; 8]), Err(Error::AllZeroDiffs)));
        let r = wilcoxon_signed_rank(&[0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(r.n, 5);
        assert!(matches!(wilcoxon_signed_rank(&[0.0, 1.0, 2.0, 3.0, 4.0]), Err(Error::SeriesTooShort { len: 4, .. })));
    }
}
