//! Lag alignment, rank statistics and the per-ego / per-corpus evaluation of
//! risk series against driver jerk.

mod eval;
mod lag;
mod rank;
mod wilcoxon;

pub use eval::{
    compare_configs, evaluate_corpus, evaluate_ego, read_results_csv, summarize, write_comparison_csv,
    write_comparison_long_csv, write_results_csv, ConfigComparison, CorpusEvaluation, CorrelationResult, EgoFailure,
    EvalConfig, Summary, Verdict,
};
pub use lag::{best_lag, Lag};
pub use rank::{average_ranks, pearson, spearman};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};

/// Neumaier-compensated sum; order-dependent only through the input order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(compensated_sum(values.iter().copied()) / values.len() as f64)
    }
}

/// Population standard deviation (divides by n).
pub fn std_dev(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    let ss = compensated_sum(values.iter().map(|v| (v - m) * (v - m)));
    Some((ss / values.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let values = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(values), 2.0);
        assert_eq!(compensated_sum([]), 0.0);
    }

    #[test]
    fn moments() {
        assert_eq!(mean(&[]), None);
        assert_eq!(mean(&[1.0, 2.0, 3.0]), Some(2.0));
        assert_eq!(std_dev(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]), Some(2.0));
    }
}
