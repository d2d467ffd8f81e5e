//! Evaluation metrics for multi-label nowcasting: micro-averaged F1 and
//! average precision, ranking metrics at a cutoff, and the
//! predicted-count diagnostic.
//!
//! Scores and truth are `instances × labels` tensors; truth entries are
//! 0/1. Score ties in rankings break by ascending label id so results are
//! deterministic.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check_pair(op: &'static str, scores: &Tensor, truth: &Tensor) -> Result<()> {
    if scores.shape() != truth.shape() {
        return Err(Error::Dimension {
            op,
            detail: alloc::format!("scores {:?} vs truth {:?}", scores.shape(), truth.shape()),
        });
    }
    Ok(())
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(alloc::format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    Ok(())
}

/// Micro-averaged F1 over all (instance, label) pairs at a decision
/// threshold. With no true positives and nothing predicted, F1 is 0.
pub fn f1_micro(scores: &Tensor, truth: &Tensor, threshold: f64) -> Result<f64> {
    check_pair("f1_micro", scores, truth)?;
    check_threshold(threshold)?;
    let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
    for (&s, &y) in scores.data().iter().zip(truth.data()) {
        let pred = s >= threshold;
        let pos = y != 0.0;
        match (pred, pos) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    if 2 * tp + fp + fneg == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fneg) as f64)
}

/// Micro-pooled average precision: all (instance, label) scores are pooled,
/// sorted descending (stable, so ties keep pool order), and
/// `Σ (R_n − R_{n−1}) · P_n` is accumulated down the list.
pub fn pr_auc_micro(scores: &Tensor, truth: &Tensor) -> Result<f64> {
    check_pair("pr_auc_micro", scores, truth)?;
    let total_pos = truth.data().iter().filter(|&&y| y != 0.0).count();
    if total_pos == 0 {
        return Err(Error::Data("average precision is undefined with zero positives".into()));
    }
    let mut order: Vec<usize> = (0..scores.numel()).collect();
    order.sort_by(|&a, &b| scores.data()[b].total_cmp(&scores.data()[a]));
    let mut tp = 0usize;
    let mut ap = 0.0;
    for (n, &idx) in order.iter().enumerate() {
        if truth.data()[idx] != 0.0 {
            tp += 1;
            // recall step is 1/total_pos, precision is tp/(n+1)
            ap += tp as f64 / (n + 1) as f64 / total_pos as f64;
        }
    }
    Ok(ap)
}

/// Label ids of one instance ranked by (score descending, id ascending).
fn ranked_labels(row: &[f64]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..row.len()).collect();
    ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    ids
}

/// Mean over instances of the fraction of the top-k ranked labels that are
/// relevant.
pub fn precision_at_k(scores: &Tensor, truth: &Tensor, k: usize) -> Result<f64> {
    check_pair("precision_at_k", scores, truth)?;
    if k == 0 {
        return Err(Error::Config("ranking cutoff k must be ≥ 1".into()));
    }
    let cols = scores.cols();
    let rows = scores.rows();
    let mut total = 0.0;
    for r in 0..rows {
        let row = &scores.data()[r * cols..(r + 1) * cols];
        let truth_row = &truth.data()[r * cols..(r + 1) * cols];
        let hits =
            ranked_labels(row).iter().take(k).filter(|&&id| truth_row[id] != 0.0).count();
        total += hits as f64 / k as f64;
    }
    Ok(total / rows as f64)
}

/// NDCG at a cutoff under the same-timestamp tie rule: all `m` targets of
/// an instance share one (top) ideal rank, so the ideal DCG is `min(k, m)`
/// and a perfect ranking of `m > 1` targets still scores below 1.
/// Instances without targets are skipped.
pub fn ndcg_at_k(scores: &Tensor, truth: &Tensor, k: usize) -> Result<f64> {
    check_pair("ndcg_at_k", scores, truth)?;
    if k == 0 {
        return Err(Error::Config("ranking cutoff k must be ≥ 1".into()));
    }
    let cols = scores.cols();
    let rows = scores.rows();
    let mut total = 0.0;
    let mut counted = 0usize;
    for r in 0..rows {
        let row = &scores.data()[r * cols..(r + 1) * cols];
        let truth_row = &truth.data()[r * cols..(r + 1) * cols];
        let m = truth_row.iter().filter(|&&y| y != 0.0).count();
        if m == 0 {
            continue;
        }
        let mut dcg = 0.0;
        for (j, &id) in ranked_labels(row).iter().take(k).enumerate() {
            if truth_row[id] != 0.0 {
                dcg += 1.0 / libm::log2((j + 2) as f64);
            }
        }
        total += dcg / m.min(k) as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::Data("no instance with targets to rank".into()));
    }
    Ok(total / counted as f64)
}

fn mean_std(counts: &[f64]) -> (f64, f64) {
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|&c| (c - mean) * (c - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

/// Per-instance count of labels scored at or above the threshold;
/// population mean and standard deviation.
pub fn avg_predicted_count(scores: &Tensor, threshold: f64) -> Result<(f64, f64)> {
    check_threshold(threshold)?;
    let cols = scores.cols();
    let counts: Vec<f64> = (0..scores.rows())
        .map(|r| {
            scores.data()[r * cols..(r + 1) * cols].iter().filter(|&&s| s >= threshold).count()
                as f64
        })
        .collect();
    Ok(mean_std(&counts))
}

/// Per-instance count of true targets; population mean and standard
/// deviation.
pub fn avg_true_count(truth: &Tensor) -> (f64, f64) {
    let cols = truth.cols();
    let counts: Vec<f64> = (0..truth.rows())
        .map(|r| {
            truth.data()[r * cols..(r + 1) * cols].iter().filter(|&&y| y != 0.0).count() as f64
        })
        .collect();
    mean_std(&counts)
}

/// One evaluation over a scored set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub instances: usize,
    pub threshold: f64,
    pub k: usize,
    pub f1: f64,
    pub pr_auc: f64,
    pub precision_at_k: f64,
    pub ndcg_at_k: f64,
    pub pred_count_mean: f64,
    pub pred_count_std: f64,
    pub true_count_mean: f64,
    pub true_count_std: f64,
}

pub fn evaluate(scores: &Tensor, truth: &Tensor, threshold: f64, k: usize) -> Result<EvalReport> {
    let (pred_count_mean, pred_count_std) = avg_predicted_count(scores, threshold)?;
    let (true_count_mean, true_count_std) = avg_true_count(truth);
    Ok(EvalReport {
        instances: scores.rows(),
        threshold,
        k,
        f1: f1_micro(scores, truth, threshold)?,
        pr_auc: pr_auc_micro(scores, truth)?,
        precision_at_k: precision_at_k(scores, truth, k)?,
        ndcg_at_k: ndcg_at_k(scores, truth, k)?,
        pred_count_mean,
        pred_count_std,
        true_count_mean,
        true_count_std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn t(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        Tensor::matrix(rows, cols, data).unwrap()
    }

    #[test]
    fn f1_perfect_and_empty() {
        let truth = t(2, 3, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let perfect = t(2, 3, vec![0.9, 0.1, 0.8, 0.2, 0.7, 0.3]);
        assert_eq!(f1_micro(&perfect, &truth, 0.5).unwrap(), 1.0);
        let nothing = t(2, 3, vec![0.1; 6]);
        assert_eq!(f1_micro(&nothing, &truth, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn f1_hand_confusion_counts() {
        // TP = 2, FP = 1, FN = 1 → F1 = 2/3
        let truth = t(2, 3, vec![1.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let scores = t(2, 3, vec![0.9, 0.1, 0.1, 0.9, 0.9, 0.1]);
        let f1 = f1_micro(&scores, &truth, 0.5).unwrap();
        assert!((f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn f1_rejects_bad_threshold() {
        let truth = t(1, 2, vec![1.0, 0.0]);
        assert!(f1_micro(&truth, &truth, 0.0).is_err());
        assert!(f1_micro(&truth, &truth, 1.0).is_err());
    }

    #[test]
    fn average_precision_separable_and_hand_case() {
        let truth = t(1, 4, vec![1.0, 1.0, 0.0, 0.0]);
        let scores = t(1, 4, vec![0.9, 0.8, 0.2, 0.1]);
        assert!((pr_auc_micro(&scores, &truth).unwrap() - 1.0).abs() < 1e-15);

        // five scores, positives at sorted positions 1, 3, 4
        let truth = t(1, 5, vec![1.0, 0.0, 1.0, 1.0, 0.0]);
        let scores = t(1, 5, vec![0.9, 0.8, 0.7, 0.6, 0.5]);
        let expect = (1.0 + 2.0 / 3.0 + 3.0 / 4.0) / 3.0;
        assert!((pr_auc_micro(&scores, &truth).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn average_precision_needs_a_positive() {
        let truth = t(1, 3, vec![0.0; 3]);
        let scores = t(1, 3, vec![0.5, 0.4, 0.3]);
        assert!(matches!(pr_auc_micro(&scores, &truth), Err(Error::Data(_))));
    }

    #[test]
    fn precision_at_k_cases() {
        // all of the top 5 relevant
        let truth = t(1, 6, vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
        let scores = t(1, 6, vec![0.9, 0.8, 0.7, 0.6, 0.5, 0.4]);
        assert_eq!(precision_at_k(&scores, &truth, 5).unwrap(), 1.0);

        // m = 2 relevant, both ranked in the top 5 → 2/5
        let truth = t(1, 10, vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let scores = t(1, 10, vec![0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05]);
        assert!((precision_at_k(&scores, &truth, 5).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn ndcg_tie_rule_cases() {
        // m = 1 relevant at rank 1 → 1.0
        let truth = t(1, 4, vec![1.0, 0.0, 0.0, 0.0]);
        let scores = t(1, 4, vec![0.9, 0.5, 0.4, 0.3]);
        assert_eq!(ndcg_at_k(&scores, &truth, 5).unwrap(), 1.0);

        // m = 2, relevant at ranks 1 and 3 → (1 + 1/2) / 2 = 0.75
        let truth = t(1, 5, vec![1.0, 0.0, 1.0, 0.0, 0.0]);
        let scores = t(1, 5, vec![0.9, 0.8, 0.7, 0.2, 0.1]);
        assert!((ndcg_at_k(&scores, &truth, 5).unwrap() - 0.75).abs() < 1e-15);

        // a perfect ranking of m = 3 targets still scores below 1
        let truth = t(1, 5, vec![1.0, 1.0, 1.0, 0.0, 0.0]);
        let scores = t(1, 5, vec![0.9, 0.8, 0.7, 0.2, 0.1]);
        let v = ndcg_at_k(&scores, &truth, 5).unwrap();
        assert!(v < 1.0 && v > 0.0);
        let expect = (1.0 + 1.0 / libm::log2(3.0) + 0.5) / 3.0;
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn ranking_ties_break_by_label_id() {
        let row = vec![0.5, 0.7, 0.5, 0.2];
        assert_eq!(ranked_labels(&row), vec![1, 0, 2, 3]);
    }

    #[test]
    fn predicted_count_cases() {
        let scores = t(2, 20, vec![0.6; 40]);
        let (mean, std) = avg_predicted_count(&scores, 0.5).unwrap();
        assert_eq!((mean, std), (20.0, 0.0));

        let scores = t(2, 20, vec![0.4; 40]);
        let (mean, _) = avg_predicted_count(&scores, 0.5).unwrap();
        assert_eq!(mean, 0.0);

        // three instances with 1, 2, 3 predictions
        let scores = t(3, 3, vec![0.9, 0.1, 0.1, 0.9, 0.9, 0.1, 0.9, 0.9, 0.9]);
        let (mean, std) = avg_predicted_count(&scores, 0.5).unwrap();
        assert!((mean - 2.0).abs() < 1e-15);
        assert!((std - libm::sqrt(2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn evaluate_produces_consistent_report() {
        let truth = t(2, 4, vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let scores = t(2, 4, vec![0.9, 0.2, 0.1, 0.8, 0.3, 0.7, 0.2, 0.1]);
        let r = evaluate(&scores, &truth, 0.5, 2).unwrap();
        assert_eq!(r.instances, 2);
        assert_eq!(r.f1, 1.0);
        assert_eq!(r.pr_auc, 1.0);
        assert!((r.true_count_mean - 1.5).abs() < 1e-15);
    }
}
