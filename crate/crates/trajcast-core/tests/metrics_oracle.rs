//! Brute-force oracles for every metric, compared exactly against the
//! library implementations on randomized instances. The oracles recompute
//! each quantity from its definition with independent (and deliberately
//! naive) code paths: prefix rescans for average precision, repeated
//! argmax selection for rankings, and separate precision/recall for F1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trajcast_core::metrics;
use trajcast_core::Tensor;

const TOL: f64 = 1e-12;

struct Case {
    scores: Vec<Vec<f64>>,
    truth: Vec<Vec<bool>>,
}

impl Case {
    fn random(rng: &mut ChaCha8Rng, instances: usize, max_labels: usize) -> Case {
        let labels = rng.gen_range(1..=max_labels);
        let mut scores = Vec::new();
        let mut truth = Vec::new();
        for _ in 0..instances {
            scores.push((0..labels).map(|_| rng.gen::<f64>()).collect());
            truth.push((0..labels).map(|_| rng.gen::<f64>() < 0.35).collect());
        }
        Case { scores, truth }
    }

    fn tensors(&self) -> (Tensor, Tensor) {
        let rows = self.scores.len();
        let cols = self.scores[0].len();
        let s: Vec<f64> = self.scores.iter().flatten().copied().collect();
        let t: Vec<f64> =
            self.truth.iter().flatten().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        (Tensor::matrix(rows, cols, s).unwrap(), Tensor::matrix(rows, cols, t).unwrap())
    }

    fn positives(&self) -> usize {
        self.truth.iter().flatten().filter(|&&b| b).count()
    }
}

// ── oracles ──────────────────────────────────────────────────────────

fn f1_oracle(case: &Case, threshold: f64) -> f64 {
    let mut tp = 0.0;
    let mut predicted = 0.0;
    let mut actual = 0.0;
    for (srow, trow) in case.scores.iter().zip(&case.truth) {
        for (s, &y) in srow.iter().zip(trow) {
            let p = *s >= threshold;
            if p {
                predicted += 1.0;
            }
            if y {
                actual += 1.0;
            }
            if p && y {
                tp += 1.0;
            }
        }
    }
    if predicted == 0.0 || actual == 0.0 || tp == 0.0 {
        return 0.0;
    }
    let precision = tp / predicted;
    let recall = tp / actual;
    2.0 * precision * recall / (precision + recall)
}

/// Average precision by prefix rescan: sort the pooled list (stable,
/// descending), then recompute precision and recall of every prefix from
/// scratch and accumulate rectangle areas.
fn ap_oracle(case: &Case) -> f64 {
    let mut pool: Vec<(f64, bool)> = Vec::new();
    for (srow, trow) in case.scores.iter().zip(&case.truth) {
        for (s, &y) in srow.iter().zip(trow) {
            pool.push((*s, y));
        }
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| pool[b].0.total_cmp(&pool[a].0));
    let total_pos = pool.iter().filter(|(_, y)| *y).count() as f64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for n in 1..=order.len() {
        // full rescan of the prefix
        let prefix_tp = order[..n].iter().filter(|&&i| pool[i].1).count() as f64;
        let precision = prefix_tp / n as f64;
        let recall = prefix_tp / total_pos;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// Top-k selection by repeated argmax under (score desc, id asc).
fn top_k_oracle(row: &[f64], k: usize) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..row.len()).collect();
    let mut out = Vec::new();
    while out.len() < k && !remaining.is_empty() {
        let mut best = 0;
        for i in 1..remaining.len() {
            let (a, b) = (remaining[i], remaining[best]);
            if row[a] > row[b] || (row[a] == row[b] && a < b) {
                best = i;
            }
        }
        out.push(remaining.remove(best));
    }
    out
}

fn precision_at_k_oracle(case: &Case, k: usize) -> f64 {
    let mut total = 0.0;
    for (srow, trow) in case.scores.iter().zip(&case.truth) {
        let hits = top_k_oracle(srow, k).iter().filter(|&&i| trow[i]).count();
        total += hits as f64 / k as f64;
    }
    total / case.scores.len() as f64
}

fn ndcg_oracle(case: &Case, k: usize) -> Option<f64> {
    let mut total = 0.0;
    let mut counted = 0;
    for (srow, trow) in case.scores.iter().zip(&case.truth) {
        let m = trow.iter().filter(|&&y| y).count();
        if m == 0 {
            continue;
        }
        let mut dcg = 0.0;
        for (rank, &i) in top_k_oracle(srow, k).iter().enumerate() {
            if trow[i] {
                dcg += 1.0 / ((rank + 2) as f64).log2();
            }
        }
        let idcg = m.min(k) as f64;
        total += dcg / idcg;
        counted += 1;
    }
    (counted > 0).then(|| total / counted as f64)
}

fn count_oracle(case: &Case, threshold: f64) -> (f64, f64) {
    let counts: Vec<f64> = case
        .scores
        .iter()
        .map(|row| row.iter().filter(|&&s| s >= threshold).count() as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    let var =
        counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / counts.len() as f64;
    (mean, var.sqrt())
}

// ── comparisons ──────────────────────────────────────────────────────

#[test]
fn all_metrics_match_brute_force_on_a_thousand_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut instances_done = 0;
    let mut batch_idx = 0;
    while instances_done < 1000 {
        batch_idx += 1;
        let n = 25;
        let case = Case::random(&mut rng, n, 10);
        instances_done += n;
        let (scores, truth) = case.tensors();

        let f1 = metrics::f1_micro(&scores, &truth, 0.5).unwrap();
        assert!(
            (f1 - f1_oracle(&case, 0.5)).abs() < TOL,
            "f1 mismatch in batch {batch_idx}"
        );

        if case.positives() > 0 {
            let ap = metrics::pr_auc_micro(&scores, &truth).unwrap();
            assert!(
                (ap - ap_oracle(&case)).abs() < TOL,
                "average precision mismatch in batch {batch_idx}"
            );
        }

        for k in [1usize, 3, 5] {
            let p = metrics::precision_at_k(&scores, &truth, k).unwrap();
            assert!(
                (p - precision_at_k_oracle(&case, k)).abs() < TOL,
                "precision@{k} mismatch in batch {batch_idx}"
            );
            if let Some(expect) = ndcg_oracle(&case, k) {
                let v = metrics::ndcg_at_k(&scores, &truth, k).unwrap();
                assert!(
                    (v - expect).abs() < TOL,
                    "ndcg@{k} mismatch in batch {batch_idx}"
                );
            }
        }

        let (mean, std) = metrics::avg_predicted_count(&scores, 0.5).unwrap();
        let (om, os) = count_oracle(&case, 0.5);
        assert!((mean - om).abs() < TOL && (std - os).abs() < TOL);
    }
    assert!(instances_done >= 1000);
}

#[test]
fn metrics_agree_with_oracles_under_deliberate_score_ties() {
    let case = Case {
        scores: vec![
            vec![0.5, 0.5, 0.5, 0.9, 0.1],
            vec![0.7, 0.7, 0.2, 0.2, 0.2],
            vec![0.5, 0.5, 0.5, 0.5, 0.5],
        ],
        truth: vec![
            vec![true, false, true, false, true],
            vec![false, true, true, false, false],
            vec![true, true, false, false, true],
        ],
    };
    let (scores, truth) = case.tensors();
    for k in [1usize, 2, 5] {
        let p = metrics::precision_at_k(&scores, &truth, k).unwrap();
        assert!((p - precision_at_k_oracle(&case, k)).abs() < TOL);
        let n = metrics::ndcg_at_k(&scores, &truth, k).unwrap();
        assert!((n - ndcg_oracle(&case, k).unwrap()).abs() < TOL);
    }
    let ap = metrics::pr_auc_micro(&scores, &truth).unwrap();
    assert!((ap - ap_oracle(&case)).abs() < TOL);
}

#[test]
fn metrics_are_invariant_to_instance_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let case = Case::random(&mut rng, 12, 8);
    let permuted = Case {
        scores: {
            let mut s = case.scores.clone();
            s.rotate_left(5);
            s
        },
        truth: {
            let mut t = case.truth.clone();
            t.rotate_left(5);
            t
        },
    };
    let (s1, t1) = case.tensors();
    let (s2, t2) = permuted.tensors();
    assert!(
        (metrics::f1_micro(&s1, &t1, 0.5).unwrap()
            - metrics::f1_micro(&s2, &t2, 0.5).unwrap())
        .abs()
            < TOL
    );
    assert!(
        (metrics::pr_auc_micro(&s1, &t1).unwrap() - metrics::pr_auc_micro(&s2, &t2).unwrap())
            .abs()
            < TOL
    );
    assert!(
        (metrics::ndcg_at_k(&s1, &t1, 5).unwrap() - metrics::ndcg_at_k(&s2, &t2, 5).unwrap())
            .abs()
            < TOL
    );
}
