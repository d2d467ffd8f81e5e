//! Rendering of evaluation reports, per-epoch logs and ablation tables as
//! flat key-value text and CSV.

use trajcast_core::ablation::{pct_drop, AblationTable, Variant};
use trajcast_core::metrics::EvalReport;
use trajcast_core::train::EpochStats;

pub fn report_text(r: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("instances {}\n", r.instances));
    out.push_str(&format!("threshold {}\n", r.threshold));
    out.push_str(&format!("k {}\n", r.k));
    out.push_str(&format!("f1 {:.4}\n", r.f1));
    out.push_str(&format!("pr_auc {:.4}\n", r.pr_auc));
    out.push_str(&format!("precision_at_k {:.4}\n", r.precision_at_k));
    out.push_str(&format!("ndcg_at_k {:.4}\n", r.ndcg_at_k));
    out.push_str(&format!(
        "counts pred {:.2} ± {:.2} | true {:.2} ± {:.2}\n",
        r.pred_count_mean, r.pred_count_std, r.true_count_mean, r.true_count_std
    ));
    out
}

pub const REPORT_CSV_HEADER: &str = "variant,seed,instances,threshold,k,f1,pr_auc,precision_at_k,ndcg_at_k,pred_count_mean,pred_count_std,true_count_mean,true_count_std";

pub fn report_csv_row(variant: &str, seed: u64, r: &EvalReport) -> String {
    format!(
        "{variant},{seed},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
        r.instances,
        r.threshold,
        r.k,
        r.f1,
        r.pr_auc,
        r.precision_at_k,
        r.ndcg_at_k,
        r.pred_count_mean,
        r.pred_count_std,
        r.true_count_mean,
        r.true_count_std
    )
}

pub fn epoch_log_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,val_pr_auc,gate_norm_sum\n");
    for e in history {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            e.epoch, e.train_loss, e.val_pr_auc, e.gate_norm_sum
        ));
    }
    out
}

/// Ablation comparison in the conventional layout: one row per variant,
/// metrics annotated with their percentage drop against the full model.
pub fn ablation_text(table: &AblationTable, seeds: &[u64]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<8} {:>18} {:>18} {:>18} {:>18}\n",
        "model", "pr_auc", "f1", "precision_at_k", "ndcg_at_k"
    ));
    let full = |metric: &dyn Fn(&EvalReport) -> f64| table.mean(Variant::Full, metric);
    for variant in Variant::ALL {
        let cell = |metric: &dyn Fn(&EvalReport) -> f64| -> String {
            let value = table.mean(variant, metric);
            if variant == Variant::Full {
                format!("{value:.4}")
            } else {
                let drop = pct_drop(full(metric), value);
                let arrow = if drop >= 0.0 { '\u{2193}' } else { '\u{2191}' };
                format!("{value:.4} ({arrow}{:05.2}%)", drop.abs())
            }
        };
        out.push_str(&format!(
            "{:<8} {:>18} {:>18} {:>18} {:>18}\n",
            variant.label(),
            cell(&|r: &EvalReport| r.pr_auc),
            cell(&|r: &EvalReport| r.f1),
            cell(&|r: &EvalReport| r.precision_at_k),
            cell(&|r: &EvalReport| r.ndcg_at_k),
        ));
    }
    out.push_str(&format!("seeds: {seeds:?}\n"));
    out
}

pub fn ablation_csv(table: &AblationTable) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for row in &table.rows {
        out.push_str(&report_csv_row(row.variant.label(), row.seed, &row.report));
        out.push('\n');
    }
    out
}
