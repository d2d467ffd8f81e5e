//! Ablation harness: trains and evaluates the model variants that switch
//! off the decay feature, the periodic feature, and the denoising gate,
//! under identical seeds, splits and hyperparameters.

use alloc::vec::Vec;

use crate::data::Trajectory;
use crate::error::Result;
use crate::metrics::EvalReport;
use crate::model::{Ablation, Model};
use crate::train::{evaluate_set, prepare, train, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    /// w/o D: decay feature zeroed.
    NoDecay,
    /// w/o P: periodic feature zeroed.
    NoPeriodic,
    /// w/o DP: both timestamp features zeroed.
    NoDecayPeriodic,
    /// w/o DPM: timestamp features zeroed and the gate bypassed; reduces to
    /// a vanilla transformer.
    NoDecayPeriodicMask,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoDecay,
        Variant::NoPeriodic,
        Variant::NoDecayPeriodic,
        Variant::NoDecayPeriodicMask,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoDecay => "wo_d",
            Variant::NoPeriodic => "wo_p",
            Variant::NoDecayPeriodic => "wo_dp",
            Variant::NoDecayPeriodicMask => "wo_dpm",
        }
    }

    pub fn ablation(&self) -> Ablation {
        match self {
            Variant::Full => Ablation::NONE,
            Variant::NoDecay => Ablation { no_decay: true, ..Ablation::NONE },
            Variant::NoPeriodic => Ablation { no_periodic: true, ..Ablation::NONE },
            Variant::NoDecayPeriodic => {
                Ablation { no_decay: true, no_periodic: true, no_gate: false }
            }
            Variant::NoDecayPeriodicMask => {
                Ablation { no_decay: true, no_periodic: true, no_gate: true }
            }
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "full" => Some(Variant::Full),
            "d" | "wo_d" => Some(Variant::NoDecay),
            "p" | "wo_p" => Some(Variant::NoPeriodic),
            "dp" | "wo_dp" => Some(Variant::NoDecayPeriodic),
            "dpm" | "wo_dpm" => Some(Variant::NoDecayPeriodicMask),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    pub report: EvalReport,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn report_for(&self, variant: Variant, seed: u64) -> Option<&EvalReport> {
        self.rows.iter().find(|r| r.variant == variant && r.seed == seed).map(|r| &r.report)
    }

    /// Mean over seeds of one metric for one variant.
    pub fn mean(&self, variant: Variant, metric: impl Fn(&EvalReport) -> f64) -> f64 {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.variant == variant)
            .map(|r| metric(&r.report))
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// Percentage drop of a variant metric relative to the full model, the way
/// ablation tables are conventionally annotated (positive = worse).
pub fn pct_drop(full: f64, variant: f64) -> f64 {
    if full == 0.0 {
        return 0.0;
    }
    (full - variant) / full * 100.0
}

/// Train and evaluate all five variants per seed with a shared split and
/// vocabulary. The base config's ablation flags are overridden per variant.
pub fn run_ablation(
    trajectories: &[Trajectory],
    base: &TrainConfig,
    seeds: &[u64],
) -> Result<AblationTable> {
    let mut table = AblationTable::default();
    for &seed in seeds {
        let mut seed_cfg = base.clone();
        seed_cfg.seed = seed;
        let data = prepare(trajectories, &seed_cfg)?;
        for variant in Variant::ALL {
            let mut cfg = seed_cfg.clone();
            cfg.ablation = variant.ablation();
            let model = Model::init(cfg.model_config(&data.vocab), cfg.seed)?;
            let outcome = train(model, &data.train, &data.val, &data.vocab, &cfg)?;
            let report = evaluate_set(&outcome.model, &data.test, &data.vocab, &cfg)?;
            table.rows.push(AblationRow {
                variant,
                seed,
                report,
                best_epoch: outcome.best_epoch,
            });
        }
    }
    Ok(table)
}
