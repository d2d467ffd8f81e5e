//! The five subcommands: generate, train, eval, nowcast, ablate.

use std::path::{Path, PathBuf};

use trajcast_core::ablation::{run_ablation, Variant};
use trajcast_core::data::{encode_row, extract_instance, extract_instances, EncodedBatch};
use trajcast_core::model::Model;
use trajcast_core::synth::{generate, lab_panels, SynthConfig};
use trajcast_core::train::{evaluate_set, prepare, train, TrainConfig};
use trajcast_core::Tensor;

use crate::checkpoint::Checkpoint;
use crate::config::{
    pairs_to_string, read_kv_file, synth_config_from_pairs, train_config_from_pairs,
    train_config_to_pairs,
};
use crate::error::{CliError, Result};
use crate::formats::{atomic_write, parse_trajectory_file, write_trajectory_file};
use crate::report::{
    ablation_csv, ablation_text, epoch_log_csv, report_csv_row, report_text, REPORT_CSV_HEADER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    All,
    Train,
    Val,
    Test,
}

fn load_train_config(config: Option<&Path>, seed: Option<u64>) -> Result<TrainConfig> {
    let mut cfg = match config {
        Some(path) => train_config_from_pairs(TrainConfig::default(), &read_kv_file(path)?)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_generate(
    config: Option<&Path>,
    seed: u64,
    out: &Path,
    format: OutputFormat,
) -> Result<String> {
    let synth = match config {
        Some(path) => synth_config_from_pairs(SynthConfig::default(), &read_kv_file(path)?)?,
        None => SynthConfig::default(),
    };
    let trajectories = generate(&synth, seed)?;
    write_trajectory_file(out, &trajectories)?;

    let events: usize = trajectories.iter().map(|t| t.events().len()).sum();
    let instances: Vec<_> = trajectories.iter().filter_map(extract_instance).collect();
    let avg_targets = instances.iter().map(|i| i.targets.len() as f64).sum::<f64>()
        / instances.len().max(1) as f64;

    // marginal per label token over extracted instances
    let mut labels: Vec<String> = instances
        .iter()
        .flat_map(|i| i.targets.iter().map(|e| e.input_token()))
        .collect();
    labels.sort();
    labels.dedup();
    let marginals: Vec<(String, f64)> = labels
        .into_iter()
        .map(|tok| {
            let hits = instances
                .iter()
                .filter(|i| i.targets.iter().any(|e| e.input_token() == tok))
                .count();
            (tok, hits as f64 / instances.len().max(1) as f64)
        })
        .collect();

    let mut out_text = String::new();
    match format {
        OutputFormat::Text => {
            out_text.push_str(&format!("trajectories {}\n", trajectories.len()));
            out_text.push_str(&format!("events {events}\n"));
            out_text.push_str(&format!("instances {}\n", instances.len()));
            out_text.push_str(&format!("avg_targets {avg_targets:.2}\n"));
            for (tok, rate) in &marginals {
                out_text.push_str(&format!("marginal {tok} {rate:.4}\n"));
            }
        }
        OutputFormat::Csv => {
            out_text.push_str("stat,value\n");
            out_text.push_str(&format!("trajectories,{}\n", trajectories.len()));
            out_text.push_str(&format!("events,{events}\n"));
            out_text.push_str(&format!("instances,{}\n", instances.len()));
            out_text.push_str(&format!("avg_targets,{avg_targets:.4}\n"));
            for (tok, rate) in &marginals {
                out_text.push_str(&format!("marginal:{tok},{rate:.6}\n"));
            }
        }
    }
    Ok(out_text)
}

/// Median gap between consecutive lab panels across training trajectories;
/// the default nowcast horizon.
fn median_panel_gap(trajectories: &[trajcast_core::data::Trajectory], fallback: f64) -> f64 {
    let mut gaps: Vec<f64> = Vec::new();
    for traj in trajectories {
        let panels = lab_panels(traj);
        for pair in panels.windows(2) {
            gaps.push(pair[1].0 - pair[0].0);
        }
    }
    if gaps.is_empty() {
        return fallback;
    }
    gaps.sort_by(|a, b| a.total_cmp(b));
    gaps[gaps.len() / 2]
}

pub struct TrainArgs<'a> {
    pub data: &'a Path,
    pub config: Option<&'a Path>,
    pub out_checkpoint: &'a Path,
    pub log: Option<&'a Path>,
    pub ablate: Option<Variant>,
    pub seed: Option<u64>,
    pub format: OutputFormat,
}

pub fn cmd_train(args: TrainArgs<'_>) -> Result<String> {
    let mut cfg = load_train_config(args.config, args.seed)?;
    if let Some(variant) = args.ablate {
        cfg.ablation = variant.ablation();
    }
    let trajectories = parse_trajectory_file(args.data)?;
    let data = prepare(&trajectories, &cfg)?;
    let model = Model::init(cfg.model_config(&data.vocab), cfg.seed)?;
    let outcome = train(model, &data.train, &data.val, &data.vocab, &cfg)?;
    let report = evaluate_set(&outcome.model, &data.test, &data.vocab, &cfg)?;

    let train_patients: Vec<&str> =
        data.train.iter().map(|i| i.patient_id.as_str()).collect();
    let train_trajs: Vec<trajcast_core::data::Trajectory> = trajectories
        .iter()
        .filter(|t| train_patients.contains(&t.patient_id()))
        .cloned()
        .collect();
    let gap = median_panel_gap(&train_trajs, cfg.omega_hours);

    let ckpt = Checkpoint {
        rng_seed: cfg.seed,
        config: cfg.clone(),
        vocab: data.vocab.clone(),
        model: outcome.model.clone(),
        best_val_pr_auc: outcome.best_val_pr_auc,
        median_panel_gap: gap,
    };
    ckpt.save(args.out_checkpoint)?;

    let log_path: PathBuf = match args.log {
        Some(p) => p.to_path_buf(),
        None => args.out_checkpoint.with_extension("log.csv"),
    };
    // resolved config rides along as comment lines for provenance
    let mut log = String::new();
    for (k, v) in train_config_to_pairs(&cfg) {
        log.push_str(&format!("# {k} = {v}\n"));
    }
    log.push_str(&epoch_log_csv(&outcome.history));
    atomic_write(&log_path, log.as_bytes())?;

    let mut out = String::new();
    match args.format {
        OutputFormat::Text => {
            out.push_str(&pairs_to_string(&train_config_to_pairs(&cfg)));
            out.push_str(&format!(
                "train {} val {} test {} dropped {}\n",
                data.train.len(),
                data.val.len(),
                data.test.len(),
                data.dropped
            ));
            out.push_str(&format!(
                "best_epoch {} best_val_pr_auc {:.4}\n",
                outcome.best_epoch, outcome.best_val_pr_auc
            ));
            out.push_str(&report_text(&report));
        }
        OutputFormat::Csv => {
            out.push_str(REPORT_CSV_HEADER);
            out.push('\n');
            let label = args.ablate.map(|v| v.label()).unwrap_or("full");
            out.push_str(&report_csv_row(label, cfg.seed, &report));
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn cmd_eval(
    checkpoint: &Path,
    data: &Path,
    split: EvalSplit,
    format: OutputFormat,
) -> Result<String> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let cfg = &ckpt.config;
    let trajectories = parse_trajectory_file(data)?;
    if trajectories.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: no trajectories to evaluate",
            data.display()
        )));
    }
    let instances = match split {
        EvalSplit::All => trajectories
            .iter()
            .flat_map(|t| extract_instances(t, cfg.augment_panels))
            .collect(),
        _ => {
            let prepared = prepare(&trajectories, cfg)?;
            match split {
                EvalSplit::Train => prepared.train,
                EvalSplit::Val => prepared.val,
                EvalSplit::Test => prepared.test,
                EvalSplit::All => unreachable!(),
            }
        }
    };
    // drop instances with no representable target under the checkpoint vocab
    let instances: Vec<_> = instances
        .into_iter()
        .filter(|inst| {
            inst.targets.iter().any(|ev| {
                cfg.label_mode
                    .label_token(ev)
                    .and_then(|t| ckpt.vocab.label_id(&t))
                    .is_some()
            })
        })
        .collect();
    if instances.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: no instance with targets representable under the checkpoint vocabulary",
            data.display()
        )));
    }
    let report = evaluate_set(&ckpt.model, &instances, &ckpt.vocab, cfg)?;
    Ok(match format {
        OutputFormat::Text => report_text(&report),
        OutputFormat::Csv => {
            format!("{REPORT_CSV_HEADER}\n{}\n", report_csv_row("eval", cfg.seed, &report))
        }
    })
}

pub fn cmd_nowcast(
    checkpoint: &Path,
    history_file: &Path,
    at_time: Option<f64>,
    format: OutputFormat,
) -> Result<String> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let cfg = &ckpt.config;
    let trajectories = parse_trajectory_file(history_file)?;
    if trajectories.len() != 1 {
        return Err(CliError::Validation(format!(
            "{}: expected exactly one trajectory, found {}",
            history_file.display(),
            trajectories.len()
        )));
    }
    let history = trajectories[0].events().to_vec();
    if history.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: trajectory has no events to condition on",
            history_file.display()
        )));
    }
    let last_t = history.last().map(|e| e.hours()).unwrap_or(0.0);
    let t_mask = at_time.unwrap_or(last_t + ckpt.median_panel_gap);
    if !t_mask.is_finite() || t_mask < 0.0 {
        return Err(CliError::Validation(format!("invalid target time {t_mask}")));
    }

    let unknown: Vec<&str> = history
        .iter()
        .filter(|e| ckpt.vocab.lookup_input(&e.input_token()).is_none())
        .map(|e| e.code())
        .collect();
    if !unknown.is_empty() {
        eprintln!(
            "warning: {} event(s) with codes outside the training vocabulary; mapped to the out-of-vocabulary token",
            unknown.len()
        );
    }

    let row = encode_row(&history, t_mask, &ckpt.vocab, cfg.max_history);
    let batch = EncodedBatch {
        batch: 1,
        width: cfg.max_history + 1,
        token_ids: row.token_ids,
        times: row.times,
        real: row.real,
        mask_positions: vec![row.mask_position],
        labels: Tensor::zeros(vec![1, ckpt.vocab.label_len()]),
    };
    let probs = ckpt.model.predict_probs(&batch)?;

    let mut ranked: Vec<(usize, f64)> =
        probs.data().iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut out = String::new();
    match format {
        OutputFormat::Text => {
            out.push_str(&format!("at_time {t_mask}\n"));
            for (rank, (id, p)) in ranked.iter().take(cfg.top_k).enumerate() {
                let label = ckpt.vocab.label_token(*id).unwrap_or("?");
                out.push_str(&format!("{} {label} {p:.6}\n", rank + 1));
            }
        }
        OutputFormat::Csv => {
            out.push_str("rank,label,probability\n");
            for (rank, (id, p)) in ranked.iter().take(cfg.top_k).enumerate() {
                let label = ckpt.vocab.label_token(*id).unwrap_or("?");
                out.push_str(&format!("{},{label},{p:.6}\n", rank + 1));
            }
        }
    }
    Ok(out)
}

pub struct AblateArgs<'a> {
    pub data: &'a Path,
    pub config: Option<&'a Path>,
    pub seed: Option<u64>,
    pub seeds: Vec<u64>,
    pub out_csv: Option<&'a Path>,
    pub format: OutputFormat,
}

pub fn cmd_ablate(args: AblateArgs<'_>) -> Result<String> {
    let cfg = load_train_config(args.config, args.seed)?;
    let trajectories = parse_trajectory_file(args.data)?;
    let seeds = if args.seeds.is_empty() { vec![cfg.seed] } else { args.seeds.clone() };
    let table = run_ablation(&trajectories, &cfg, &seeds)?;
    if let Some(path) = args.out_csv {
        atomic_write(path, ablation_csv(&table).as_bytes())?;
    }
    Ok(match args.format {
        OutputFormat::Text => ablation_text(&table, &seeds),
        OutputFormat::Csv => ablation_csv(&table),
    })
}
