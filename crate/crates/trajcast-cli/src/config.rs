//! Flat `key = value` configuration files with `#` comments, mapped onto
//! the training and synthetic-data configs. The same pair representation
//! is embedded in run outputs and checkpoints for provenance.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use trajcast_core::data::{LabelMode, MaskTimeMode};

use trajcast_core::synth::SynthConfig;
use trajcast_core::train::TrainConfig;

use crate::error::{CliError, Result};

pub type Pairs = BTreeMap<String, String>;

pub fn parse_kv_str(content: &str, origin: &Path) -> Result<Pairs> {
    let mut map = Pairs::new();
    for (idx, raw) in content.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| CliError::Parse {
            path: origin.to_path_buf(),
            line: idx + 1,
            detail: "expected key = value".into(),
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

pub fn read_kv_file(path: &Path) -> Result<Pairs> {
    let content = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_kv_str(&content, path)
}

pub fn pairs_to_string(pairs: &Pairs) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(v);
        out.push('\n');
    }
    out
}

fn bad(key: &str, value: &str) -> CliError {
    CliError::Validation(format!("config key {key}: cannot parse value {value:?}"))
}

macro_rules! take {
    ($map:expr, $key:literal, $target:expr) => {
        if let Some(v) = $map.remove($key) {
            $target = v.parse().map_err(|_| bad($key, &v))?;
        }
    };
}

/// Apply pairs over a base [`TrainConfig`]; unknown keys are rejected.
pub fn train_config_from_pairs(base: TrainConfig, pairs: &Pairs) -> Result<TrainConfig> {
    let mut map = pairs.clone();
    let mut cfg = base;
    take!(map, "learning_rate", cfg.learning_rate);
    take!(map, "batch_size", cfg.batch_size);
    take!(map, "epochs", cfg.epochs);
    take!(map, "lambda", cfg.lambda);
    take!(map, "seed", cfg.seed);
    take!(map, "split_train", cfg.split.train);
    take!(map, "split_val", cfg.split.val);
    take!(map, "split_test", cfg.split.test);
    take!(map, "patience", cfg.patience);
    take!(map, "threshold", cfg.threshold);
    take!(map, "top_k", cfg.top_k);
    take!(map, "embed_dim", cfg.embed_dim);
    take!(map, "heads", cfg.heads);
    take!(map, "layers", cfg.layers);
    take!(map, "max_history", cfg.max_history);
    take!(map, "decay_width", cfg.decay_width);
    take!(map, "ffn_dim", cfg.ffn_dim);
    take!(map, "omega_hours", cfg.omega_hours);
    take!(map, "init_std", cfg.init_std);
    take!(map, "disable_decay", cfg.ablation.no_decay);
    take!(map, "disable_periodic", cfg.ablation.no_periodic);
    take!(map, "disable_mask", cfg.ablation.no_gate);
    take!(map, "augment_panels", cfg.augment_panels);
    if let Some(v) = map.remove("mask_time") {
        cfg.mask_time = match v.as_str() {
            "target_time" => MaskTimeMode::TargetTime,
            "last_event" => MaskTimeMode::LastEvent,
            _ => return Err(bad("mask_time", &v)),
        };
    }
    if let Some(v) = map.remove("label_mode") {
        cfg.label_mode = match v.as_str() {
            "code_flag" => LabelMode::CodeAndFlag,
            "code_only" => LabelMode::CodeOnly,
            _ => return Err(bad("label_mode", &v)),
        };
    }
    if let Some(unknown) = map.keys().next() {
        return Err(CliError::Validation(format!("unknown training config key {unknown}")));
    }
    Ok(cfg)
}

pub fn train_config_to_pairs(cfg: &TrainConfig) -> Pairs {
    let mut map = Pairs::new();
    let mut put = |k: &str, v: String| {
        map.insert(k.to_string(), v);
    };
    put("learning_rate", cfg.learning_rate.to_string());
    put("batch_size", cfg.batch_size.to_string());
    put("epochs", cfg.epochs.to_string());
    put("lambda", cfg.lambda.to_string());
    put("seed", cfg.seed.to_string());
    put("split_train", cfg.split.train.to_string());
    put("split_val", cfg.split.val.to_string());
    put("split_test", cfg.split.test.to_string());
    put("patience", cfg.patience.to_string());
    put("threshold", cfg.threshold.to_string());
    put("top_k", cfg.top_k.to_string());
    put("embed_dim", cfg.embed_dim.to_string());
    put("heads", cfg.heads.to_string());
    put("layers", cfg.layers.to_string());
    put("max_history", cfg.max_history.to_string());
    put("decay_width", cfg.decay_width.to_string());
    put("ffn_dim", cfg.ffn_dim.to_string());
    put("omega_hours", cfg.omega_hours.to_string());
    put("init_std", cfg.init_std.to_string());
    put("disable_decay", cfg.ablation.no_decay.to_string());
    put("disable_periodic", cfg.ablation.no_periodic.to_string());
    put("disable_mask", cfg.ablation.no_gate.to_string());
    put("augment_panels", cfg.augment_panels.to_string());
    put(
        "mask_time",
        match cfg.mask_time {
            MaskTimeMode::TargetTime => "target_time".to_string(),
            MaskTimeMode::LastEvent => "last_event".to_string(),
        },
    );
    put(
        "label_mode",
        match cfg.label_mode {
            LabelMode::CodeAndFlag => "code_flag".to_string(),
            LabelMode::CodeOnly => "code_only".to_string(),
        },
    );
    map
}

pub fn synth_config_from_pairs(base: SynthConfig, pairs: &Pairs) -> Result<SynthConfig> {
    let mut map = pairs.clone();
    let mut cfg = base;
    take!(map, "patients", cfg.patients);
    take!(map, "lab_codes", cfg.lab_codes);
    take!(map, "med_codes", cfg.med_codes);
    take!(map, "diagnosis_codes", cfg.diagnosis_codes);
    take!(map, "procedure_codes", cfg.procedure_codes);
    take!(map, "panel_period_hours", cfg.panel_period_hours);
    take!(map, "retest_prob", cfg.retest_prob);
    take!(map, "panel_inclusion", cfg.panel_inclusion);
    take!(map, "base_abnormal", cfg.base_abnormal);
    take!(map, "med_effect", cfg.med_effect);
    take!(map, "med_prob", cfg.med_prob);
    take!(map, "procedure_prob", cfg.procedure_prob);
    take!(map, "visit_hours_min", cfg.visit_hours_min);
    take!(map, "visit_hours_max", cfg.visit_hours_max);
    if let Some(unknown) = map.keys().next() {
        return Err(CliError::Validation(format!("unknown generator config key {unknown}")));
    }
    Ok(cfg)
}

pub fn synth_config_to_pairs(cfg: &SynthConfig) -> Pairs {
    let mut map = Pairs::new();
    let mut put = |k: &str, v: String| {
        map.insert(k.to_string(), v);
    };
    put("patients", cfg.patients.to_string());
    put("lab_codes", cfg.lab_codes.to_string());
    put("med_codes", cfg.med_codes.to_string());
    put("diagnosis_codes", cfg.diagnosis_codes.to_string());
    put("procedure_codes", cfg.procedure_codes.to_string());
    put("panel_period_hours", cfg.panel_period_hours.to_string());
    put("retest_prob", cfg.retest_prob.to_string());
    put("panel_inclusion", cfg.panel_inclusion.to_string());
    put("base_abnormal", cfg.base_abnormal.to_string());
    put("med_effect", cfg.med_effect.to_string());
    put("med_prob", cfg.med_prob.to_string());
    put("procedure_prob", cfg.procedure_prob.to_string());
    put("visit_hours_min", cfg.visit_hours_min.to_string());
    put("visit_hours_max", cfg.visit_hours_max.to_string());
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use trajcast_core::model::Ablation;
    use trajcast_core::train::SplitRatios;

    #[test]
    fn parses_comments_and_spacing() {
        let content = "# a comment\nlearning_rate = 0.01\n\nepochs=3\n";
        let pairs = parse_kv_str(content, Path::new("mem")).unwrap();
        let cfg = train_config_from_pairs(TrainConfig::default(), &pairs).unwrap();
        assert_eq!(cfg.learning_rate, 0.01);
        assert_eq!(cfg.epochs, 3);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let pairs = parse_kv_str("bogus = 1\n", Path::new("mem")).unwrap();
        assert!(train_config_from_pairs(TrainConfig::default(), &pairs).is_err());
        let pairs = parse_kv_str("epochs = banana\n", Path::new("mem")).unwrap();
        assert!(train_config_from_pairs(TrainConfig::default(), &pairs).is_err());
    }

    #[test]
    fn train_config_pairs_round_trip() {
        let mut cfg = TrainConfig::synthetic_default();
        cfg.ablation.no_periodic = true;
        cfg.mask_time = MaskTimeMode::LastEvent;
        cfg.split = SplitRatios { train: 0.6, val: 0.2, test: 0.2 };
        let pairs = train_config_to_pairs(&cfg);
        let back = train_config_from_pairs(TrainConfig::default(), &pairs).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn synth_config_pairs_round_trip() {
        let cfg = SynthConfig { patients: 42, retest_prob: 0.9, ..Default::default() };
        let pairs = synth_config_to_pairs(&cfg);
        let back = synth_config_from_pairs(SynthConfig::default(), &pairs).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(pairs_to_string(&pairs).lines().count(), pairs.len());
    }

    #[test]
    fn ablation_keys_map_to_flags() {
        let pairs =
            parse_kv_str("disable_decay = true\ndisable_mask = true\n", Path::new("mem")).unwrap();
        let cfg = train_config_from_pairs(TrainConfig::default(), &pairs).unwrap();
        assert_eq!(
            cfg.ablation,
            Ablation { no_decay: true, no_periodic: false, no_gate: true }
        );
    }
}
