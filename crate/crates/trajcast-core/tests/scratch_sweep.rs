//! Scratch sweep over optimization settings for the synthetic experiment.

use std::time::Instant;

use trajcast_core::model::Model;
use trajcast_core::synth::{generate, SynthConfig};
use trajcast_core::train::{evaluate_set, prepare, train, TrainConfig};

#[test]
#[ignore]
fn sweep_learning_rate_and_init() {
    let trajs = generate(&SynthConfig::default(), 7).unwrap();
    for (lr, init_std, batch) in [
        (3e-3, 0.02, 16usize),
        (1e-2, 0.02, 16),
        (3e-3, 0.05, 16),
        (1e-2, 0.05, 16),
    ] {
        let cfg = TrainConfig {
            learning_rate: lr,
            init_std,
            batch_size: batch,
            patience: 0,
            ..TrainConfig::synthetic_default()
        };
        let data = prepare(&trajs, &cfg).unwrap();
        let model = Model::init(cfg.model_config(&data.vocab), cfg.seed).unwrap();
        let t0 = Instant::now();
        let outcome = train(model, &data.train, &data.val, &data.vocab, &cfg).unwrap();
        let r = evaluate_set(&outcome.model, &data.test, &data.vocab, &cfg).unwrap();
        println!(
            "lr {lr:<7} std {init_std:<5} batch {batch:<3} → pr_auc {:.4} f1 {:.4} pred {:.2}±{:.2} true {:.2} best_ep {} val {:.4} [{:.0}s]",
            r.pr_auc,
            r.f1,
            r.pred_count_mean,
            r.pred_count_std,
            r.true_count_mean,
            outcome.best_epoch,
            outcome.best_val_pr_auc,
            t0.elapsed().as_secs_f64()
        );
    }
}
