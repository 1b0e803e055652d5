//! Scratch probe for the compositional-panel experiment: trains the prox
//! and softmax variants briefly and prints test metrics per epoch block.
//!
//! Usage: toy_probe [epochs] [loss: full|target] [train_tasks] [threads]

use sca_core::attention::SigmaKind;
use sca_core::data::{gen_panel_task, RuleTemplate};
use sca_core::eval::{panel_target_mse, psnr_coverage, DEFAULT_PSNR_THRESHOLDS};
use sca_core::model::ModelConfig;
use sca_core::train::{train_run, LossKind, TrainConfig, TrainData};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map_or(20, |s| s.parse().unwrap());
    let loss = match args.get(2).map(String::as_str) {
        Some("target") => LossKind::MseTarget,
        _ => LossKind::MseFull,
    };
    let train_tasks: usize = args.get(3).map_or(1024, |s| s.parse().unwrap());
    let threads: usize = args.get(4).map_or(2, |s| s.parse().unwrap());

    let train: Vec<_> = (0..train_tasks as u64)
        .map(|s| gen_panel_task(&RuleTemplate::rule_a(), s))
        .collect();
    let test: Vec<_> = (1_000_000..1_000_128u64)
        .map(|s| gen_panel_task(&RuleTemplate::rule_b(), s))
        .collect();
    let train_eval: Vec<_> = train.iter().take(128).cloned().collect();

    for sigma in [SigmaKind::Prox, SigmaKind::Softmax] {
        let mut config = ModelConfig::panel_toy();
        config.sca.sigma = sigma;
        config.sca.transfer_enabled = sigma == SigmaKind::Prox;
        config.sca.xi = 0.03;
        let mut tc = TrainConfig::toy_defaults(1);
        tc.epochs = epochs;
        tc.loss = loss;
        tc.threads = threads;

        let t0 = std::time::Instant::now();
        let out = train_run(&config, &tc, &TrainData::Panels(train.clone()), None, None)
            .expect("train");
        let dt = t0.elapsed().as_secs_f64();
        let params = &out.checkpoint.params;
        let train_mse = panel_target_mse(params, &config, &train_eval).unwrap();
        let test_mse = panel_target_mse(params, &config, &test).unwrap();
        let cov = psnr_coverage(params, &config, &test, &DEFAULT_PSNR_THRESHOLDS).unwrap();
        println!(
            "{:?}: {epochs} epochs in {dt:.1}s  final_train_loss={:.6}  train_target_mse={train_mse:.5}  test_target_mse={test_mse:.5}  coverage(20/30/40)={:.3}/{:.3}/{:.3}",
            sigma, out.final_loss, cov[0], cov[1], cov[2]
        );
        if sigma == SigmaKind::Prox {
            println!("  lambda = {:?}", out.checkpoint.params.blocks[0].lambda.data());
        }
    }
}
