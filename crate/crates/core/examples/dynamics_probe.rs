//! Tracks how the trained query-key map evolves in glyph coordinates:
//! prints the mean same-glyph score against the mean distinct-pair score
//! every few epochs, alongside test metrics.
//!
//! Usage: dynamics_probe [epochs] [block] [full_qk 0/1] [seed]

use sca_core::attention::{QkParams, SigmaKind};
use sca_core::data::{gen_panel_task, glyphs, RuleTemplate};
use sca_core::eval::{panel_target_mse, psnr_coverage};
use sca_core::model::ModelConfig;
use sca_core::numerics::Matrix;
use sca_core::train::{train_run, LossKind, TrainConfig, TrainData};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map_or(800, |s| s.parse().unwrap());
    let block: usize = args.get(2).map_or(25, |s| s.parse().unwrap());
    let full_qk: bool = args.get(3).map_or(false, |s| s == "1");
    let seed: u64 = args.get(4).map_or(1, |s| s.parse().unwrap());

    let train: Vec<_> = (0..4096u64)
        .map(|s| gen_panel_task(&RuleTemplate::rule_a(), s))
        .collect();
    let test: Vec<_> = (1_000_000..1_000_256u64)
        .map(|s| gen_panel_task(&RuleTemplate::rule_b(), s))
        .collect();

    let g_rows: Vec<f64> = (0..16).flat_map(|i| glyphs::glyph(i).to_vec()).collect();
    let g = Matrix::from_vec(16, 16, g_rows).unwrap();

    let mut config = ModelConfig::panel_toy();
    config.sca.sigma = SigmaKind::Prox;
    config.sca.transfer_enabled = true;
    config.sca.xi = 0.03;
    config.sca.full_qk = full_qk;

    let mut resume = None;
    let mut done = 0usize;
    while done < epochs {
        let step = block.min(epochs - done);
        let mut tc = TrainConfig::toy_defaults(seed);
        tc.epochs = done + step;
        tc.loss = LossKind::MseTarget;
        tc.threads = 2;
        let out = train_run(&config, &tc, &TrainData::Panels(train.clone()), None, resume.take())
            .expect("train");
        done += step;
        let params = &out.checkpoint.params;
        let m = match &params.blocks[0].heads[0].qk {
            QkParams::Factored { wq, wk } => wq.matmul(&wk.transpose()).unwrap(),
            QkParams::Full { wqk } => wqk.clone(),
        };
        let scores = g.matmul(&m).unwrap().matmul(&g.transpose()).unwrap();
        let mut diag = 0.0;
        let mut off = 0.0;
        let mut off_abs = 0.0;
        for i in 0..16 {
            diag += scores.get(i, i) / 16.0;
            for j in 0..16 {
                if i != j {
                    off += scores.get(i, j) / 240.0;
                    off_abs += scores.get(i, j).abs() / 240.0;
                }
            }
        }
        let test_mse = panel_target_mse(params, &config, &test).unwrap();
        let cov = psnr_coverage(params, &config, &test, &[20.0]).unwrap();
        let lam = &params.blocks[0].lambda;
        let lam_mean: f64 = lam.data().iter().sum::<f64>() / 8.0;
        println!(
            "epoch {done:4}  loss={:.5}  test_mse={test_mse:.5}  cov20={:.3}  diag={diag:+.3}  off={off:+.3}  |off|={off_abs:.3}  lam_mean={lam_mean:+.4}  ratio(diag/off)={:+.2}",
            out.final_loss, cov[0], diag / off
        );
        resume = Some(out.checkpoint);
    }
}
