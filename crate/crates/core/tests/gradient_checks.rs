//! Finite-difference verification of the analytic gradients through full
//! model forwards, covering every trainable parameter class.

use sca_core::attention::SigmaKind;
use sca_core::model::{
    collect_gradients, model_forward, ModelConfig, ModelParams, TaskKind,
};
use sca_core::numerics::{finite_diff_check, ExprGraph, Matrix};
use sca_core::rng;
use sca_core::train::LossKind;
use sca_core::Result;

const H_STEP: f64 = 1e-6;
/// Inputs are resampled until every relu / soft-threshold input is at
/// least this far from its kink.
const KINK_MARGIN: f64 = 10.0 * H_STEP;

struct Probe {
    config: ModelConfig,
    loss: LossKind,
    raw: Matrix,
    labels: [usize; 4],
    target: Matrix,
}

/// Loss of a forward pass at the given tensor values; also reports the
/// gradient vector and the minimum kink distance seen.
fn loss_and_grads(probe: &Probe, tensors: &[Matrix]) -> Result<(f64, Vec<Matrix>, f64)> {
    let params = ModelParams::from_tensor_values(&probe.config, tensors)?;
    let mut g = ExprGraph::new();
    let raw = g.leaf(probe.raw.clone());
    let leaves = params.register(&mut g);
    let (out, _) = model_forward(&mut g, raw, &leaves, &probe.config)?;
    let loss = match probe.loss {
        LossKind::MseFull => {
            let t = g.leaf(probe.target.clone());
            g.mse_loss(out, t, None)?
        }
        LossKind::MseTarget => {
            let t = g.leaf(probe.target.clone());
            let rows = probe.target.rows();
            let cols = probe.target.cols();
            let mut mask = vec![0.0; rows * cols];
            for r in rows - probe.config.sca.tokens_per_task..rows {
                for c in 0..cols {
                    mask[r * cols + c] = 1.0;
                }
            }
            let m = g.leaf(Matrix::from_vec(rows, cols, mask)?);
            g.mse_loss(out, t, Some(m))?
        }
        LossKind::CrossEntropy => {
            let last = g.slice_rows(out, probe.config.n_tokens() - 1, 1)?;
            let mut acc = None;
            for f in 0..4 {
                let block = g.slice_cols(last, f * 8, 8)?;
                let ce = g.cross_entropy(block, &[probe.labels[f]])?;
                acc = Some(match acc {
                    None => ce,
                    Some(prev) => g.add(prev, ce)?,
                });
            }
            g.scale(acc.unwrap(), 0.25)?
        }
    };
    let value = g.value(loss).item()?;
    g.backward(loss)?;
    let grads = collect_gradients(&g, &leaves);
    Ok((value, grads, g.min_kink_distance()))
}

fn random_matrix(rows: usize, cols: usize, rng: &mut rng::Rng, scale: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng::uniform_sym(rng, scale)).collect())
        .unwrap()
}

/// Builds a probe whose forward stays clear of prox/relu kinks, resampling
/// the input when needed.
fn build_probe(config: ModelConfig, loss: LossKind, seed: u64) -> (Probe, Vec<Matrix>) {
    let mut init = init_params_perturbed(&config, seed);
    for attempt in 0..50 {
        let mut rng = rng::substream(seed ^ 0xFACE, attempt);
        let n = config.n_tokens();
        let raw = random_matrix(n, config.input_dim, &mut rng, 1.0);
        let labels = [
            rng::uniform_usize(&mut rng, 8),
            rng::uniform_usize(&mut rng, 8),
            rng::uniform_usize(&mut rng, 8),
            rng::uniform_usize(&mut rng, 8),
        ];
        let target = random_matrix(n, config.readout_dim, &mut rng, 1.0);
        let probe = Probe { config: config.clone(), loss, raw, labels, target };
        match loss_and_grads(&probe, &init) {
            Ok((_, _, kink)) if kink > KINK_MARGIN => return (probe, init),
            Ok(_) => continue,
            Err(_) => {
                // re-perturb the parameters and retry
                init = init_params_perturbed(&config, seed.wrapping_add(attempt + 1));
            }
        }
    }
    panic!("could not find a kink-free probe for this config");
}

/// Initial parameters with lambda and xi nudged off their defaults so the
/// transfer and threshold paths carry signal.
fn init_params_perturbed(config: &ModelConfig, seed: u64) -> Vec<Matrix> {
    let params = sca_core::model::init_model(config, seed).unwrap();
    let mut rng = rng::substream(seed ^ 0xBEEF, 7);
    let names: Vec<String> =
        params.named_tensors().iter().map(|(n, _)| n.clone()).collect();
    params
        .tensor_values()
        .into_iter()
        .zip(names)
        .map(|(t, name)| {
            if name.ends_with("lambda") {
                random_matrix(t.rows(), t.cols(), &mut rng, 0.5)
            } else if name.ends_with(".xi") {
                Matrix::scalar(0.02 + 0.02 * rng::uniform(&mut rng)).unwrap()
            } else {
                t
            }
        })
        .collect()
}

fn check_config(config: ModelConfig, loss: LossKind, seed: u64) -> f64 {
    let (probe, tensors) = build_probe(config, loss, seed);
    let (_, analytic, _) = loss_and_grads(&probe, &tensors).unwrap();
    finite_diff_check(
        |ts| loss_and_grads(&probe, ts).map(|(l, _, _)| l),
        &tensors,
        &analytic,
        H_STEP,
    )
    .unwrap()
}

/// A catalogue of >= 20 small configs touching every parameter class:
/// Wq/Wk/Wv/Wo (and full Wqk), lambda, learnable xi, embedding, positions,
/// readout and FFN, across both sigmas and 1-2 layers.
pub fn config_catalogue() -> Vec<(ModelConfig, LossKind)> {
    let mut out = Vec::new();
    let mut panel_like = |d: usize,
                          h: usize,
                          l: usize,
                          tpt: usize,
                          sigma: SigmaKind,
                          f: &dyn Fn(&mut ModelConfig)| {
        let mut sca = sca_core::attention::SCAConfig::new(d, h, l, tpt);
        sca.sigma = sigma;
        sca.transfer_enabled = true;
        let mut config = ModelConfig {
            layers: 1,
            sca,
            input_dim: d,
            learned_embedding: false,
            use_positional: false,
            use_ffn: false,
            ffn_hidden: 2 * d,
            learned_readout: false,
            readout_dim: d,
            residual: false,
            task_kind: TaskKind::PanelRegression,
        };
        f(&mut config);
        config.validate().unwrap();
        out.push((config, LossKind::MseFull));
    };

    // bare blocks, both sigmas, varying heads and task shapes
    panel_like(4, 1, 2, 1, SigmaKind::Softmax, &|_| {});
    panel_like(4, 1, 2, 1, SigmaKind::Prox, &|_| {});
    panel_like(8, 2, 3, 2, SigmaKind::Softmax, &|_| {});
    panel_like(8, 2, 3, 2, SigmaKind::Prox, &|_| {});
    panel_like(8, 4, 2, 2, SigmaKind::Prox, &|_| {});
    // learnable threshold
    panel_like(6, 1, 3, 1, SigmaKind::Prox, &|c| {
        c.sca.xi_learnable = true;
        c.sca.xi = 0.05;
    });
    // scaling, rms, relu dictionary variants
    panel_like(8, 2, 2, 2, SigmaKind::Prox, &|c| c.sca.scale_logits = true);
    panel_like(8, 2, 2, 2, SigmaKind::Softmax, &|c| c.sca.rms_norm = true);
    panel_like(8, 1, 2, 2, SigmaKind::Prox, &|c| c.sca.phi_relu = true);
    panel_like(8, 1, 2, 2, SigmaKind::Prox, &|c| c.sca.psi_relu = true);
    panel_like(8, 1, 2, 2, SigmaKind::Softmax, &|c| {
        c.sca.phi_relu = true;
        c.sca.psi_relu = true;
    });
    // full-matrix qk ablation
    panel_like(6, 1, 2, 1, SigmaKind::Prox, &|c| c.sca.full_qk = true);
    // per-head lambda
    panel_like(8, 2, 3, 1, SigmaKind::Prox, &|c| c.sca.per_head_lambda = true);
    // embedding + readout + positions
    panel_like(6, 1, 2, 2, SigmaKind::Prox, &|c| {
        c.input_dim = 5;
        c.learned_embedding = true;
        c.use_positional = true;
        c.readout_dim = 3;
        c.learned_readout = true;
    });
    // residual stacks with FFN
    panel_like(8, 2, 2, 1, SigmaKind::Prox, &|c| {
        c.layers = 2;
        c.residual = true;
        c.use_ffn = true;
    });
    panel_like(8, 1, 2, 2, SigmaKind::Softmax, &|c| {
        c.layers = 2;
        c.residual = true;
        c.use_ffn = true;
        c.learned_embedding = true;
        c.input_dim = 4;
        c.use_positional = true;
    });
    // target-only loss route
    {
        let mut sca = sca_core::attention::SCAConfig::new(8, 1, 3, 2);
        sca.sigma = SigmaKind::Prox;
        sca.transfer_enabled = true;
        let config = ModelConfig {
            layers: 1,
            sca,
            input_dim: 8,
            learned_embedding: false,
            use_positional: false,
            use_ffn: false,
            ffn_hidden: 16,
            learned_readout: false,
            readout_dim: 8,
            residual: false,
            task_kind: TaskKind::PanelRegression,
        };
        out.push((config, LossKind::MseTarget));
    }
    // symbolic-style classification heads
    for (layers, sigma) in [(1usize, SigmaKind::Softmax), (1, SigmaKind::Prox), (2, SigmaKind::Prox)] {
        let mut config = ModelConfig::symbolic(layers, 8, 2);
        config.sca.sigma = sigma;
        config.sca.transfer_enabled = true;
        config.ffn_hidden = 16;
        config.use_ffn = layers == 2;
        config.validate().unwrap();
        out.push((config, LossKind::CrossEntropy));
    }
    // symbolic with learnable xi and per-head lambda
    {
        let mut config = ModelConfig::symbolic(2, 8, 2);
        config.sca.sigma = SigmaKind::Prox;
        config.sca.transfer_enabled = true;
        config.sca.xi_learnable = true;
        config.sca.per_head_lambda = true;
        config.validate().unwrap();
        out.push((config, LossKind::CrossEntropy));
    }
    out
}

#[test]
fn catalogue_covers_at_least_20_configs() {
    assert!(config_catalogue().len() >= 20, "{}", config_catalogue().len());
}

#[test]
fn gradients_match_finite_differences_everywhere() {
    for (i, (config, loss)) in config_catalogue().into_iter().enumerate() {
        let err = check_config(config, loss, 1000 + i as u64);
        assert!(err <= 1e-4, "config {i}: relative error {err}");
    }
}

#[test]
fn sca_forward_mse_gradient_matches_finite_differences() {
    // the single-block case: every projection plus lambda through MSE
    let mut sca = sca_core::attention::SCAConfig::new(8, 2, 3, 2);
    sca.sigma = SigmaKind::Prox;
    sca.transfer_enabled = true;
    sca.xi = 0.03;
    let config = ModelConfig {
        layers: 1,
        sca,
        input_dim: 8,
        learned_embedding: false,
        use_positional: false,
        use_ffn: false,
        ffn_hidden: 16,
        learned_readout: false,
        readout_dim: 8,
        residual: false,
        task_kind: TaskKind::PanelRegression,
    };
    let err = check_config(config, LossKind::MseFull, 4242);
    assert!(err <= 1e-4, "relative error {err}");
}
