//! Training loop: Adam with decoupled weight decay, seeded shuffling,
//! target masking, per-item gradients reduced in fixed index order, CSV
//! metric logging, and checkpoint-based resume.
//!
//! Batch items may be evaluated on several worker threads; each item's
//! gradient is stored in its batch slot and the reduction always runs in
//! index order, so results are bit-identical for any thread count.

use std::path::Path;

use crate::data::{
    gen_symbolic_task, tokenize_panels, tokenize_symbolic, PanelTask, RuleCombo, SymbolicTask,
    TokenMode, FEATURES, FEATURE_VALUES, PANELS_PER_TASK, QUADRANTS, SYMBOLIC_TOKENS,
};
use crate::error::{Error, Result};
use crate::eval;
use crate::kv::KvBlock;
use crate::model::{
    collect_gradients, init_model, model_forward, Checkpoint, ModelConfig, ModelParams, TaskKind,
};
use crate::numerics::{ExprGraph, Matrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// MSE over every token (context reconstruction included).
    MseFull,
    /// MSE over the masked target block only.
    MseTarget,
    /// Cross-entropy over the target tuple's feature logits.
    CrossEntropy,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::MseFull => "mse-full",
            LossKind::MseTarget => "mse-target-only",
            LossKind::CrossEntropy => "cross-entropy",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mse-full" => Ok(LossKind::MseFull),
            "mse-target-only" | "mse-target" => Ok(LossKind::MseTarget),
            "cross-entropy" => Ok(LossKind::CrossEntropy),
            other => Err(Error::InvalidConfig(format!("unknown loss '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Master seed: model init and the per-epoch shuffle streams derive
    /// from it.
    pub seed: u64,
    pub loss: LossKind,
    /// Epochs between eval-metric log entries; 0 disables.
    pub eval_cadence: usize,
    /// Optional global gradient-norm clip.
    pub clip_norm: Option<f64>,
    /// Worker threads for batch items; results are thread-count invariant.
    pub threads: usize,
}

impl TrainConfig {
    /// Toy defaults: 200 epochs, batch 128, Adam at 1e-3.
    pub fn toy_defaults(seed: u64) -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 128,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            seed,
            loss: LossKind::MseFull,
            eval_cadence: 0,
            clip_norm: None,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParameter { what: "epochs", value: 0.0 });
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter { what: "batch_size", value: 0.0 });
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter {
                what: "learning_rate",
                value: self.learning_rate,
            });
        }
        if self.threads == 0 {
            return Err(Error::InvalidParameter { what: "threads", value: 0.0 });
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut kv = KvBlock::new();
        kv.set("epochs", self.epochs);
        kv.set("batch_size", self.batch_size);
        kv.set("lr", self.learning_rate);
        kv.set("beta1", self.beta1);
        kv.set("beta2", self.beta2);
        kv.set("adam_eps", self.adam_eps);
        kv.set("weight_decay", self.weight_decay);
        kv.set("seed", self.seed);
        kv.set("loss", self.loss.as_str());
        kv.set("eval_cadence", self.eval_cadence);
        kv.set("clip_norm", self.clip_norm.map_or("none".to_string(), |v| v.to_string()));
        kv.render()
    }

    /// Reads train keys out of `kv`, leaving others untouched.
    pub fn from_kv(kv: &mut KvBlock, seed_default: u64) -> Result<Self> {
        let clip = match kv.take("clip_norm") {
            None => None,
            Some(raw) if raw == "none" || raw == "0" => None,
            Some(raw) => Some(raw.parse().map_err(|_| {
                Error::InvalidConfig(format!("clip_norm: cannot parse '{raw}'"))
            })?),
        };
        let config = TrainConfig {
            epochs: kv.take_parse("epochs", 200usize)?,
            batch_size: kv.take_parse("batch_size", 128usize)?,
            learning_rate: kv.take_parse("lr", 1e-3f64)?,
            beta1: kv.take_parse("beta1", 0.9f64)?,
            beta2: kv.take_parse("beta2", 0.999f64)?,
            adam_eps: kv.take_parse("adam_eps", 1e-8f64)?,
            weight_decay: kv.take_parse("weight_decay", 0.0f64)?,
            seed: kv.take_parse("seed", seed_default)?,
            loss: LossKind::parse(&kv.take_or("loss", "mse-full"))?,
            eval_cadence: kv.take_parse("eval_cadence", 0usize)?,
            clip_norm: clip,
            threads: 1,
        };
        config.validate()?;
        Ok(config)
    }
}

/// First/second Adam moments plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &[Matrix]) -> Self {
        let zeros: Vec<Matrix> =
            params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        AdamState { m: zeros.clone(), v: zeros, step: 0 }
    }

    pub fn validate(&self, params: &[Matrix]) -> Result<()> {
        if self.m.len() != params.len() || self.v.len() != params.len() {
            return Err(Error::InvalidConfig(format!(
                "optimizer state holds {} tensors for {} parameters",
                self.m.len(),
                params.len()
            )));
        }
        for ((m, v), p) in self.m.iter().zip(&self.v).zip(params) {
            if m.shape() != p.shape() || v.shape() != p.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_state",
                    left: m.shape(),
                    right: p.shape(),
                });
            }
        }
        Ok(())
    }
}

/// One bias-corrected Adam update with decoupled weight decay.
pub fn adam_step(
    params: &mut [Matrix],
    grads: &[Matrix],
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<()> {
    state.validate(params)?;
    if grads.len() != params.len() {
        return Err(Error::InvalidConfig(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    state.step += 1;
    let t = state.step;
    let bc1 = 1.0 - config.beta1.powi(t as i32);
    let bc2 = 1.0 - config.beta2.powi(t as i32);
    for i in 0..params.len() {
        if params[i].shape() != grads[i].shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                left: params[i].shape(),
                right: grads[i].shape(),
            });
        }
        let p = params[i].data();
        let g = grads[i].data();
        let m_old = state.m[i].data();
        let v_old = state.v[i].data();
        let mut m_new = Vec::with_capacity(p.len());
        let mut v_new = Vec::with_capacity(p.len());
        let mut p_new = Vec::with_capacity(p.len());
        for k in 0..p.len() {
            let m = config.beta1 * m_old[k] + (1.0 - config.beta1) * g[k];
            let v = config.beta2 * v_old[k] + (1.0 - config.beta2) * g[k] * g[k];
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            let mut val = p[k] - config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_eps);
            if config.weight_decay > 0.0 {
                val -= config.learning_rate * config.weight_decay * p[k];
            }
            m_new.push(m);
            v_new.push(v);
            p_new.push(val);
        }
        state.m[i] = Matrix::from_vec(p.len() / params[i].cols(), params[i].cols(), m_new)?;
        state.v[i] = Matrix::from_vec(p.len() / params[i].cols(), params[i].cols(), v_new)?;
        params[i] = Matrix::from_vec(p.len() / params[i].cols(), params[i].cols(), p_new)?;
    }
    Ok(())
}

/// Training data: a fixed task list or a seeded symbolic stream consumed
/// as a step budget.
#[derive(Debug, Clone)]
pub enum TrainData {
    Panels(Vec<PanelTask>),
    Symbolic(Vec<SymbolicTask>),
    /// Tasks are generated on the fly from the train-side combos; one
    /// "epoch" consumes `total` tasks.
    SymbolicStream { combos: Vec<RuleCombo>, total: usize, seed: u64 },
}

impl TrainData {
    fn len(&self) -> usize {
        match self {
            TrainData::Panels(v) => v.len(),
            TrainData::Symbolic(v) => v.len(),
            TrainData::SymbolicStream { total, .. } => *total,
        }
    }

    fn is_stream(&self) -> bool {
        matches!(self, TrainData::SymbolicStream { .. })
    }
}

/// Pre-tokenized training item.
#[derive(Debug, Clone)]
struct Item {
    input: Matrix,
    target: Target,
}

#[derive(Debug, Clone)]
enum Target {
    PanelTokens(Matrix),
    Labels([u8; FEATURES]),
}

fn prep_panel(task: &PanelTask) -> Result<Item> {
    Ok(Item {
        input: tokenize_panels(task, TokenMode::Pixels, true)?,
        target: Target::PanelTokens(tokenize_panels(task, TokenMode::Pixels, false)?),
    })
}

fn prep_symbolic(task: &SymbolicTask) -> Result<Item> {
    Ok(Item {
        input: tokenize_symbolic(task, true)?,
        target: Target::Labels(task.target),
    })
}

/// Mask selecting the target-panel token rows.
fn target_mask(rows: usize, cols: usize) -> Matrix {
    let mut data = vec![0.0; rows * cols];
    let start = (PANELS_PER_TASK - 1) * QUADRANTS;
    for r in start..rows {
        for c in 0..cols {
            data[r * cols + c] = 1.0;
        }
    }
    Matrix::from_vec(rows, cols, data).expect("mask entries are 0/1")
}

/// Forward + backward for one item; returns the loss and parameter
/// gradients in canonical order.
fn item_pass(
    params: &ModelParams,
    model_config: &ModelConfig,
    loss_kind: LossKind,
    mask: Option<&Matrix>,
    item: &Item,
) -> Result<(f64, Vec<Matrix>)> {
    let mut g = ExprGraph::new();
    let raw = g.leaf(item.input.clone());
    let leaves = params.register(&mut g);
    let (out, _) = model_forward(&mut g, raw, &leaves, model_config)?;
    let loss = match (&item.target, loss_kind) {
        (Target::PanelTokens(full), LossKind::MseFull) => {
            let t = g.leaf(full.clone());
            g.mse_loss(out, t, None)?
        }
        (Target::PanelTokens(full), LossKind::MseTarget) => {
            let t = g.leaf(full.clone());
            let m = g.leaf(mask.expect("target mask prepared").clone());
            g.mse_loss(out, t, Some(m))?
        }
        (Target::Labels(labels), LossKind::CrossEntropy) => {
            let target_row = g.slice_rows(out, SYMBOLIC_TOKENS - 1, 1)?;
            let mut acc = None;
            for f in 0..FEATURES {
                let block = g.slice_cols(target_row, f * FEATURE_VALUES, FEATURE_VALUES)?;
                let ce = g.cross_entropy(block, &[labels[f] as usize])?;
                acc = Some(match acc {
                    None => ce,
                    Some(prev) => g.add(prev, ce)?,
                });
            }
            g.scale(acc.expect("FEATURES > 0"), 1.0 / FEATURES as f64)?
        }
        (Target::PanelTokens(_), LossKind::CrossEntropy) => {
            return Err(Error::UnsupportedMode(
                "cross-entropy loss on a panel dataset".into(),
            ))
        }
        (Target::Labels(_), _) => {
            return Err(Error::UnsupportedMode(
                "mse loss on a symbolic dataset".into(),
            ))
        }
    };
    let loss_value = g.value(loss).item()?;
    g.backward(loss)?;
    Ok((loss_value, collect_gradients(&g, &leaves)))
}

/// Mean loss and mean gradients over a batch. Per-item results land in
/// index-order slots before reduction, so any thread count yields the
/// same bits.
fn batch_pass(
    params: &ModelParams,
    model_config: &ModelConfig,
    loss_kind: LossKind,
    mask: Option<&Matrix>,
    items: &[Item],
    threads: usize,
) -> Result<(f64, Vec<Matrix>)> {
    let mut slots: Vec<Option<Result<(f64, Vec<Matrix>)>>> = Vec::new();
    slots.resize_with(items.len(), || None);
    if threads <= 1 || items.len() <= 1 {
        for (slot, item) in slots.iter_mut().zip(items) {
            *slot = Some(item_pass(params, model_config, loss_kind, mask, item));
        }
    } else {
        let workers = threads.min(items.len());
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    scope.spawn(move || {
                        let mut out = Vec::new();
                        for (pos, item) in items.iter().enumerate() {
                            if pos % workers == w {
                                out.push((
                                    pos,
                                    item_pass(params, model_config, loss_kind, mask, item),
                                ));
                            }
                        }
                        out
                    })
                })
                .collect();
            for handle in handles {
                for (pos, res) in handle.join().expect("worker panicked") {
                    slots[pos] = Some(res);
                }
            }
        });
    }
    let mut loss_sum = 0.0;
    let mut grad_sum: Option<Vec<Matrix>> = None;
    for slot in slots {
        let (loss, grads) = slot.expect("slot filled")?;
        loss_sum += loss;
        grad_sum = Some(match grad_sum {
            None => grads,
            Some(mut acc) => {
                for (a, d) in acc.iter_mut().zip(&grads) {
                    *a = a.add(d)?;
                }
                acc
            }
        });
    }
    let scale = 1.0 / items.len() as f64;
    let grads = grad_sum
        .expect("non-empty batch")
        .into_iter()
        .map(|m| m.scale(scale))
        .collect::<Result<Vec<_>>>()?;
    Ok((loss_sum * scale, grads))
}

fn clip_gradients(grads: &mut [Matrix], max_norm: f64) -> Result<()> {
    let norm_sq: f64 = grads
        .iter()
        .map(|m| m.data().iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = norm_sq.sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for m in grads.iter_mut() {
            *m = m.scale(s)?;
        }
    }
    Ok(())
}

/// Result of a training run: final checkpoint, the full metric log, and
/// the last epoch's mean training loss.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: String,
    pub final_loss: f64,
}

/// Evaluation data used at the configured cadence.
#[derive(Debug, Clone)]
pub enum EvalData {
    Panels(Vec<PanelTask>),
    Symbolic(Vec<SymbolicTask>),
}

/// Runs the optimization loop. With `resume`, continues a checkpointed run
/// and reproduces the unbroken run's remaining log lines byte for byte.
pub fn train_run(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    data: &TrainData,
    eval_data: Option<&EvalData>,
    resume: Option<Checkpoint>,
) -> Result<TrainOutcome> {
    model_config.validate()?;
    train_config.validate()?;
    if data.len() == 0 {
        return Err(Error::EmptyInput("train_run dataset"));
    }
    match (data, model_config.task_kind) {
        (TrainData::Panels(_), TaskKind::PanelRegression) => {}
        (TrainData::Symbolic(_) | TrainData::SymbolicStream { .. }, TaskKind::SymbolicClassification) => {}
        _ => {
            return Err(Error::UnsupportedMode(format!(
                "dataset kind does not fit task kind {}",
                model_config.task_kind.as_str()
            )))
        }
    }

    let (mut params_vec, mut adam, start_epoch) = match resume {
        Some(ckpt) => {
            let values = ckpt.params.tensor_values();
            let state = match ckpt.opt_state {
                Some((m, v, step)) => AdamState { m, v, step },
                None => AdamState::new(&values),
            };
            (values, state, ckpt.epoch)
        }
        None => {
            let params = init_model(model_config, train_config.seed)?;
            let values = params.tensor_values();
            let state = AdamState::new(&values);
            (values, state, 0)
        }
    };

    // Pre-tokenized items for fixed datasets.
    let fixed_items: Vec<Item> = match data {
        TrainData::Panels(tasks) => tasks.iter().map(prep_panel).collect::<Result<_>>()?,
        TrainData::Symbolic(tasks) => tasks.iter().map(prep_symbolic).collect::<Result<_>>()?,
        TrainData::SymbolicStream { .. } => Vec::new(),
    };
    let mask = match (model_config.task_kind, train_config.loss) {
        (TaskKind::PanelRegression, LossKind::MseTarget) => {
            let rows = model_config.n_tokens();
            Some(target_mask(rows, model_config.input_dim))
        }
        _ => None,
    };

    let mut log = String::new();
    for line in model_config.render().lines() {
        log.push_str("# ");
        log.push_str(line);
        log.push('\n');
    }
    for line in train_config.render().lines() {
        log.push_str("# ");
        log.push_str(line);
        log.push('\n');
    }
    log.push_str(&format!("# data = {} tasks ({})\n", data.len(), match data {
        TrainData::Panels(_) => "panel",
        TrainData::Symbolic(_) => "symbolic",
        TrainData::SymbolicStream { .. } => "symbolic-stream",
    }));
    let eval_name = match model_config.task_kind {
        TaskKind::PanelRegression => "eval_target_mse",
        TaskKind::SymbolicClassification => "eval_accuracy",
    };
    log.push_str(&format!("epoch,step,train_loss,{eval_name}\n"));

    let epochs = if data.is_stream() { 1 } else { train_config.epochs };
    let mut global_step: u64 = adam.step;
    let mut final_loss = f64::NAN;

    for epoch in start_epoch + 1..=epochs {
        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0usize;

        match data {
            TrainData::Panels(_) | TrainData::Symbolic(_) => {
                let mut order: Vec<usize> = (0..fixed_items.len()).collect();
                let mut shuffle_rng = rng::substream(train_config.seed ^ 0x5487A5F1, epoch as u64);
                rng::shuffle(&mut shuffle_rng, &mut order);
                let current = ModelParams::from_tensor_values(model_config, &params_vec)?;
                let mut params = current;
                for batch_ids in order.chunks(train_config.batch_size) {
                    let batch: Vec<Item> =
                        batch_ids.iter().map(|&i| fixed_items[i].clone()).collect();
                    let (loss, mut grads) = batch_pass(
                        &params,
                        model_config,
                        train_config.loss,
                        mask.as_ref(),
                        &batch,
                        train_config.threads,
                    )?;
                    if !loss.is_finite() {
                        return Err(Error::NonFiniteLoss {
                            epoch,
                            step: epoch_batches,
                            value: loss,
                        });
                    }
                    if let Some(max_norm) = train_config.clip_norm {
                        clip_gradients(&mut grads, max_norm)?;
                    }
                    adam_step(&mut params_vec, &grads, &mut adam, train_config)?;
                    params = ModelParams::from_tensor_values(model_config, &params_vec)?;
                    epoch_loss += loss;
                    epoch_batches += 1;
                    global_step += 1;
                }
            }
            TrainData::SymbolicStream { combos, total, seed } => {
                if combos.is_empty() {
                    return Err(Error::EmptyInput("symbolic stream combos"));
                }
                let mut params = ModelParams::from_tensor_values(model_config, &params_vec)?;
                let mut produced = 0usize;
                while produced < *total {
                    let batch_len = train_config.batch_size.min(total - produced);
                    let mut batch = Vec::with_capacity(batch_len);
                    for k in 0..batch_len {
                        let task_index = (produced + k) as u64;
                        let mut pick_rng = rng::substream(*seed, task_index);
                        let combo = combos[rng::uniform_usize(&mut pick_rng, combos.len())];
                        let task = gen_symbolic_task(combo, seed.wrapping_add(task_index))?;
                        batch.push(prep_symbolic(&task)?);
                    }
                    let (loss, mut grads) = batch_pass(
                        &params,
                        model_config,
                        train_config.loss,
                        mask.as_ref(),
                        &batch,
                        train_config.threads,
                    )?;
                    if !loss.is_finite() {
                        return Err(Error::NonFiniteLoss {
                            epoch,
                            step: epoch_batches,
                            value: loss,
                        });
                    }
                    if let Some(max_norm) = train_config.clip_norm {
                        clip_gradients(&mut grads, max_norm)?;
                    }
                    adam_step(&mut params_vec, &grads, &mut adam, train_config)?;
                    params = ModelParams::from_tensor_values(model_config, &params_vec)?;
                    produced += batch_len;
                    epoch_loss += loss;
                    epoch_batches += 1;
                    global_step += 1;
                }
            }
        }

        let mean_loss = epoch_loss / epoch_batches as f64;
        final_loss = mean_loss;
        let eval_cell = if train_config.eval_cadence > 0
            && (epoch % train_config.eval_cadence == 0 || epoch == epochs)
        {
            match eval_data {
                Some(EvalData::Panels(tasks)) => {
                    let params = ModelParams::from_tensor_values(model_config, &params_vec)?;
                    format!("{}", eval::panel_target_mse(&params, model_config, tasks)?)
                }
                Some(EvalData::Symbolic(tasks)) => {
                    let params = ModelParams::from_tensor_values(model_config, &params_vec)?;
                    format!("{}", eval::accuracy(&params, model_config, tasks)?)
                }
                None => String::new(),
            }
        } else {
            String::new()
        };
        log.push_str(&format!("{epoch},{global_step},{mean_loss},{eval_cell}\n"));
    }

    let params = ModelParams::from_tensor_values(model_config, &params_vec)?;
    let checkpoint = Checkpoint {
        config: model_config.clone(),
        params,
        opt_state: Some((adam.m, adam.v, adam.step)),
        seed: train_config.seed,
        epoch: epochs,
    };
    Ok(TrainOutcome { checkpoint, log, final_loss })
}

/// Saves an outcome's checkpoint and writes the metric log next to it.
pub fn save_outcome(outcome: &TrainOutcome, ckpt_path: &Path, log_path: &Path) -> Result<()> {
    outcome.checkpoint.save(ckpt_path)?;
    std::fs::write(log_path, &outcome.log)
        .map_err(|source| Error::Io { path: log_path.into(), source })
}
