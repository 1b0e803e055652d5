//! Model assembly: embedding, a stack of SCA blocks, optional feed-forward
//! sublayers, readout, and the checkpoint format.

use std::path::Path;

use crate::attention::{
    sca_forward, AttentionTrace, QkLeaves, QkParams, SCAConfig, SCAParams, ScaLeaves, SigmaKind,
};
use crate::error::{Error, Result};
use crate::kv::KvBlock;
use crate::numerics::{ExprGraph, Matrix, NodeId};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    PanelRegression,
    SymbolicClassification,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::PanelRegression => "panel-regression",
            TaskKind::SymbolicClassification => "symbolic-classification",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "panel-regression" => Ok(TaskKind::PanelRegression),
            "symbolic-classification" => Ok(TaskKind::SymbolicClassification),
            other => Err(Error::InvalidConfig(format!("unknown task kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub layers: usize,
    pub sca: SCAConfig,
    /// Raw token width before embedding.
    pub input_dim: usize,
    /// Identity embedding requires `input_dim == sca.d`.
    pub learned_embedding: bool,
    pub use_positional: bool,
    pub use_ffn: bool,
    pub ffn_hidden: usize,
    /// Identity readout requires `sca.d == readout_dim`.
    pub learned_readout: bool,
    pub readout_dim: usize,
    /// Residual connection around each SCA block. Off in the 1-layer toy,
    /// which keeps the pure-attention closed forms exact.
    pub residual: bool,
    pub task_kind: TaskKind,
}

impl ModelConfig {
    /// The compositional-panel toy: a single pure attention layer over
    /// 9 tasks x 4 quadrant tokens of 16 pixels, identity embedding and
    /// readout, no positions, no residual.
    pub fn panel_toy() -> Self {
        ModelConfig {
            layers: 1,
            sca: SCAConfig::new(16, 1, 9, 4),
            input_dim: 16,
            learned_embedding: false,
            use_positional: false,
            use_ffn: false,
            ffn_hidden: 64,
            learned_readout: false,
            readout_dim: 16,
            residual: false,
            task_kind: TaskKind::PanelRegression,
        }
    }

    /// The symbolic rule-combination model: stacked blocks with learned
    /// embedding, positions, residuals, logit scaling and RMS norm.
    pub fn symbolic(layers: usize, d: usize, heads: usize) -> Self {
        let mut sca = SCAConfig::new(d, heads, 9, 1);
        sca.scale_logits = true;
        sca.rms_norm = true;
        ModelConfig {
            layers,
            sca,
            input_dim: 32,
            learned_embedding: true,
            use_positional: true,
            use_ffn: false,
            ffn_hidden: 4 * d,
            learned_readout: true,
            readout_dim: 32,
            residual: true,
            task_kind: TaskKind::SymbolicClassification,
        }
    }

    pub fn n_tokens(&self) -> usize {
        self.sca.n_tokens()
    }

    pub fn validate(&self) -> Result<()> {
        self.sca.validate()?;
        if self.layers == 0 {
            return Err(Error::InvalidConfig("layers must be >= 1".into()));
        }
        if !self.learned_embedding && self.input_dim != self.sca.d {
            return Err(Error::InvalidConfig(format!(
                "identity embedding requires input_dim == d ({} != {})",
                self.input_dim, self.sca.d
            )));
        }
        if !self.learned_readout && self.readout_dim != self.sca.d {
            return Err(Error::InvalidConfig(format!(
                "identity readout requires readout_dim == d ({} != {})",
                self.readout_dim, self.sca.d
            )));
        }
        if self.use_ffn && self.ffn_hidden == 0 {
            return Err(Error::InvalidConfig("ffn_hidden must be positive".into()));
        }
        Ok(())
    }

    fn to_kv(&self) -> KvBlock {
        let mut kv = KvBlock::new();
        kv.set("layers", self.layers);
        kv.set("dim", self.sca.d);
        kv.set("heads", self.sca.heads);
        kv.set("tasks", self.sca.tasks);
        kv.set("tokens_per_task", self.sca.tokens_per_task);
        kv.set(
            "sigma",
            match self.sca.sigma {
                SigmaKind::Softmax => "softmax",
                SigmaKind::Prox => "prox",
            },
        );
        kv.set("xi", self.sca.xi);
        kv.set("xi_learnable", self.sca.xi_learnable);
        kv.set("transfer", self.sca.transfer_enabled);
        kv.set("phi_relu", self.sca.phi_relu);
        kv.set("psi_relu", self.sca.psi_relu);
        kv.set("scale_logits", self.sca.scale_logits);
        kv.set("rms_norm", self.sca.rms_norm);
        kv.set("rms_eps", self.sca.rms_eps);
        kv.set("full_qk", self.sca.full_qk);
        kv.set("per_head_lambda", self.sca.per_head_lambda);
        kv.set("input_dim", self.input_dim);
        kv.set("learned_embedding", self.learned_embedding);
        kv.set("positional", self.use_positional);
        kv.set("ffn", self.use_ffn);
        kv.set("ffn_hidden", self.ffn_hidden);
        kv.set("learned_readout", self.learned_readout);
        kv.set("readout_dim", self.readout_dim);
        kv.set("residual", self.residual);
        kv.set("task", self.task_kind.as_str());
        kv
    }

    /// Reads the model keys out of `kv`, leaving unrelated keys in place.
    pub fn from_kv(kv: &mut KvBlock) -> Result<Self> {
        let d = kv.take_parse("dim", 16usize)?;
        let heads = kv.take_parse("heads", 1usize)?;
        let tasks = kv.take_parse("tasks", 9usize)?;
        let tokens_per_task = kv.take_parse("tokens_per_task", 4usize)?;
        let mut sca = SCAConfig::new(d, heads, tasks, tokens_per_task);
        sca.sigma = match kv.take_or("sigma", "softmax").as_str() {
            "softmax" => SigmaKind::Softmax,
            "prox" => SigmaKind::Prox,
            other => {
                return Err(Error::InvalidConfig(format!("unknown sigma '{other}'")));
            }
        };
        sca.xi = kv.take_parse("xi", 0.03f64)?;
        sca.xi_learnable = kv.take_bool("xi_learnable", false)?;
        sca.transfer_enabled = kv.take_bool("transfer", false)?;
        sca.phi_relu = kv.take_bool("phi_relu", false)?;
        sca.psi_relu = kv.take_bool("psi_relu", false)?;
        sca.scale_logits = kv.take_bool("scale_logits", false)?;
        sca.rms_norm = kv.take_bool("rms_norm", false)?;
        sca.rms_eps = kv.take_parse("rms_eps", 1e-8f64)?;
        sca.full_qk = kv.take_bool("full_qk", false)?;
        sca.per_head_lambda = kv.take_bool("per_head_lambda", false)?;
        let config = ModelConfig {
            layers: kv.take_parse("layers", 1usize)?,
            input_dim: kv.take_parse("input_dim", d)?,
            learned_embedding: kv.take_bool("learned_embedding", false)?,
            use_positional: kv.take_bool("positional", false)?,
            use_ffn: kv.take_bool("ffn", false)?,
            ffn_hidden: kv.take_parse("ffn_hidden", 4 * d)?,
            learned_readout: kv.take_bool("learned_readout", false)?,
            readout_dim: kv.take_parse("readout_dim", d)?,
            residual: kv.take_bool("residual", false)?,
            task_kind: TaskKind::parse(&kv.take_or("task", "panel-regression"))?,
            sca,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn render(&self) -> String {
        self.to_kv().render()
    }
}

#[derive(Debug, Clone)]
pub struct FfnParams {
    pub w1: Matrix,
    pub w2: Matrix,
}

/// All trainable tensors of a model.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub embed: Option<Matrix>,
    pub pos: Option<Matrix>,
    pub blocks: Vec<SCAParams>,
    pub ffn: Vec<FfnParams>,
    pub readout: Option<Matrix>,
}

/// Deterministic parameters for (config, seed); lambda starts at zero.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = rng::seeded(seed);
    let embed = if config.learned_embedding {
        Some(random(config.input_dim, config.sca.d, &mut rng)?)
    } else {
        None
    };
    let pos = if config.use_positional {
        Some(random(config.n_tokens(), config.sca.d, &mut rng)?)
    } else {
        None
    };
    let mut blocks = Vec::with_capacity(config.layers);
    let mut ffn = Vec::new();
    for _ in 0..config.layers {
        blocks.push(SCAParams::init(&config.sca, &mut rng)?);
        if config.use_ffn {
            ffn.push(FfnParams {
                w1: random(config.sca.d, config.ffn_hidden, &mut rng)?,
                w2: random(config.ffn_hidden, config.sca.d, &mut rng)?,
            });
        }
    }
    let readout = if config.learned_readout {
        Some(random(config.sca.d, config.readout_dim, &mut rng)?)
    } else {
        None
    };
    Ok(ModelParams { embed, pos, blocks, ffn, readout })
}

fn random(rows: usize, cols: usize, rng: &mut Rng) -> Result<Matrix> {
    // fan-in scaling
    let scale = 1.0 / (rows as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols).map(|_| rng::uniform_sym(rng, scale)).collect();
    Matrix::from_vec(rows, cols, data)
}

impl ModelParams {
    /// Named views of every tensor in canonical order. The order defines
    /// gradient and optimizer-state layout.
    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        if let Some(e) = &self.embed {
            out.push(("embed".to_string(), e));
        }
        if let Some(p) = &self.pos {
            out.push(("pos".to_string(), p));
        }
        for (li, block) in self.blocks.iter().enumerate() {
            for (hi, head) in block.heads.iter().enumerate() {
                match &head.qk {
                    QkParams::Factored { wq, wk } => {
                        out.push((format!("layer{li}.head{hi}.wq"), wq));
                        out.push((format!("layer{li}.head{hi}.wk"), wk));
                    }
                    QkParams::Full { wqk } => {
                        out.push((format!("layer{li}.head{hi}.wqk"), wqk));
                    }
                }
                out.push((format!("layer{li}.head{hi}.wv"), &head.wv));
                out.push((format!("layer{li}.head{hi}.wo"), &head.wo));
            }
            out.push((format!("layer{li}.lambda"), &block.lambda));
            if let Some(xi) = &block.xi {
                out.push((format!("layer{li}.xi"), xi));
            }
        }
        for (li, f) in self.ffn.iter().enumerate() {
            out.push((format!("layer{li}.ffn.w1"), &f.w1));
            out.push((format!("layer{li}.ffn.w2"), &f.w2));
        }
        if let Some(r) = &self.readout {
            out.push(("readout".to_string(), r));
        }
        out
    }

    pub fn tensor_values(&self) -> Vec<Matrix> {
        self.named_tensors().into_iter().map(|(_, m)| m.clone()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors()
            .iter()
            .map(|(_, m)| m.rows() * m.cols())
            .sum()
    }

    /// Rebuilds structured parameters from tensors in canonical order.
    pub fn from_tensor_values(config: &ModelConfig, values: &[Matrix]) -> Result<Self> {
        let mut it = values.iter().cloned();
        let mut next = |what: &str| {
            it.next()
                .ok_or_else(|| Error::InvalidConfig(format!("missing tensor '{what}'")))
        };
        let embed = if config.learned_embedding { Some(next("embed")?) } else { None };
        let pos = if config.use_positional { Some(next("pos")?) } else { None };
        let mut blocks = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            let mut heads = Vec::with_capacity(config.sca.heads);
            for _ in 0..config.sca.heads {
                let qk = if config.sca.full_qk {
                    QkParams::Full { wqk: next("wqk")? }
                } else {
                    QkParams::Factored { wq: next("wq")?, wk: next("wk")? }
                };
                heads.push(crate::attention::HeadParams {
                    qk,
                    wv: next("wv")?,
                    wo: next("wo")?,
                });
            }
            let lambda = next("lambda")?;
            let xi = if config.sca.xi_learnable { Some(next("xi")?) } else { None };
            blocks.push(SCAParams { heads, lambda, xi });
        }
        let mut ffn = Vec::new();
        if config.use_ffn {
            for _ in 0..config.layers {
                ffn.push(FfnParams { w1: next("ffn.w1")?, w2: next("ffn.w2")? });
            }
        }
        let readout = if config.learned_readout { Some(next("readout")?) } else { None };
        if it.next().is_some() {
            return Err(Error::InvalidConfig("surplus tensors for this config".into()));
        }
        let params = ModelParams { embed, pos, blocks, ffn, readout };
        for block in &params.blocks {
            block.validate(&config.sca)?;
        }
        Ok(params)
    }
}

/// Graph leaves for all parameters, plus the flattened registration order
/// used to collect gradients.
pub struct ModelLeaves {
    pub embed: Option<NodeId>,
    pub pos: Option<NodeId>,
    pub blocks: Vec<ScaLeaves>,
    pub ffn: Vec<(NodeId, NodeId)>,
    pub readout: Option<NodeId>,
    pub order: Vec<NodeId>,
}

impl ModelParams {
    pub fn register(&self, g: &mut ExprGraph) -> ModelLeaves {
        let mut order = Vec::new();
        let embed = self.embed.as_ref().map(|m| g.leaf(m.clone()));
        if let Some(id) = embed {
            order.push(id);
        }
        let pos = self.pos.as_ref().map(|m| g.leaf(m.clone()));
        if let Some(id) = pos {
            order.push(id);
        }
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let leaves = block.register(g);
            for head in &leaves.heads {
                match head.qk {
                    QkLeaves::Factored { wq, wk } => {
                        order.push(wq);
                        order.push(wk);
                    }
                    QkLeaves::Full { wqk } => order.push(wqk),
                }
                order.push(head.wv);
                order.push(head.wo);
            }
            order.push(leaves.lambda);
            if let Some(xi) = leaves.xi {
                order.push(xi);
            }
            blocks.push(leaves);
        }
        let mut ffn = Vec::new();
        for f in &self.ffn {
            let w1 = g.leaf(f.w1.clone());
            let w2 = g.leaf(f.w2.clone());
            order.push(w1);
            order.push(w2);
            ffn.push((w1, w2));
        }
        let readout = self.readout.as_ref().map(|m| g.leaf(m.clone()));
        if let Some(id) = readout {
            order.push(id);
        }
        ModelLeaves { embed, pos, blocks, ffn, readout, order }
    }
}

/// Gradients for every parameter in canonical order (zeros where a tensor
/// does not influence the loss).
pub fn collect_gradients(g: &ExprGraph, leaves: &ModelLeaves) -> Vec<Matrix> {
    leaves.order.iter().map(|&id| g.grad_or_zeros(id)).collect()
}

/// Projects raw tokens into model width and adds positions when enabled.
pub fn embed_tokens(
    g: &mut ExprGraph,
    raw: NodeId,
    leaves: &ModelLeaves,
    config: &ModelConfig,
) -> Result<NodeId> {
    let shape = g.value(raw).shape();
    if shape != (config.n_tokens(), config.input_dim) {
        return Err(Error::ShapeMismatch {
            op: "embed_tokens",
            left: shape,
            right: (config.n_tokens(), config.input_dim),
        });
    }
    let mut x = match leaves.embed {
        Some(w) => g.matmul(raw, w)?,
        None => raw,
    };
    if let Some(p) = leaves.pos {
        x = g.add(x, p)?;
    }
    Ok(x)
}

/// Embed, run the block stack, project to readout width. Returns the
/// output node and the per-layer attention traces.
pub fn model_forward(
    g: &mut ExprGraph,
    raw: NodeId,
    leaves: &ModelLeaves,
    config: &ModelConfig,
) -> Result<(NodeId, Vec<AttentionTrace>)> {
    let mut x = embed_tokens(g, raw, leaves, config)?;
    let mut traces = Vec::with_capacity(config.layers);
    for li in 0..config.layers {
        let (y, trace) = sca_forward(g, x, &leaves.blocks[li], &config.sca)?;
        traces.push(trace);
        x = if config.residual { g.add(x, y)? } else { y };
        if config.use_ffn {
            let (w1, w2) = leaves.ffn[li];
            let h = g.matmul(x, w1)?;
            let h = g.relu(h);
            let f = g.matmul(h, w2)?;
            x = g.add(x, f)?;
        }
    }
    let out = match leaves.readout {
        Some(w) => g.matmul(x, w)?,
        None => x,
    };
    Ok((out, traces))
}

/// One forward pass on plain matrices.
pub fn model_forward_value(
    raw: &Matrix,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<(Matrix, Vec<AttentionTrace>)> {
    let mut g = ExprGraph::new();
    let r = g.leaf(raw.clone());
    let leaves = params.register(&mut g);
    let (out, traces) = model_forward(&mut g, r, &leaves, config)?;
    Ok((g.value(out).clone(), traces))
}

// ---------------------------------------------------------------------------
// Checkpoint format "SCA1"
//
//   magic "SCA1" | u32 version | u64 config-length | config text (key=value)
//   then per tensor until EOF:
//   u64 name-length | name | u32 rank (=2) | u64 dims[rank] | f64 data
//   all integers and floats little-endian, data row-major
// ---------------------------------------------------------------------------

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SCA1";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized model state: parameters, optimizer moments, seed and epoch.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    /// First and second Adam moments plus step count, when training state
    /// is carried.
    pub opt_state: Option<(Vec<Matrix>, Vec<Matrix>, u64)>,
    pub seed: u64,
    pub epoch: usize,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut meta = self.config.to_kv();
        meta.set("ckpt.seed", self.seed);
        meta.set("ckpt.epoch", self.epoch);
        if let Some((_, _, step)) = &self.opt_state {
            meta.set("ckpt.adam_step", step);
        }
        let config_text = meta.render();

        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(config_text.len() as u64).to_le_bytes());
        buf.extend_from_slice(config_text.as_bytes());

        for (name, tensor) in self.params.named_tensors() {
            write_tensor(&mut buf, &name, tensor);
        }
        if let Some((m, v, _)) = &self.opt_state {
            let names: Vec<String> =
                self.params.named_tensors().iter().map(|(n, _)| n.clone()).collect();
            for (name, tensor) in names.iter().zip(m) {
                write_tensor(&mut buf, &format!("adam.m.{name}"), tensor);
            }
            for (name, tensor) in names.iter().zip(v) {
                write_tensor(&mut buf, &format!("adam.v.{name}"), tensor);
            }
        }
        std::fs::write(path, &buf).map_err(|source| Error::Io { path: path.into(), source })
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes =
            std::fs::read(path).map_err(|source| Error::Io { path: path.into(), source })?;
        let mut r = ByteReader { path, bytes: &bytes, pos: 0 };

        let magic = r.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::CorruptHeader { path: path.into() });
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                path: path.into(),
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let config_len = r.u64()? as usize;
        let config_bytes = r.take(config_len)?;
        let config_text = std::str::from_utf8(config_bytes).map_err(|_| Error::MalformedFile {
            path: path.into(),
            message: "config block is not UTF-8".into(),
        })?;
        let mut kv = KvBlock::parse(config_text)?;
        let seed = kv.take_parse("ckpt.seed", 0u64)?;
        let epoch = kv.take_parse("ckpt.epoch", 0usize)?;
        let adam_step: Option<u64> = kv.take("ckpt.adam_step").map(|s| s.parse()).transpose().map_err(
            |_| Error::MalformedFile { path: path.into(), message: "bad ckpt.adam_step".into() },
        )?;
        let config = ModelConfig::from_kv(&mut kv)?;

        let mut tensors: Vec<(String, Matrix)> = Vec::new();
        while !r.at_end() {
            tensors.push(read_tensor(&mut r)?);
        }

        let expected: Vec<String> = {
            // names come from a zero-initialized skeleton with this config
            let skeleton = init_model(&config, 0)?;
            skeleton.named_tensors().iter().map(|(n, _)| n.clone()).collect()
        };
        let mut params_values = Vec::with_capacity(expected.len());
        let mut idx = 0;
        for name in &expected {
            let Some((got_name, value)) = tensors.get(idx) else {
                return Err(Error::Truncated { path: path.into() });
            };
            if got_name != name {
                return Err(Error::MalformedFile {
                    path: path.into(),
                    message: format!("expected tensor '{name}', found '{got_name}'"),
                });
            }
            params_values.push(value.clone());
            idx += 1;
        }
        let params = ModelParams::from_tensor_values(&config, &params_values)?;

        let opt_state = if idx < tensors.len() {
            let step = adam_step.ok_or_else(|| Error::MalformedFile {
                path: path.into(),
                message: "optimizer tensors present but ckpt.adam_step missing".into(),
            })?;
            let mut m = Vec::with_capacity(expected.len());
            let mut v = Vec::with_capacity(expected.len());
            for name in &expected {
                let want = format!("adam.m.{name}");
                let Some((got, value)) = tensors.get(idx) else {
                    return Err(Error::Truncated { path: path.into() });
                };
                if got != &want {
                    return Err(Error::MalformedFile {
                        path: path.into(),
                        message: format!("expected tensor '{want}', found '{got}'"),
                    });
                }
                m.push(value.clone());
                idx += 1;
            }
            for name in &expected {
                let want = format!("adam.v.{name}");
                let Some((got, value)) = tensors.get(idx) else {
                    return Err(Error::Truncated { path: path.into() });
                };
                if got != &want {
                    return Err(Error::MalformedFile {
                        path: path.into(),
                        message: format!("expected tensor '{want}', found '{got}'"),
                    });
                }
                v.push(value.clone());
                idx += 1;
            }
            Some((m, v, step))
        } else {
            None
        };
        if idx != tensors.len() {
            return Err(Error::MalformedFile {
                path: path.into(),
                message: format!("{} unexpected trailing tensors", tensors.len() - idx),
            });
        }
        Ok(Checkpoint { config, params, opt_state, seed, epoch })
    }
}

fn write_tensor(buf: &mut Vec<u8>, name: &str, tensor: &Matrix) {
    buf.extend_from_slice(&(name.len() as u64).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.extend_from_slice(&2u32.to_le_bytes());
    buf.extend_from_slice(&(tensor.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(tensor.cols() as u64).to_le_bytes());
    for &v in tensor.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct ByteReader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated { path: self.path.into() });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn read_tensor(r: &mut ByteReader) -> Result<(String, Matrix)> {
    let name_len = r.u64()? as usize;
    let name = std::str::from_utf8(r.take(name_len)?)
        .map_err(|_| Error::MalformedFile {
            path: r.path.into(),
            message: "tensor name is not UTF-8".into(),
        })?
        .to_string();
    let rank = r.u32()?;
    if rank != 2 {
        return Err(Error::MalformedFile {
            path: r.path.into(),
            message: format!("tensor '{name}' has rank {rank}, expected 2"),
        });
    }
    let rows = r.u64()? as usize;
    let cols = r.u64()? as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let bits = r.take(8)?;
        data.push(f64::from_le_bytes(bits.try_into().unwrap()));
    }
    Ok((name, Matrix::from_vec(rows, cols, data)?))
}
