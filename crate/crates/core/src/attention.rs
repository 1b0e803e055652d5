//! Sparse-coding attention (SCA).
//!
//! The block decomposes the input against an encoding dictionary
//! `phi(X) = W_qk X^T` to obtain coefficients, applies a sparsifying
//! nonlinearity (row softmax or soft-thresholding), optionally transfers
//! coefficients from the context-task row blocks into the target block, and
//! decodes through `psi(X) = X W_vo`. With softmax, no transfer and no
//! extras this is algebraically identical to multi-head attention, which
//! `reference_mha` verifies through an independent loop implementation.

use crate::error::{Error, Result};
use crate::numerics::{solve_linear, ExprGraph, Matrix, NodeId, XiSource};
use crate::rng::{self, Rng};

/// Nonlinearity applied to raw coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaKind {
    Softmax,
    Prox,
}

/// Configuration of one SCA block.
#[derive(Debug, Clone)]
pub struct SCAConfig {
    /// Model width d.
    pub d: usize,
    /// Head count H; must divide d.
    pub heads: usize,
    /// Task count L per sequence (contexts plus one target).
    pub tasks: usize,
    /// Tokens per task; the sequence length is `tasks * tokens_per_task`.
    pub tokens_per_task: usize,
    pub sigma: SigmaKind,
    /// Soft threshold, used when `sigma == Prox` and `xi_learnable` is off.
    pub xi: f64,
    pub xi_learnable: bool,
    pub transfer_enabled: bool,
    /// Apply ReLU to the encoding dictionary atoms.
    pub phi_relu: bool,
    /// Apply ReLU to the decoding dictionary atoms.
    pub psi_relu: bool,
    /// Divide logits by sqrt(d/H).
    pub scale_logits: bool,
    /// RMS-normalize the head-summed block output.
    pub rms_norm: bool,
    pub rms_eps: f64,
    /// Store W_qk as a full d x d matrix instead of the factored pair.
    pub full_qk: bool,
    /// Keep one lambda vector per head instead of sharing across heads.
    pub per_head_lambda: bool,
}

impl SCAConfig {
    /// Paper-default block: factored projections, shared lambda, no extras.
    pub fn new(d: usize, heads: usize, tasks: usize, tokens_per_task: usize) -> Self {
        SCAConfig {
            d,
            heads,
            tasks,
            tokens_per_task,
            sigma: SigmaKind::Softmax,
            xi: 0.03,
            xi_learnable: false,
            transfer_enabled: false,
            phi_relu: false,
            psi_relu: false,
            scale_logits: false,
            rms_norm: false,
            rms_eps: 1e-8,
            full_qk: false,
            per_head_lambda: false,
        }
    }

    pub fn with_sigma(mut self, sigma: SigmaKind) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_transfer(mut self, on: bool) -> Self {
        self.transfer_enabled = on;
        self
    }

    pub fn with_xi(mut self, xi: f64) -> Self {
        self.xi = xi;
        self
    }

    /// Sequence length N.
    pub fn n_tokens(&self) -> usize {
        self.tasks * self.tokens_per_task
    }

    /// Per-head width d/H.
    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.heads == 0 || self.d % self.heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "width {} must be a positive multiple of head count {}",
                self.d, self.heads
            )));
        }
        if self.tasks < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 tasks, got {}",
                self.tasks
            )));
        }
        if self.tokens_per_task == 0 {
            return Err(Error::InvalidConfig("tokens_per_task must be positive".into()));
        }
        if self.sigma == SigmaKind::Prox && (!self.xi.is_finite() || self.xi < 0.0) {
            return Err(Error::InvalidParameter { what: "xi", value: self.xi });
        }
        if self.rms_norm && self.rms_eps <= 0.0 {
            return Err(Error::InvalidParameter { what: "rms_eps", value: self.rms_eps });
        }
        Ok(())
    }
}

/// Query-key projection: factored per the MHA parameter count, or a full
/// d x d matrix for ablations.
#[derive(Debug, Clone)]
pub enum QkParams {
    Factored { wq: Matrix, wk: Matrix },
    Full { wqk: Matrix },
}

#[derive(Debug, Clone)]
pub struct HeadParams {
    pub qk: QkParams,
    pub wv: Matrix,
    pub wo: Matrix,
}

/// Trainable state of one SCA block.
#[derive(Debug, Clone)]
pub struct SCAParams {
    pub heads: Vec<HeadParams>,
    /// Transfer weights; one row when shared, H rows when per-head.
    /// Always L-1 columns.
    pub lambda: Matrix,
    /// Learnable threshold, present iff `xi_learnable`.
    pub xi: Option<Matrix>,
}

impl SCAParams {
    /// Fan-in uniform init in [-1/sqrt(d), 1/sqrt(d)); lambda starts at
    /// zero so transfer is a no-op until trained.
    pub fn init(config: &SCAConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let scale = 1.0 / (config.d as f64).sqrt();
        let dh = config.head_dim();
        let mut heads = Vec::with_capacity(config.heads);
        for _ in 0..config.heads {
            let qk = if config.full_qk {
                QkParams::Full { wqk: random_matrix(config.d, config.d, scale, rng)? }
            } else {
                QkParams::Factored {
                    wq: random_matrix(config.d, dh, scale, rng)?,
                    wk: random_matrix(config.d, dh, scale, rng)?,
                }
            };
            heads.push(HeadParams {
                qk,
                wv: random_matrix(config.d, dh, scale, rng)?,
                wo: random_matrix(config.d, dh, scale, rng)?,
            });
        }
        let lambda_rows = if config.per_head_lambda { config.heads } else { 1 };
        let lambda = Matrix::zeros(lambda_rows, config.tasks - 1);
        let xi = if config.xi_learnable {
            Some(Matrix::scalar(config.xi)?)
        } else {
            None
        };
        Ok(SCAParams { heads, lambda, xi })
    }

    pub fn validate(&self, config: &SCAConfig) -> Result<()> {
        if self.heads.len() != config.heads {
            return Err(Error::InvalidConfig(format!(
                "{} head parameter sets for {} heads",
                self.heads.len(),
                config.heads
            )));
        }
        let lambda_rows = if config.per_head_lambda { config.heads } else { 1 };
        if self.lambda.shape() != (lambda_rows, config.tasks - 1) {
            return Err(Error::InvalidConfig(format!(
                "lambda shape {:?}, expected {}x{}",
                self.lambda.shape(),
                lambda_rows,
                config.tasks - 1
            )));
        }
        if config.xi_learnable != self.xi.is_some() {
            return Err(Error::InvalidConfig(
                "xi parameter presence does not match xi_learnable".into(),
            ));
        }
        Ok(())
    }
}

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Result<Matrix> {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng::uniform_sym(rng, scale)).collect();
    Matrix::from_vec(rows, cols, data)
}

/// Graph leaves for one block's parameters, in registration order.
#[derive(Debug, Clone)]
pub struct ScaLeaves {
    pub heads: Vec<HeadLeaves>,
    pub lambda: NodeId,
    pub xi: Option<NodeId>,
}

#[derive(Debug, Clone)]
pub struct HeadLeaves {
    pub qk: QkLeaves,
    pub wv: NodeId,
    pub wo: NodeId,
}

#[derive(Debug, Clone, Copy)]
pub enum QkLeaves {
    Factored { wq: NodeId, wk: NodeId },
    Full { wqk: NodeId },
}

impl SCAParams {
    /// Registers every tensor as a graph leaf.
    pub fn register(&self, g: &mut ExprGraph) -> ScaLeaves {
        let heads = self
            .heads
            .iter()
            .map(|h| HeadLeaves {
                qk: match &h.qk {
                    QkParams::Factored { wq, wk } => QkLeaves::Factored {
                        wq: g.leaf(wq.clone()),
                        wk: g.leaf(wk.clone()),
                    },
                    QkParams::Full { wqk } => QkLeaves::Full { wqk: g.leaf(wqk.clone()) },
                },
                wv: g.leaf(h.wv.clone()),
                wo: g.leaf(h.wo.clone()),
            })
            .collect();
        ScaLeaves {
            heads,
            lambda: g.leaf(self.lambda.clone()),
            xi: self.xi.as_ref().map(|x| g.leaf(x.clone())),
        }
    }
}

/// Per-head record of coefficients before and after transfer plus the
/// head's output contribution.
#[derive(Debug, Clone)]
pub struct HeadTrace {
    pub coefficients_pre: Matrix,
    pub coefficients_post: Matrix,
    pub contribution: Matrix,
}

#[derive(Debug, Clone, Default)]
pub struct AttentionTrace {
    pub heads: Vec<HeadTrace>,
}

/// Raw coefficients for one head: sigma(X phi(X)), with optional logit
/// scaling and phi ReLU.
pub fn encode_coefficients(
    g: &mut ExprGraph,
    x: NodeId,
    leaves: &ScaLeaves,
    config: &SCAConfig,
    head: usize,
) -> Result<NodeId> {
    let n = config.n_tokens();
    let shape = g.value(x).shape();
    if shape != (n, config.d) {
        return Err(Error::ShapeMismatch {
            op: "encode_coefficients",
            left: shape,
            right: (n, config.d),
        });
    }
    let mut logits = match leaves.heads[head].qk {
        QkLeaves::Factored { wq, wk } if !config.phi_relu => {
            // (X Wq)(X Wk)^T avoids materializing the d x d product
            let q = g.matmul(x, wq)?;
            let k = g.matmul(x, wk)?;
            let kt = g.transpose(k);
            g.matmul(q, kt)?
        }
        QkLeaves::Factored { wq, wk } => {
            let kt = g.transpose(wk);
            let wqk = g.matmul(wq, kt)?;
            let xt = g.transpose(x);
            let mut phi = g.matmul(wqk, xt)?;
            phi = g.relu(phi);
            g.matmul(x, phi)?
        }
        QkLeaves::Full { wqk } => {
            let xt = g.transpose(x);
            let mut phi = g.matmul(wqk, xt)?;
            if config.phi_relu {
                phi = g.relu(phi);
            }
            g.matmul(x, phi)?
        }
    };
    if config.scale_logits {
        logits = g.scale(logits, 1.0 / (config.head_dim() as f64).sqrt())?;
    }
    match config.sigma {
        SigmaKind::Softmax => Ok(g.row_softmax(logits)),
        SigmaKind::Prox => {
            let xi = match (config.xi_learnable, leaves.xi) {
                (true, Some(node)) => XiSource::Node(node),
                (true, None) => {
                    return Err(Error::InvalidConfig(
                        "xi_learnable set but no xi leaf registered".into(),
                    ))
                }
                (false, _) => XiSource::Const(config.xi),
            };
            g.soft_threshold(logits, xi)
        }
    }
}

/// Adds the lambda-weighted context blocks into the target block; context
/// blocks pass through unchanged.
pub fn transfer_coefficients(
    g: &mut ExprGraph,
    alpha: NodeId,
    leaves: &ScaLeaves,
    config: &SCAConfig,
    head: usize,
) -> Result<NodeId> {
    let lam = g.value(leaves.lambda);
    if lam.cols() != config.tasks - 1 {
        return Err(Error::InvalidConfig(format!(
            "lambda has {} entries for {} context tasks",
            lam.cols(),
            config.tasks - 1
        )));
    }
    let lam_row = if config.per_head_lambda {
        g.slice_rows(leaves.lambda, head, 1)?
    } else {
        leaves.lambda
    };
    let nt = config.tokens_per_task;
    let contexts = config.tasks - 1;
    let mut blocks = Vec::with_capacity(config.tasks);
    let mut acc: Option<NodeId> = None;
    for i in 0..contexts {
        let block = g.slice_rows(alpha, i * nt, nt)?;
        blocks.push(block);
        let li = g.slice_cols(lam_row, i, 1)?;
        let term = g.scale_by_scalar(block, li)?;
        acc = Some(match acc {
            None => term,
            Some(prev) => g.add(prev, term)?,
        });
    }
    let target = g.slice_rows(alpha, contexts * nt, nt)?;
    let updated = g.add(target, acc.expect("tasks >= 2"))?;
    blocks.push(updated);
    g.concat_rows(&blocks)
}

/// alpha' psi(X) with psi(X) = X W_vo, optionally ReLU-ed.
pub fn decode_output(
    g: &mut ExprGraph,
    alpha_post: NodeId,
    x: NodeId,
    leaves: &ScaLeaves,
    config: &SCAConfig,
    head: usize,
) -> Result<NodeId> {
    let v = g.matmul(x, leaves.heads[head].wv)?;
    let ot = g.transpose(leaves.heads[head].wo);
    let mut psi = g.matmul(v, ot)?;
    if config.psi_relu {
        psi = g.relu(psi);
    }
    g.matmul(alpha_post, psi)
}

/// Full block: sum over heads of decode(transfer(encode)), with optional
/// RMS normalization of the summed output.
pub fn sca_forward(
    g: &mut ExprGraph,
    x: NodeId,
    leaves: &ScaLeaves,
    config: &SCAConfig,
) -> Result<(NodeId, AttentionTrace)> {
    config.validate()?;
    let mut trace = AttentionTrace::default();
    let mut z: Option<NodeId> = None;
    for head in 0..config.heads {
        let pre = encode_coefficients(g, x, leaves, config, head)?;
        let post = if config.transfer_enabled {
            transfer_coefficients(g, pre, leaves, config, head)?
        } else {
            pre
        };
        let out = decode_output(g, post, x, leaves, config, head)?;
        trace.heads.push(HeadTrace {
            coefficients_pre: g.value(pre).clone(),
            coefficients_post: g.value(post).clone(),
            contribution: g.value(out).clone(),
        });
        z = Some(match z {
            None => out,
            Some(prev) => g.add(prev, out)?,
        });
    }
    let mut z = z.expect("at least one head");
    if config.rms_norm {
        z = g.rms_norm(z, config.rms_eps)?;
    }
    Ok((z, trace))
}

/// Convenience wrapper running `sca_forward` on plain matrices.
pub fn sca_forward_value(
    x: &Matrix,
    params: &SCAParams,
    config: &SCAConfig,
) -> Result<(Matrix, AttentionTrace)> {
    params.validate(config)?;
    let mut g = ExprGraph::new();
    let xn = g.leaf(x.clone());
    let leaves = params.register(&mut g);
    let (z, trace) = sca_forward(&mut g, xn, &leaves, config)?;
    Ok((g.value(z).clone(), trace))
}

/// Multi-head attention computed with naive loops. Shares no code with the
/// graph path; used as the equivalence oracle for softmax mode.
pub fn reference_mha(x: &Matrix, params: &SCAParams, config: &SCAConfig) -> Result<Matrix> {
    let n = config.n_tokens();
    let d = config.d;
    if x.shape() != (n, d) {
        return Err(Error::ShapeMismatch {
            op: "reference_mha",
            left: x.shape(),
            right: (n, d),
        });
    }
    let xd = x.data();
    let mut out = vec![0.0f64; n * d];
    for head in &params.heads {
        // W_qk = Wq Wk^T (or the full matrix directly)
        let mut wqk = vec![0.0f64; d * d];
        match &head.qk {
            QkParams::Factored { wq, wk } => {
                let dh = wq.cols();
                let (wqd, wkd) = (wq.data(), wk.data());
                for i in 0..d {
                    for j in 0..d {
                        let mut acc = 0.0;
                        for k in 0..dh {
                            acc += wqd[i * dh + k] * wkd[j * dh + k];
                        }
                        wqk[i * d + j] = acc;
                    }
                }
            }
            QkParams::Full { wqk: m } => wqk.copy_from_slice(m.data()),
        }
        // logits = X W_qk X^T
        let mut xw = vec![0.0f64; n * d];
        for i in 0..n {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += xd[i * d + k] * wqk[k * d + j];
                }
                xw[i * d + j] = acc;
            }
        }
        let mut attn = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += xw[i * d + k] * xd[j * d + k];
                }
                attn[i * n + j] = acc;
            }
        }
        // row softmax with max subtraction
        for i in 0..n {
            let row = &mut attn[i * n..(i + 1) * n];
            let mut m = f64::NEG_INFINITY;
            for &v in row.iter() {
                if v > m {
                    m = v;
                }
            }
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        // W_vo = Wv Wo^T, then out += A X W_vo
        let dh = head.wv.cols();
        let (wvd, wod) = (head.wv.data(), head.wo.data());
        let mut wvo = vec![0.0f64; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..dh {
                    acc += wvd[i * dh + k] * wod[j * dh + k];
                }
                wvo[i * d + j] = acc;
            }
        }
        let mut xv = vec![0.0f64; n * d];
        for i in 0..n {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += xd[i * d + k] * wvo[k * d + j];
                }
                xv[i * d + j] = acc;
            }
        }
        for i in 0..n {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += attn[i * n + k] * xv[k * d + j];
                }
                out[i * d + j] += acc;
            }
        }
    }
    Matrix::from_vec(n, d, out)
}

/// Fraction of exactly-zero coefficients.
pub fn sparsity_ratio(alpha: &Matrix) -> f64 {
    alpha.zero_fraction()
}

/// Least-squares recovery of transfer weights: finds lambda minimizing
/// `|| sum_i lambda_i alpha_i - target ||` via the normal equations.
/// `contexts` holds one flattened coefficient vector per row. Returns the
/// weights and the Euclidean residual.
pub fn recover_transfer_weights(contexts: &Matrix, target: &[f64]) -> Result<(Vec<f64>, f64)> {
    let k = contexts.rows();
    let n = contexts.cols();
    if target.len() != n {
        return Err(Error::ShapeMismatch {
            op: "recover_transfer_weights",
            left: contexts.shape(),
            right: (target.len(), 1),
        });
    }
    // normal equations: (A A^T) lambda = A target, A = contexts (k x n)
    let mut gram = vec![0.0f64; k * k];
    for i in 0..k {
        for j in 0..k {
            let mut acc = 0.0;
            for c in 0..n {
                acc += contexts.get(i, c) * contexts.get(j, c);
            }
            gram[i * k + j] = acc;
        }
    }
    let mut rhs = vec![0.0f64; k];
    for i in 0..k {
        rhs[i] = (0..n).map(|c| contexts.get(i, c) * target[c]).sum();
    }
    let gram = Matrix::from_vec(k, k, gram)?;
    let lambda = solve_linear(&gram, &rhs)?;
    let mut residual_sq = 0.0;
    for c in 0..n {
        let mut rec = 0.0;
        for i in 0..k {
            rec += lambda[i] * contexts.get(i, c);
        }
        let d = rec - target[c];
        residual_sq += d * d;
    }
    Ok((lambda, residual_sq.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn random_x(n: usize, d: usize, rng: &mut Rng) -> Matrix {
        Matrix::from_vec(n, d, (0..n * d).map(|_| rng::uniform_sym(rng, 1.0)).collect()).unwrap()
    }

    #[test]
    fn softmax_mode_matches_reference_mha() {
        let mut rng = seeded(42);
        for &(h, d) in &[(1usize, 8usize), (2, 8), (4, 16)] {
            let config = SCAConfig::new(d, h, 3, 2);
            let params = SCAParams::init(&config, &mut rng).unwrap();
            let x = random_x(config.n_tokens(), d, &mut rng);
            let (z, _) = sca_forward_value(&x, &params, &config).unwrap();
            let oracle = reference_mha(&x, &params, &config).unwrap();
            assert!(z.max_abs_diff(&oracle).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn zero_rows_give_uniform_softmax_coefficients() {
        let mut rng = seeded(1);
        let config = SCAConfig::new(8, 2, 4, 2);
        let params = SCAParams::init(&config, &mut rng).unwrap();
        let n = config.n_tokens();
        let mut data = random_x(n, 8, &mut rng).data().to_vec();
        for r in n - 2..n {
            for c in 0..8 {
                data[r * 8 + c] = 0.0;
            }
        }
        let x = Matrix::from_vec(n, 8, data).unwrap();
        let (_, trace) = sca_forward_value(&x, &params, &config).unwrap();
        let uniform = 1.0 / n as f64;
        for head in &trace.heads {
            for r in n - 2..n {
                for c in 0..n {
                    assert_eq!(head.coefficients_pre.get(r, c), uniform);
                }
            }
        }
    }

    #[test]
    fn zero_rows_give_exactly_zero_prox_coefficients_and_output() {
        let mut rng = seeded(2);
        let config = SCAConfig::new(8, 1, 4, 2).with_sigma(SigmaKind::Prox).with_xi(0.1);
        let params = SCAParams::init(&config, &mut rng).unwrap();
        let n = config.n_tokens();
        let mut data = random_x(n, 8, &mut rng).data().to_vec();
        for r in n - 2..n {
            for c in 0..8 {
                data[r * 8 + c] = 0.0;
            }
        }
        let x = Matrix::from_vec(n, 8, data).unwrap();
        let (z, trace) = sca_forward_value(&x, &params, &config).unwrap();
        for head in &trace.heads {
            for r in n - 2..n {
                for c in 0..n {
                    assert_eq!(head.coefficients_pre.get(r, c), 0.0);
                }
            }
        }
        for r in n - 2..n {
            for c in 0..8 {
                assert_eq!(z.get(r, c), 0.0);
            }
        }
    }

    #[test]
    fn prox_with_zero_xi_returns_raw_logits() {
        let mut rng = seeded(3);
        let config = SCAConfig::new(8, 1, 2, 2).with_sigma(SigmaKind::Prox).with_xi(0.0);
        let params = SCAParams::init(&config, &mut rng).unwrap();
        let x = random_x(config.n_tokens(), 8, &mut rng);
        let (_, trace) = sca_forward_value(&x, &params, &config).unwrap();
        // recompute raw logits X Wq Wk^T X^T with matrix calls
        let QkParams::Factored { wq, wk } = &params.heads[0].qk else {
            panic!("factored expected")
        };
        let logits = x
            .matmul(wq)
            .unwrap()
            .matmul(&x.matmul(wk).unwrap().transpose())
            .unwrap();
        assert!(trace.heads[0].coefficients_pre.max_abs_diff(&logits).unwrap() <= 1e-15);
    }

    #[test]
    fn transfer_with_zero_lambda_is_identity() {
        let mut rng = seeded(4);
        let config = SCAConfig::new(8, 2, 4, 2)
            .with_sigma(SigmaKind::Prox)
            .with_xi(0.05)
            .with_transfer(true);
        let params = SCAParams::init(&config, &mut rng).unwrap();
        let x = random_x(config.n_tokens(), 8, &mut rng);
        let (_, trace) = sca_forward_value(&x, &params, &config).unwrap();
        for head in &trace.heads {
            assert_eq!(head.coefficients_pre, head.coefficients_post);
        }
    }

    #[test]
    fn transfer_moves_context_block_into_zero_target() {
        let mut rng = seeded(5);
        let config = SCAConfig::new(8, 1, 3, 2)
            .with_sigma(SigmaKind::Prox)
            .with_xi(0.02)
            .with_transfer(true);
        let mut params = SCAParams::init(&config, &mut rng).unwrap();
        // lambda = (1, 0): target block becomes context block 0
        params.lambda = Matrix::from_rows(&[&[1.0, 0.0]]).unwrap();
        let n = config.n_tokens();
        let mut data = random_x(n, 8, &mut rng).data().to_vec();
        for r in n - 2..n {
            for c in 0..8 {
                data[r * 8 + c] = 0.0;
            }
        }
        let x = Matrix::from_vec(n, 8, data).unwrap();
        let (_, trace) = sca_forward_value(&x, &params, &config).unwrap();
        let h = &trace.heads[0];
        for r in 0..2 {
            for c in 0..n {
                assert_eq!(h.coefficients_post.get(n - 2 + r, c), h.coefficients_pre.get(r, c));
            }
        }
        // context rows unchanged bit for bit
        for r in 0..n - 2 {
            for c in 0..n {
                assert_eq!(h.coefficients_post.get(r, c), h.coefficients_pre.get(r, c));
            }
        }
    }

    #[test]
    fn random_transfer_matches_direct_summation_oracle() {
        let mut rng = seeded(6);
        let config = SCAConfig::new(8, 1, 4, 2)
            .with_sigma(SigmaKind::Prox)
            .with_xi(0.01)
            .with_transfer(true);
        let mut params = SCAParams::init(&config, &mut rng).unwrap();
        params.lambda =
            Matrix::from_vec(1, 3, vec![0.25, -1.5, 0.75]).unwrap();
        let x = random_x(config.n_tokens(), 8, &mut rng);
        let (_, trace) = sca_forward_value(&x, &params, &config).unwrap();
        let h = &trace.heads[0];
        let n = config.n_tokens();
        let nt = config.tokens_per_task;
        // direct summation oracle over raw entries
        for r in 0..nt {
            for c in 0..n {
                let mut expect = h.coefficients_pre.get((config.tasks - 1) * nt + r, c);
                for i in 0..config.tasks - 1 {
                    expect += params.lambda.get(0, i) * h.coefficients_pre.get(i * nt + r, c);
                }
                let got = h.coefficients_post.get((config.tasks - 1) * nt + r, c);
                assert!((got - expect).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn decode_with_identity_coefficients_is_psi() {
        let mut rng = seeded(7);
        let config = SCAConfig::new(8, 1, 2, 2);
        let params = SCAParams::init(&config, &mut rng).unwrap();
        let x = random_x(config.n_tokens(), 8, &mut rng);
        let mut g = ExprGraph::new();
        let xn = g.leaf(x.clone());
        let leaves = params.register(&mut g);
        let alpha = g.leaf(Matrix::identity(config.n_tokens()));
        let out = decode_output(&mut g, alpha, xn, &leaves, &config, 0).unwrap();
        let psi = x
            .matmul(&params.heads[0].wv)
            .unwrap()
            .matmul(&params.heads[0].wo.transpose())
            .unwrap();
        assert!(g.value(out).max_abs_diff(&psi).unwrap() == 0.0);
    }

    #[test]
    fn zero_coefficients_decode_to_zero() {
        let mut rng = seeded(8);
        let config = SCAConfig::new(8, 1, 2, 2);
        let params = SCAParams::init(&config, &mut rng).unwrap();
        let x = random_x(config.n_tokens(), 8, &mut rng);
        let mut g = ExprGraph::new();
        let xn = g.leaf(x);
        let leaves = params.register(&mut g);
        let alpha = g.leaf(Matrix::zeros(config.n_tokens(), config.n_tokens()));
        let out = decode_output(&mut g, alpha, xn, &leaves, &config, 0).unwrap();
        assert_eq!(g.value(out).max_abs(), 0.0);
    }

    #[test]
    fn uniform_coefficients_decode_to_mean_times_wvo() {
        let mut rng = seeded(9);
        let config = SCAConfig::new(8, 1, 2, 2);
        let params = SCAParams::init(&config, &mut rng).unwrap();
        let n = config.n_tokens();
        let x = random_x(n, 8, &mut rng);
        let mut g = ExprGraph::new();
        let xn = g.leaf(x.clone());
        let leaves = params.register(&mut g);
        let alpha = g.leaf(Matrix::from_vec(n, n, vec![1.0 / n as f64; n * n]).unwrap());
        let out = decode_output(&mut g, alpha, xn, &leaves, &config, 0).unwrap();
        // column mean of X, pushed through W_vo
        let mut mean = vec![0.0f64; 8];
        for r in 0..n {
            for c in 0..8 {
                mean[c] += x.get(r, c) / n as f64;
            }
        }
        let mean = Matrix::from_vec(1, 8, mean).unwrap();
        let expect = mean
            .matmul(&params.heads[0].wv)
            .unwrap()
            .matmul(&params.heads[0].wo.transpose())
            .unwrap();
        for r in 0..n {
            for c in 0..8 {
                assert!((g.value(out).get(r, c) - expect.get(0, c)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn mha_permutation_equivariance() {
        let mut rng = seeded(10);
        let config = SCAConfig::new(8, 1, 3, 2);
        let params = SCAParams::init(&config, &mut rng).unwrap();
        let n = config.n_tokens();
        let x = random_x(n, 8, &mut rng);
        let out = reference_mha(&x, &params, &config).unwrap();
        // rotate rows by 2
        let perm: Vec<usize> = (0..n).map(|i| (i + 2) % n).collect();
        let mut pdata = vec![0.0; n * 8];
        for (dst, &src) in perm.iter().enumerate() {
            pdata[dst * 8..(dst + 1) * 8].copy_from_slice(x.row(src));
        }
        let px = Matrix::from_vec(n, 8, pdata).unwrap();
        let pout = reference_mha(&px, &params, &config).unwrap();
        for (dst, &src) in perm.iter().enumerate() {
            for c in 0..8 {
                assert!((pout.get(dst, c) - out.get(src, c)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_logit_mha_averages_columns() {
        let config = SCAConfig::new(4, 1, 2, 2);
        let n = config.n_tokens();
        // one-hot rows, W_qk = 0 -> uniform attention
        let x = Matrix::identity(n);
        let params = SCAParams {
            heads: vec![HeadParams {
                qk: QkParams::Factored { wq: Matrix::zeros(4, 4), wk: Matrix::zeros(4, 4) },
                wv: Matrix::identity(4),
                wo: Matrix::identity(4),
            }],
            lambda: Matrix::zeros(1, 1),
            xi: None,
        };
        let out = reference_mha(&x, &params, &config).unwrap();
        for r in 0..n {
            for c in 0..4 {
                assert!((out.get(r, c) - 0.25).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn sparsity_ratio_cases() {
        assert_eq!(sparsity_ratio(&Matrix::zeros(3, 3)), 1.0);
        let ones = Matrix::from_vec(2, 2, vec![1.0; 4]).unwrap();
        assert_eq!(sparsity_ratio(&ones), 0.0);
        let mut rng = seeded(11);
        let m = random_x(6, 6, &mut rng);
        let xi = 0.4;
        let t = m.soft_threshold(xi).unwrap();
        let k = m.data().iter().filter(|v| v.abs() <= xi).count();
        assert_eq!(sparsity_ratio(&t), k as f64 / 36.0);
    }

    #[test]
    fn recover_weights_reconstructs_spanned_target() {
        let mut rng = seeded(12);
        let k = 5;
        let n = 12;
        let contexts = random_x(k, n, &mut rng);
        let truth: Vec<f64> = (0..k).map(|_| rng::uniform_sym(&mut rng, 2.0)).collect();
        let mut target = vec![0.0f64; n];
        for (i, &w) in truth.iter().enumerate() {
            for c in 0..n {
                target[c] += w * contexts.get(i, c);
            }
        }
        let (lambda, residual) = recover_transfer_weights(&contexts, &target).unwrap();
        assert!(residual <= 1e-9, "residual {residual}");
        for (a, b) in lambda.iter().zip(&truth) {
            assert!((a - b).abs() <= 1e-8);
        }
    }
}
