//! Metrics and inspection exports: PSNR and coverage for panel models,
//! tuple accuracy for symbolic models, sparsity sweeps, attention-map CSV
//! dumps and PGM panel export.

use std::path::{Path, PathBuf};

use crate::attention::{sparsity_ratio, AttentionTrace};
use crate::data::{
    quadrant_origin, tokenize_panels, tokenize_symbolic, PanelTask, SymbolicTask, TokenMode,
    FEATURES, FEATURE_VALUES, PANELS_PER_TASK, PANEL_PIXELS, PANEL_SIDE, QUADRANTS,
    SYMBOLIC_TOKENS,
};
use crate::error::{Error, Result};
use crate::model::{model_forward_value, ModelConfig, ModelParams, TaskKind};
use crate::numerics::Matrix;

/// PSNR cap for exact matches, in decibels.
pub const PSNR_CAP: f64 = 99.0;

/// Peak signal-to-noise ratio between two images with values in [0, 1].
/// Identical images (and any MSE small enough to exceed the cap) report
/// the 99 dB cap.
pub fn psnr(pred: &Matrix, target: &Matrix) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            op: "psnr",
            left: pred.shape(),
            right: target.shape(),
        });
    }
    let n = (pred.rows() * pred.cols()) as f64;
    let mse: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Predicted target panel of a panel-regression model: forward on the
/// masked input, reassemble the four target quadrant tokens, clamp to
/// [0, 1].
pub fn predict_target_panel(
    params: &ModelParams,
    config: &ModelConfig,
    task: &PanelTask,
) -> Result<[f64; PANEL_PIXELS]> {
    if config.task_kind != TaskKind::PanelRegression {
        return Err(Error::UnsupportedMode(
            "target-panel prediction requires a panel-regression model".into(),
        ));
    }
    let input = tokenize_panels(task, TokenMode::Pixels, true)?;
    let (out, _) = model_forward_value(&input, params, config)?;
    let mut panel = [0.0f64; PANEL_PIXELS];
    let first_target_row = (PANELS_PER_TASK - 1) * QUADRANTS;
    for q in 0..QUADRANTS {
        let token = out.row(first_target_row + q);
        let (r0, c0) = quadrant_origin(q);
        for r in 0..4 {
            for c in 0..4 {
                panel[(r0 + r) * PANEL_SIDE + (c0 + c)] = token[r * 4 + c].clamp(0.0, 1.0);
            }
        }
    }
    Ok(panel)
}

/// True target panel as floats in {0, 1}.
pub fn true_target_panel(task: &PanelTask) -> [f64; PANEL_PIXELS] {
    let mut out = [0.0f64; PANEL_PIXELS];
    for (dst, &src) in out.iter_mut().zip(&task.panels[PANELS_PER_TASK - 1]) {
        *dst = src as f64;
    }
    out
}

/// Mean squared error of the predicted target panel over a task set.
pub fn panel_target_mse(
    params: &ModelParams,
    config: &ModelConfig,
    tasks: &[PanelTask],
) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::EmptyInput("panel_target_mse"));
    }
    let mut acc = 0.0;
    for task in tasks {
        let pred = predict_target_panel(params, config, task)?;
        let truth = true_target_panel(task);
        let mse: f64 = pred
            .iter()
            .zip(&truth)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / PANEL_PIXELS as f64;
        acc += mse;
    }
    Ok(acc / tasks.len() as f64)
}

/// Fraction of PSNR values at or above each threshold.
pub fn coverage_from_psnrs(psnrs: &[f64], thresholds: &[f64]) -> Result<Vec<f64>> {
    if psnrs.is_empty() {
        return Err(Error::EmptyInput("coverage_from_psnrs"));
    }
    Ok(thresholds
        .iter()
        .map(|&t| psnrs.iter().filter(|&&p| p >= t).count() as f64 / psnrs.len() as f64)
        .collect())
}

pub const DEFAULT_PSNR_THRESHOLDS: [f64; 3] = [20.0, 30.0, 40.0];

/// Per-threshold fraction of test tasks whose predicted target panel
/// exceeds the PSNR threshold.
pub fn psnr_coverage(
    params: &ModelParams,
    config: &ModelConfig,
    tasks: &[PanelTask],
    thresholds: &[f64],
) -> Result<Vec<f64>> {
    if tasks.is_empty() {
        return Err(Error::EmptyInput("psnr_coverage"));
    }
    let mut psnrs = Vec::with_capacity(tasks.len());
    for task in tasks {
        let pred = predict_target_panel(params, config, task)?;
        let truth = true_target_panel(task);
        let p = Matrix::from_vec(PANEL_SIDE, PANEL_SIDE, pred.to_vec())?;
        let t = Matrix::from_vec(PANEL_SIDE, PANEL_SIDE, truth.to_vec())?;
        psnrs.push(psnr(&p, &t)?);
    }
    coverage_from_psnrs(&psnrs, thresholds)
}

/// Predicted target tuple of a symbolic model: per-feature argmax over the
/// target token's logits, ties toward the lowest class index.
pub fn predict_symbolic_target(
    params: &ModelParams,
    config: &ModelConfig,
    task: &SymbolicTask,
) -> Result<[u8; FEATURES]> {
    if config.task_kind != TaskKind::SymbolicClassification {
        return Err(Error::UnsupportedMode(
            "tuple prediction requires a symbolic-classification model".into(),
        ));
    }
    let input = tokenize_symbolic(task, true)?;
    let (out, _) = model_forward_value(&input, params, config)?;
    let logits = out.row(SYMBOLIC_TOKENS - 1);
    let mut pred = [0u8; FEATURES];
    for f in 0..FEATURES {
        let block = &logits[f * FEATURE_VALUES..(f + 1) * FEATURE_VALUES];
        let mut best = 0usize;
        for (i, &v) in block.iter().enumerate() {
            if v > block[best] {
                best = i;
            }
        }
        pred[f] = best as u8;
    }
    Ok(pred)
}

/// Fraction of tasks whose full 4-feature target tuple is predicted
/// exactly.
pub fn accuracy(
    params: &ModelParams,
    config: &ModelConfig,
    tasks: &[SymbolicTask],
) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::EmptyInput("accuracy"));
    }
    let mut correct = 0usize;
    for task in tasks {
        if predict_symbolic_target(params, config, task)? == task.target {
            correct += 1;
        }
    }
    Ok(correct as f64 / tasks.len() as f64)
}

pub const DEFAULT_XI_GRID: [f64; 5] = [0.003, 0.01, 0.03, 0.1, 0.3];

/// Masked token matrix for any task kind.
fn masked_input(config: &ModelConfig, panel: Option<&PanelTask>, sym: Option<&SymbolicTask>) -> Result<Matrix> {
    match config.task_kind {
        TaskKind::PanelRegression => tokenize_panels(
            panel.expect("panel task for panel model"),
            TokenMode::Pixels,
            true,
        ),
        TaskKind::SymbolicClassification => {
            tokenize_symbolic(sym.expect("symbolic task for symbolic model"), true)
        }
    }
}

/// Mean attention sparsity over all layers, heads and tasks at each
/// threshold of the grid, evaluated without retraining. Requires a prox
/// model.
pub fn sparsity_sweep(
    params: &ModelParams,
    config: &ModelConfig,
    panel_tasks: &[PanelTask],
    symbolic_tasks: &[SymbolicTask],
    xi_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if config.sca.sigma != crate::attention::SigmaKind::Prox {
        return Err(Error::UnsupportedMode(
            "sparsity sweep requires a prox model".into(),
        ));
    }
    let n_tasks = match config.task_kind {
        TaskKind::PanelRegression => panel_tasks.len(),
        TaskKind::SymbolicClassification => symbolic_tasks.len(),
    };
    if n_tasks == 0 {
        return Err(Error::EmptyInput("sparsity_sweep"));
    }
    // Fixed-threshold forward: strip any learnable xi and pin the grid value.
    let mut sweep_params = params.clone();
    for block in &mut sweep_params.blocks {
        block.xi = None;
    }
    let mut out = Vec::with_capacity(xi_grid.len());
    for &xi in xi_grid {
        let mut cfg = config.clone();
        cfg.sca.xi = xi;
        cfg.sca.xi_learnable = false;
        let mut acc = 0.0;
        let mut count = 0usize;
        for i in 0..n_tasks {
            let input = masked_input(
                &cfg,
                panel_tasks.get(i),
                symbolic_tasks.get(i),
            )?;
            let (_, traces) = model_forward_value(&input, &sweep_params, &cfg)?;
            for trace in &traces {
                for head in &trace.heads {
                    acc += sparsity_ratio(&head.coefficients_post);
                    count += 1;
                }
            }
        }
        out.push((xi, acc / count as f64));
    }
    Ok(out)
}

/// Writes one CSV per layer/head with the pre- and post-transfer
/// coefficients at full float precision. Returns the created paths.
pub fn dump_attention(traces: &[AttentionTrace], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.into(), source })?;
    let mut paths = Vec::new();
    for (li, trace) in traces.iter().enumerate() {
        for (hi, head) in trace.heads.iter().enumerate() {
            for (tag, m) in [
                ("pre", &head.coefficients_pre),
                ("post", &head.coefficients_post),
            ] {
                let path = dir.join(format!("layer{li}_head{hi}_{tag}.csv"));
                write_csv(&path, m)?;
                paths.push(path);
            }
        }
    }
    Ok(paths)
}

fn write_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut text = String::new();
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            if c > 0 {
                text.push(',');
            }
            // shortest representation that round-trips the f64 exactly
            text.push_str(&format!("{}", m.get(r, c)));
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.into(), source })
}

/// Parses a CSV written by `dump_attention`.
pub fn read_csv(path: &Path) -> Result<Matrix> {
    let text =
        std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|v| v.parse::<f64>()).collect();
        rows.push(row.map_err(|_| Error::MalformedFile {
            path: path.into(),
            message: "unparseable CSV cell".into(),
        })?);
    }
    if rows.is_empty() {
        return Err(Error::MalformedFile { path: path.into(), message: "empty CSV".into() });
    }
    let cols = rows[0].len();
    let mut data = Vec::with_capacity(rows.len() * cols);
    let n_rows = rows.len();
    for row in rows {
        if row.len() != cols {
            return Err(Error::MalformedFile {
                path: path.into(),
                message: "ragged CSV rows".into(),
            });
        }
        data.extend(row);
    }
    Matrix::from_vec(n_rows, cols, data)
}

/// Writes a binary PGM (P5, maxval 255); values are clamped to [0, 1] and
/// scaled to bytes.
pub fn export_pgm(pixels: &[f64], width: usize, height: usize, path: &Path) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::InvalidConfig(format!(
            "{} pixels for {width}x{height} image",
            pixels.len()
        )));
    }
    let mut buf = format!("P5\n{width} {height}\n255\n").into_bytes();
    buf.extend(pixels.iter().map(|&v| (255.0 * v.clamp(0.0, 1.0)).round() as u8));
    std::fs::write(path, buf).map_err(|source| Error::Io { path: path.into(), source })
}

/// Reads back a P5 PGM written by `export_pgm`, returning values in [0, 1].
pub fn read_pgm(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let bytes =
        std::fs::read(path).map_err(|source| Error::Io { path: path.into(), source })?;
    let header_fields: Vec<&[u8]> = bytes.splitn(5, |&b| b == b'\n').collect();
    if header_fields.len() < 4 || header_fields[0] != b"P5" {
        return Err(Error::CorruptHeader { path: path.into() });
    }
    let dims = std::str::from_utf8(header_fields[1]).ok().and_then(|s| {
        let mut it = s.split_whitespace();
        let w: usize = it.next()?.parse().ok()?;
        let h: usize = it.next()?.parse().ok()?;
        Some((w, h))
    });
    let Some((w, h)) = dims else {
        return Err(Error::CorruptHeader { path: path.into() });
    };
    let header_len = header_fields[0].len() + 1 + header_fields[1].len() + 1 + header_fields[2].len() + 1;
    let data = &bytes[header_len..];
    if data.len() != w * h {
        return Err(Error::Truncated { path: path.into() });
    }
    Ok((data.iter().map(|&b| b as f64 / 255.0).collect(), w, h))
}

/// 3x3 grid of 8x8 panels as one 24x24 image.
pub fn montage_panels(panels: &[[f64; PANEL_PIXELS]; PANELS_PER_TASK]) -> (Vec<f64>, usize, usize) {
    let side = 3 * PANEL_SIDE;
    let mut out = vec![0.0f64; side * side];
    for (i, panel) in panels.iter().enumerate() {
        let (gr, gc) = (i / 3, i % 3);
        for r in 0..PANEL_SIDE {
            for c in 0..PANEL_SIDE {
                out[(gr * PANEL_SIDE + r) * side + gc * PANEL_SIDE + c] =
                    panel[r * PANEL_SIDE + c];
            }
        }
    }
    (out, side, side)
}
