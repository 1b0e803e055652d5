//! Sanity probe: hand-constructs block parameters that should reconstruct
//! the target panel exactly through prox + transfer, then measures test
//! MSE on both rules. Validates that the architecture admits an exact
//! solution before we chase it with training.
//!
//! Construction: in glyph coordinates, score distinct glyph pairs at
//! +(1 + xi) and same-glyph pairs at -(7 + xi). After soft-thresholding,
//! the lambda-sum over context rows cancels every glyph that appears as a
//! row glyph in that quadrant exactly once, leaving only the held-out
//! glyph. With lambda = 1/8 and W_vo = I the target rows come out exactly.

use sca_core::attention::{QkParams, SigmaKind};
use sca_core::data::{gen_panel_task, glyphs, RuleTemplate};
use sca_core::eval::{panel_target_mse, psnr_coverage, DEFAULT_PSNR_THRESHOLDS};
use sca_core::model::{init_model, ModelConfig};
use sca_core::numerics::{solve_linear, Matrix};

fn main() {
    let xi = 0.03;
    let mut config = ModelConfig::panel_toy();
    config.sca.sigma = SigmaKind::Prox;
    config.sca.transfer_enabled = true;
    config.sca.xi = xi;

    // G: 16x16 glyph matrix, rows are glyph bitmaps
    let g_rows: Vec<f64> = (0..16).flat_map(|i| glyphs::glyph(i).to_vec()).collect();
    let g = Matrix::from_vec(16, 16, g_rows).unwrap();

    // S: desired glyph-pair scores
    let a = 1.0 + xi;
    let b = 7.0 * (a - xi) + xi;
    let mut s = vec![a; 256];
    for i in 0..16 {
        s[i * 16 + i] = -b;
    }
    let s = Matrix::from_vec(16, 16, s).unwrap();

    // Scores are rowG * M * rowG^T, so M = G^-1 S G^-T, built with two
    // rounds of column solves against the Gaussian solver.
    // Step 1: G Y = S  =>  Y = G^-1 S
    let mut y = vec![0.0; 256];
    for c in 0..16 {
        let col: Vec<f64> = (0..16).map(|r| s.get(r, c)).collect();
        let sol = solve_linear(&g, &col).unwrap();
        for r in 0..16 {
            y[r * 16 + c] = sol[r];
        }
    }
    let y = Matrix::from_vec(16, 16, y).unwrap();
    // Step 2: M G^T = Y  =>  G M^T = Y^T, solve for M^T column by column
    let yt = y.transpose();
    let mut m = vec![0.0; 256];
    for c in 0..16 {
        let col: Vec<f64> = (0..16).map(|r| yt.get(r, c)).collect();
        let sol = solve_linear(&g, &col).unwrap();
        for r in 0..16 {
            // (M^T)[r][c] means M[c][r]
            m[c * 16 + r] = sol[r];
        }
    }
    let m = Matrix::from_vec(16, 16, m).unwrap();

    // check the score structure
    let check = g.matmul(&m).unwrap().matmul(&g.transpose()).unwrap();
    let mut worst = 0.0f64;
    for i in 0..16 {
        for j in 0..16 {
            let want = if i == j { -b } else { a };
            worst = worst.max((check.get(i, j) - want).abs());
        }
    }
    println!("glyph-score construction max error: {worst:.3e}");

    let mut params = init_model(&config, 1).unwrap();
    params.blocks[0].heads[0].qk = QkParams::Factored { wq: m.clone(), wk: Matrix::identity(16) };
    params.blocks[0].heads[0].wv = Matrix::identity(16);
    params.blocks[0].heads[0].wo = Matrix::identity(16);
    params.blocks[0].lambda = Matrix::from_vec(1, 8, vec![0.125; 8]).unwrap();

    for rule in [RuleTemplate::rule_a(), RuleTemplate::rule_b()] {
        let tasks: Vec<_> = (0..256u64).map(|s| gen_panel_task(&rule, 9000 + s)).collect();
        let mse = panel_target_mse(&params, &config, &tasks).unwrap();
        let cov = psnr_coverage(&params, &config, &tasks, &DEFAULT_PSNR_THRESHOLDS).unwrap();
        println!(
            "rule {:?}: constructed-solution target MSE = {mse:.3e}, coverage(20/30/40) = {:.3}/{:.3}/{:.3}",
            rule.id, cov[0], cov[1], cov[2]
        );
    }
}
