//! Property tests for the SCA block: oracle equivalence, the closed-form
//! zero-input laws, context preservation, block-permutation equivariance,
//! span reconstruction, and the soft-threshold/softmax invariants.

use proptest::prelude::*;

use sca_core::attention::{
    recover_transfer_weights, reference_mha, sca_forward_value, SCAConfig, SCAParams, SigmaKind,
};
use sca_core::numerics::Matrix;
use sca_core::rng;

fn random_matrix(rows: usize, cols: usize, rng: &mut rng::Rng, scale: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng::uniform_sym(rng, scale)).collect())
        .unwrap()
}

fn with_zero_target(x: &Matrix, target_rows: usize) -> Matrix {
    let n = x.rows();
    let mut data = x.data().to_vec();
    for r in n - target_rows..n {
        for c in 0..x.cols() {
            data[r * x.cols() + c] = 0.0;
        }
    }
    Matrix::from_vec(n, x.cols(), data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn softmax_rows_sum_to_one_and_stay_positive(
        rows in 1usize..6,
        cols in 1usize..8,
        seed in 0u64..5000,
    ) {
        let mut r = rng::seeded(seed);
        let m = random_matrix(rows, cols, &mut r, 30.0);
        let s = m.row_softmax();
        for row in 0..rows {
            let sum: f64 = s.row(row).iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(s.row(row).iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn soft_threshold_shrinks_preserves_sign_and_zeroes_band(
        rows in 1usize..5,
        cols in 1usize..6,
        xi in 0.0f64..2.0,
        seed in 0u64..5000,
    ) {
        let mut r = rng::seeded(seed);
        let m = random_matrix(rows, cols, &mut r, 3.0);
        let t = m.soft_threshold(xi).unwrap();
        for (a, b) in m.data().iter().zip(t.data()) {
            prop_assert!(b.abs() <= a.abs());
            if *b != 0.0 {
                prop_assert_eq!(a.signum(), b.signum());
            }
            if a.abs() <= xi {
                prop_assert_eq!(*b, 0.0);
            }
        }
    }

    #[test]
    fn sparsity_is_monotone_in_threshold(
        seed in 0u64..5000,
    ) {
        let mut r = rng::seeded(seed);
        let m = random_matrix(6, 6, &mut r, 1.0);
        let mut last = -1.0;
        for xi in [0.0, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0] {
            let frac = m.soft_threshold(xi).unwrap().zero_fraction();
            prop_assert!(frac >= last);
            last = frac;
        }
    }

    #[test]
    fn oracle_equivalence_on_random_instances(
        seed in 0u64..5000,
        heads_pick in 0usize..3,
        d_pick in 0usize..2,
        tasks in 2usize..4,
    ) {
        let heads = [1, 2, 4][heads_pick];
        let d = [8, 16][d_pick];
        let mut r = rng::seeded(seed);
        let config = SCAConfig::new(d, heads, tasks, 2);
        let params = SCAParams::init(&config, &mut r).unwrap();
        let x = random_matrix(config.n_tokens(), d, &mut r, 1.0);
        let (z, _) = sca_forward_value(&x, &params, &config).unwrap();
        let oracle = reference_mha(&x, &params, &config).unwrap();
        prop_assert!(z.max_abs_diff(&oracle).unwrap() <= 1e-12);
    }

    #[test]
    fn context_rows_survive_transfer_bit_for_bit(
        seed in 0u64..5000,
        sigma_prox in proptest::bool::ANY,
    ) {
        let mut r = rng::seeded(seed);
        let mut config = SCAConfig::new(8, 2, 4, 2).with_transfer(true);
        config.sigma = if sigma_prox { SigmaKind::Prox } else { SigmaKind::Softmax };
        config.xi = 0.02;
        let mut params = SCAParams::init(&config, &mut r).unwrap();
        params.lambda = random_matrix(1, 3, &mut r, 1.0);
        let x = random_matrix(config.n_tokens(), 8, &mut r, 1.0);
        let (_, trace) = sca_forward_value(&x, &params, &config).unwrap();
        let ctx_rows = config.n_tokens() - config.tokens_per_task;
        for head in &trace.heads {
            for row in 0..ctx_rows {
                prop_assert_eq!(
                    head.coefficients_pre.row(row),
                    head.coefficients_post.row(row)
                );
            }
        }
    }

    #[test]
    fn zero_target_laws_hold(
        seed in 0u64..5000,
    ) {
        let mut r = rng::seeded(seed);
        let d = 8;
        let mut config = SCAConfig::new(d, 2, 3, 2);
        let n = config.n_tokens();
        let tpt = config.tokens_per_task;
        let params_seed = rng::uniform_usize(&mut r, 1 << 30) as u64;

        let base = random_matrix(n, d, &mut r, 1.0);
        let x = with_zero_target(&base, tpt);

        // prox, no transfer: target output rows exactly zero
        config.sigma = SigmaKind::Prox;
        config.xi = 0.05;
        let mut pr = rng::seeded(params_seed);
        let params = SCAParams::init(&config, &mut pr).unwrap();
        let (z, _) = sca_forward_value(&x, &params, &config).unwrap();
        for row in n - tpt..n {
            prop_assert!(z.row(row).iter().all(|&v| v == 0.0));
        }

        // softmax: target coefficient rows exactly 1/N, output rows equal
        // the column mean pushed through the summed head maps
        config.sigma = SigmaKind::Softmax;
        let mut pr = rng::seeded(params_seed);
        let params = SCAParams::init(&config, &mut pr).unwrap();
        let (z, trace) = sca_forward_value(&x, &params, &config).unwrap();
        let uniform = 1.0 / n as f64;
        for head in &trace.heads {
            for row in n - tpt..n {
                for c in 0..n {
                    prop_assert_eq!(head.coefficients_pre.get(row, c), uniform);
                }
            }
        }
        let mut mean = vec![0.0f64; d];
        for row in 0..n {
            for c in 0..d {
                mean[c] += x.get(row, c) / n as f64;
            }
        }
        let mean = Matrix::from_vec(1, d, mean).unwrap();
        let mut expect = Matrix::zeros(1, d);
        for head in &params.heads {
            let wvo = head.wv.matmul(&head.wo.transpose()).unwrap();
            expect = expect.add(&mean.matmul(&wvo).unwrap()).unwrap();
        }
        for row in n - tpt..n {
            for c in 0..d {
                prop_assert!((z.get(row, c) - expect.get(0, c)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn transfer_target_equals_direct_lambda_sum(
        seed in 0u64..5000,
    ) {
        let mut r = rng::seeded(seed);
        let d = 8;
        let mut config = SCAConfig::new(d, 2, 3, 2).with_transfer(true);
        config.sigma = SigmaKind::Prox;
        config.xi = 0.03;
        let mut params = SCAParams::init(&config, &mut r).unwrap();
        params.lambda = random_matrix(1, 2, &mut r, 1.0);
        let n = config.n_tokens();
        let tpt = config.tokens_per_task;
        let x = with_zero_target(&random_matrix(n, d, &mut r, 1.0), tpt);
        let (z, trace) = sca_forward_value(&x, &params, &config).unwrap();

        // independent route: sum over heads of (sum_i lambda_i alpha_i) psi
        let mut expect = Matrix::zeros(tpt, d);
        for (h, head) in trace.heads.iter().enumerate() {
            let _ = h;
            let psi = x
                .matmul(&params.heads[h].wv).unwrap()
                .matmul(&params.heads[h].wo.transpose()).unwrap();
            let mut combo = Matrix::zeros(tpt, n);
            for i in 0..config.tasks - 1 {
                let block = head.coefficients_pre.slice_rows(i * tpt, tpt).unwrap();
                combo = combo.add(&block.scale(params.lambda.get(0, i)).unwrap()).unwrap();
            }
            expect = expect.add(&combo.matmul(&psi).unwrap()).unwrap();
        }
        for row in 0..tpt {
            for c in 0..d {
                prop_assert!((z.get(n - tpt + row, c) - expect.get(row, c)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn context_block_permutation_equivariance(
        seed in 0u64..5000,
        sigma_prox in proptest::bool::ANY,
    ) {
        let mut r = rng::seeded(seed);
        let d = 8;
        let mut config = SCAConfig::new(d, 2, 4, 2).with_transfer(true);
        config.sigma = if sigma_prox { SigmaKind::Prox } else { SigmaKind::Softmax };
        config.xi = 0.02;
        let mut params = SCAParams::init(&config, &mut r).unwrap();
        params.lambda = random_matrix(1, 3, &mut r, 1.0);
        let n = config.n_tokens();
        let tpt = config.tokens_per_task;
        let contexts = config.tasks - 1;
        let x = with_zero_target(&random_matrix(n, d, &mut r, 1.0), tpt);

        // rotate the context blocks by one
        let perm: Vec<usize> = (0..contexts).map(|i| (i + 1) % contexts).collect();
        let mut permuted = Vec::with_capacity(n * d);
        for i in 0..contexts {
            let src = perm[i];
            permuted.extend_from_slice(
                &x.data()[src * tpt * d..(src + 1) * tpt * d],
            );
        }
        permuted.extend_from_slice(&x.data()[contexts * tpt * d..]);
        let px = Matrix::from_vec(n, d, permuted).unwrap();
        let mut pparams = params.clone();
        let plambda: Vec<f64> = (0..contexts).map(|i| params.lambda.get(0, perm[i])).collect();
        pparams.lambda = Matrix::from_vec(1, contexts, plambda).unwrap();

        let (z, _) = sca_forward_value(&x, &params, &config).unwrap();
        let (pz, _) = sca_forward_value(&px, &pparams, &config).unwrap();
        for row in n - tpt..n {
            for c in 0..d {
                prop_assert!((z.get(row, c) - pz.get(row, c)).abs() <= 1e-12);
            }
        }
    }
}

/// Span reconstruction: contexts whose joint support covers the whole
/// dictionary, target inside their span; least-squares lambda recovers it.
#[test]
fn span_reconstruction_recovers_lambda() {
    for trial in 0..50 {
        let mut r = rng::substream(0xA11CE, trial);
        let n = 12;
        let contexts_count = 8;
        // sparse supports that jointly cover all n dictionary rows
        let mut data = vec![0.0f64; contexts_count * n];
        for col in 0..n {
            // round robin guarantees "used at least once"
            let owner = col % contexts_count;
            data[owner * n + col] = 0.5 + rng::uniform(&mut r);
        }
        for i in 0..contexts_count {
            for col in 0..n {
                if data[i * n + col] == 0.0 && rng::uniform(&mut r) < 0.3 {
                    data[i * n + col] = rng::uniform_sym(&mut r, 1.0);
                }
            }
        }
        let contexts = Matrix::from_vec(contexts_count, n, data).unwrap();
        let truth: Vec<f64> = (0..contexts_count).map(|_| rng::uniform_sym(&mut r, 2.0)).collect();
        let mut target = vec![0.0f64; n];
        for (i, &w) in truth.iter().enumerate() {
            for c in 0..n {
                target[c] += w * contexts.get(i, c);
            }
        }
        let (_, residual) = recover_transfer_weights(&contexts, &target).unwrap();
        assert!(residual <= 1e-9, "trial {trial}: residual {residual}");
    }
}

/// The supports must cover every dictionary row for exact recovery; an
/// uncovered row with a nonzero target leaves residual.
#[test]
fn span_reconstruction_fails_without_coverage() {
    let contexts = Matrix::from_rows(&[
        &[1.0, 0.0, 0.0, 0.0],
        &[0.0, 1.0, 0.0, 0.0],
    ])
    .unwrap();
    let target = [0.5, -0.25, 1.0, 0.0];
    let (_, residual) = recover_transfer_weights(&contexts, &target).unwrap();
    assert!(residual > 0.9);
}
