use super::*;
use crate::sim::{SimExecutor, StragglerModel};

fn fd_gradient(p: &dyn Problem, w: &[f64], h: f64) -> Vec<f64> {
    (0..w.len())
        .map(|j| {
            let mut wp = w.to_vec();
            let mut wm = w.to_vec();
            wp[j] += h;
            wm[j] -= h;
            (p.value(&wp) - p.value(&wm)) / (2.0 * h)
        })
        .collect()
}

fn fd_hessian(p: &dyn Problem, w: &[f64], h: f64) -> DenseMatrix {
    let n = w.len();
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let mut wp = w.to_vec();
        let mut wm = w.to_vec();
        wp[i] += h;
        wm[i] -= h;
        let gp = p.gradient_serial(&wp);
        let gm = p.gradient_serial(&wm);
        for j in 0..n {
            out.set(i, j, (gp[j] - gm[j]) / (2.0 * h));
        }
    }
    out.symmetrize();
    out
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = linalg::norm(&linalg::sub(a, b));
    diff / linalg::norm(b).max(1e-12)
}

fn toy_logistic(n: usize, d: usize, lambda: f64, s: u64) -> LogisticProblem {
    let (data, _, _) = gen_synthetic_logistic(n, d, s);
    LogisticProblem::new(data, lambda, 4).unwrap()
}

#[test]
fn logistic_value_at_zero_is_log2() {
    let p = toy_logistic(20, 3, 0.0, 1);
    assert!((p.value(&[0.0, 0.0, 0.0]) - 2.0f64.ln()).abs() < 1e-12);
}

#[test]
fn logistic_value_zero_features_is_log2_plus_ridge() {
    let data = Dataset {
        x: DenseMatrix::zeros(3, 10),
        labels: Labels::Binary(vec![1.0; 10]),
    };
    let p = LogisticProblem::new(data, 0.5, 2).unwrap();
    let w = vec![1.0, 2.0, -1.0];
    let expect = 2.0f64.ln() + 0.25 * (1.0 + 4.0 + 1.0);
    assert!((p.value(&w) - expect).abs() < 1e-12);
}

#[test]
fn logistic_sharded_value_equals_unsharded() {
    let p = toy_logistic(37, 5, 1e-3, 2);
    let w: Vec<f64> = (0..5).map(|i| 0.3 * (i as f64 - 2.0)).collect();
    let full = p.value(&w);
    let shards = [0..13usize, 13..25, 25..37];
    let sharded: f64 = shards
        .iter()
        .map(|r| p.value_shard(r.clone(), &w))
        .sum::<f64>()
        + p.reg_value(&w);
    assert!((full - sharded).abs() <= 1e-10 * full.abs());
}

#[test]
fn logistic_gradient_at_zero_closed_form() {
    let p = toy_logistic(25, 4, 0.0, 3);
    let g = p.gradient_serial(&vec![0.0; 4]);
    // beta_i = -y_i / 2, so g = -(1/2n) X y
    let y = p.labels().to_vec();
    let n = p.num_samples() as f64;
    for r in 0..4 {
        let expect: f64 = (0..25).map(|i| -y[i] * p.data.x.get(r, i)).sum::<f64>() / (2.0 * n);
        assert!((g[r] - expect).abs() < 1e-12);
    }
}

#[test]
fn logistic_huge_lambda_dominates() {
    let p = toy_logistic(10, 4, 1e6, 4);
    let w = vec![0.5, -0.25, 1.0, 0.125];
    let g = p.gradient_serial(&w);
    for (gi, wi) in g.iter().zip(&w) {
        assert!((gi / (1e6 * wi) - 1.0).abs() < 1e-5);
    }
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let p = toy_logistic(30, 6, 1e-2, 5);
    let mut rng = seed::rng(6);
    let w: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let g = p.gradient_serial(&w);
    let fd = fd_gradient(&p, &w, 1e-6);
    assert!(rel_err(&g, &fd) <= 1e-5);
}

#[test]
fn logistic_coded_gradient_equals_serial() {
    let p = toy_logistic(40, 7, 1e-3, 7);
    let mut rng = seed::rng(8);
    let w: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let serial = p.gradient_serial(&w);
    // with stragglers the decode may reorder sums, 1e-10 relative
    let mut exec = SimExecutor::new(StragglerModel::new(0.1, 25.0, 0.0, 9));
    let (coded, clock) = p.gradient(&w, &mut exec).unwrap();
    assert!(rel_err(&coded, &serial) <= 1e-10);
    assert!(clock > 0.0);
}

#[test]
fn logistic_hessian_factor_at_zero_is_half_xt() {
    let p = toy_logistic(12, 3, 0.0, 10);
    let hf = p.hessian_factor(&[0.0; 3]);
    for i in 0..12 {
        for j in 0..3 {
            assert!((hf.factor.get(i, j) - 0.5 * p.data.x.get(j, i)).abs() < 1e-14);
        }
    }
}

#[test]
fn logistic_hessian_matches_finite_differences() {
    let p = toy_logistic(25, 5, 1e-2, 11);
    let mut rng = seed::rng(12);
    let w: Vec<f64> = (0..5).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let h = p.hessian_factor(&w).assemble_exact();
    let fd = fd_hessian(&p, &w, 1e-5);
    let mut diff = h.clone();
    diff.add_scaled(&fd, -1.0);
    assert!(diff.frobenius_norm() <= 1e-4 * fd.frobenius_norm().max(1.0));
}

#[test]
fn logistic_zero_features_hessian_is_ridge() {
    let data = Dataset {
        x: DenseMatrix::zeros(3, 5),
        labels: Labels::Binary(vec![-1.0; 5]),
    };
    let p = LogisticProblem::new(data, 0.7, 2).unwrap();
    let h = p.hessian_factor(&[0.1, 0.2, 0.3]).assemble_exact();
    let mut expect = DenseMatrix::identity(3);
    expect.scale(0.7);
    let mut diff = h;
    diff.add_scaled(&expect, -1.0);
    assert!(diff.frobenius_norm() < 1e-14);
}

#[test]
fn logistic_curvature_bound() {
    // gamma in (0, 1/4] bounds lambda_max(H) by ||X||_F^2 / (4n) + lambda
    let p = toy_logistic(30, 5, 1e-3, 13);
    let mut rng = seed::rng(14);
    let w: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let h = p.hessian_factor(&w).assemble_exact();
    let est = linalg::estimate_spectrum(&h).unwrap();
    let bound = p.data.x.frobenius_norm().powi(2) / (4.0 * 30.0) + 1e-3;
    assert!(est.lambda_max <= bound * (1.0 + 1e-9));
}

fn toy_softmax(n: usize, d: usize, k: usize, s: u64) -> SoftmaxProblem {
    let (data, _) = gen_synthetic_softmax(n, d, k, s);
    SoftmaxProblem::new(data, 4).unwrap()
}

#[test]
fn softmax_gradient_at_zero_is_uniform_minus_onehot() {
    let p = toy_softmax(15, 3, 3, 20);
    let g = p.gradient_serial(&vec![0.0; 9]);
    let y = p.onehot().clone();
    for c in 0..3 {
        for r in 0..3 {
            let expect: f64 = (0..15)
                .map(|i| (1.0 / 3.0 - y.get(c, i)) * p.data.x.get(r, i))
                .sum();
            assert!((g[c * 3 + r] - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn softmax_gradient_matches_finite_differences() {
    let p = toy_softmax(20, 4, 3, 21);
    let mut rng = seed::rng(22);
    let w: Vec<f64> = (0..12).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let g = p.gradient_serial(&w);
    let fd = fd_gradient(&p, &w, 1e-6);
    assert!(rel_err(&g, &fd) <= 1e-5);
}

#[test]
fn softmax_gradient_orthogonal_to_class_shift() {
    // adding the same vector to every w_k leaves probabilities unchanged
    let p = toy_softmax(18, 4, 3, 23);
    let mut rng = seed::rng(24);
    let w: Vec<f64> = (0..12).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let g = p.gradient_serial(&w);
    let u: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut shift = vec![0.0; 12];
    for c in 0..3 {
        shift[c * 4..(c + 1) * 4].copy_from_slice(&u);
    }
    assert!(linalg::dot(&g, &shift).abs() <= 1e-10 * linalg::norm(&g) * linalg::norm(&shift));
}

#[test]
fn softmax_coded_gradient_equals_serial() {
    let p = toy_softmax(24, 5, 3, 25);
    let mut rng = seed::rng(26);
    let w: Vec<f64> = (0..15).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let serial = p.gradient_serial(&w);
    let mut exec = SimExecutor::new(StragglerModel::new(0.1, 25.0, 0.0, 27));
    let (coded, _) = p.gradient(&w, &mut exec).unwrap();
    assert!(rel_err(&coded, &serial) <= 1e-10);
}

#[test]
fn softmax_binary_curvature_is_rank_one() {
    let p = toy_softmax(6, 2, 2, 28);
    let mut rng = seed::rng(29);
    let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.5..0.5)).collect();
    // per-sample K=2 curvature s(1-s) [[1,-1],[-1,1]] has rank 1; its root
    // therefore has one nonzero eigenvalue and the factor rows for one
    // sample span a one-dimensional class space
    let i = 0;
    let probs = SoftmaxProblem::softmax_probs(&p.logits(&w, i));
    let lam = DenseMatrix::from_fn(2, 2, |a, b| {
        (if a == b { probs[a] } else { 0.0 }) - probs[a] * probs[b]
    });
    let (eigs, _) = linalg::sym_eig(&lam).unwrap();
    let mut sorted = eigs.clone();
    sorted.sort_by(f64::total_cmp);
    assert!(sorted[0].abs() < 1e-12);
    assert!((sorted[1] - 2.0 * probs[0] * (1.0 - probs[0])).abs() < 1e-12);
}

#[test]
fn softmax_factor_gram_matches_block_assembly() {
    let p = toy_softmax(5, 2, 3, 30);
    let mut rng = seed::rng(31);
    let w: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let gram = p.hessian_factor(&w).factor.gram();
    // brute-force block Hessian: H_{ij} = sum_n Z_ij(n) x_n x_n^T
    let (d, k, n) = (2, 3, 5);
    let mut h = DenseMatrix::zeros(d * k, d * k);
    for s in 0..n {
        let probs = SoftmaxProblem::softmax_probs(&p.logits(&w, s));
        let x = p.data.sample(s);
        for i in 0..k {
            for j in 0..k {
                let z = probs[i] * ((if i == j { 1.0 } else { 0.0 }) - probs[j]);
                for a in 0..d {
                    for b in 0..d {
                        let cur = h.get(i * d + a, j * d + b);
                        h.set(i * d + a, j * d + b, cur + z * x[a] * x[b]);
                    }
                }
            }
        }
    }
    let mut diff = gram.clone();
    diff.add_scaled(&h, -1.0);
    assert!(diff.frobenius_norm() <= 1e-10 * h.frobenius_norm().max(1.0));
}

#[test]
fn softmax_hessian_matches_finite_differences() {
    let p = toy_softmax(10, 3, 3, 32);
    let mut rng = seed::rng(33);
    let w: Vec<f64> = (0..9).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let h = p.hessian_factor(&w).assemble_exact();
    let fd = fd_hessian(&p, &w, 1e-5);
    let mut diff = h;
    diff.add_scaled(&fd, -1.0);
    assert!(diff.frobenius_norm() <= 1e-4 * fd.frobenius_norm().max(1.0));
}

#[test]
fn softmax_saturated_sample_contributes_nothing() {
    let probs = vec![1.0 - 2e-15, 1e-15, 1e-15];
    let lam = DenseMatrix::from_fn(3, 3, |a, b| {
        (if a == b { probs[a] } else { 0.0 }) - probs[a] * probs[b]
    });
    assert!(lam.frobenius_norm() < 1e-13);
}

fn toy_ridge(n: usize, d: usize, lambda: f64, s: u64) -> RidgeProblem {
    let mut rng = seed::rng(s);
    let x = DenseMatrix::from_fn(d, n, |_, _| rng.gen_range(-1.0..1.0));
    let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    RidgeProblem::new(
        Dataset {
            x,
            labels: Labels::Real(y),
        },
        lambda,
        4,
    )
    .unwrap()
}

#[test]
fn ridge_identity_solution_is_targets() {
    // X = I, lambda = 0: minimizer is w = y
    let y = vec![1.0, -2.0, 0.5];
    let p = RidgeProblem::new(
        Dataset {
            x: DenseMatrix::identity(3),
            labels: Labels::Real(y.clone()),
        },
        0.0,
        2,
    )
    .unwrap();
    let g = p.gradient_serial(&y);
    assert!(linalg::norm(&g) < 1e-14);
}

#[test]
fn ridge_gradient_zero_at_normal_equations_solution() {
    let p = toy_ridge(30, 6, 0.1, 40);
    let w_star = p.normal_equations_solution().unwrap();
    let g = p.gradient_serial(&w_star);
    assert!(linalg::norm(&g) <= 1e-10);
}

#[test]
fn ridge_hessian_matches_finite_differences() {
    let p = toy_ridge(20, 5, 0.05, 41);
    let mut rng = seed::rng(42);
    let w: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let h = p.hessian_factor(&w).assemble_exact();
    let fd = fd_hessian(&p, &w, 1e-5);
    let mut diff = h;
    diff.add_scaled(&fd, -1.0);
    assert!(diff.frobenius_norm() <= 1e-4 * fd.frobenius_norm().max(1.0));
}

#[test]
fn ridge_coded_gradient_equals_serial() {
    let p = toy_ridge(25, 4, 1e-3, 43);
    let mut rng = seed::rng(44);
    let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let serial = p.gradient_serial(&w);
    let mut exec = SimExecutor::new(StragglerModel::new(0.1, 25.0, 0.0, 45));
    let (coded, _) = p.gradient(&w, &mut exec).unwrap();
    assert!(rel_err(&coded, &serial) <= 1e-10);
}

#[test]
fn libsvm_basic_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.libsvm");
    std::fs::write(&path, "+1 1:0.5 3:2.0\n").unwrap();
    let data = load_libsvm(&path, None).unwrap();
    assert_eq!(data.num_features(), 3);
    assert_eq!(data.sample(0), vec![0.5, 0.0, 2.0]);
    match &data.labels {
        Labels::Binary(y) => assert_eq!(y, &vec![1.0]),
        _ => panic!(),
    }
}

#[test]
fn libsvm_empty_feature_list() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.libsvm");
    std::fs::write(&path, "-1 1:1.0\n-1\n").unwrap();
    let data = load_libsvm(&path, None).unwrap();
    assert_eq!(data.sample(1), vec![0.0]);
}

#[test]
fn libsvm_zero_one_labels_mapped() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.libsvm");
    std::fs::write(&path, "0 1:1.0\n1 1:2.0\n").unwrap();
    let data = load_libsvm(&path, None).unwrap();
    match &data.labels {
        Labels::Binary(y) => assert_eq!(y, &vec![-1.0, 1.0]),
        _ => panic!(),
    }
}

#[test]
fn libsvm_malformed_line_reports_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.libsvm");
    std::fs::write(&path, "+1 1:0.5\n+1 oops\n").unwrap();
    match load_libsvm(&path, None) {
        Err(ProblemError::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn libsvm_non_ascending_indices_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.libsvm");
    std::fs::write(&path, "+1 3:1.0 2:1.0\n").unwrap();
    match load_libsvm(&path, None) {
        Err(ProblemError::Parse { line, message, .. }) => {
            assert_eq!(line, 1);
            assert!(message.contains("ascending"));
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn libsvm_round_trip() {
    let (data, _, _) = gen_synthetic_logistic(20, 5, 50);
    let text = write_libsvm(&data);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rt.libsvm");
    std::fs::write(&path, &text).unwrap();
    let back = load_libsvm(&path, Some(5)).unwrap();
    assert_eq!(back.num_samples(), 20);
    for i in 0..20 {
        assert_eq!(back.sample(i), data.sample(i));
    }
}

#[test]
fn synthetic_features_in_cube() {
    let (data, _, _) = gen_synthetic_logistic(200, 6, 60);
    for v in data.x.data() {
        assert!((-1.0..=1.0).contains(v));
    }
}

#[test]
fn synthetic_label_frequencies_match_planted_model() {
    let n = 100_000;
    let (data, w, b) = gen_synthetic_logistic(n, 4, 61);
    let y = match &data.labels {
        Labels::Binary(y) => y,
        _ => panic!(),
    };
    let mut expected = 0.0;
    let mut var = 0.0;
    for i in 0..n {
        let z: f64 = (0..4).map(|r| data.x.get(r, i) * w[r]).sum::<f64>() + b;
        let p = 1.0 / (1.0 + z.exp());
        expected += p;
        var += p * (1.0 - p);
    }
    let observed = y.iter().filter(|&&v| v == 1.0).count() as f64;
    assert!((observed - expected).abs() <= 3.0 * var.sqrt());
}
