mod support;

use nalgebra::DMatrix;
use ntk_core::kernel::{gram_matrix, KernelConfig};
use ntk_core::ridge::{argmax_rows, ridge_fit, ridge_predict};
use ntk_core::svm::{predict_sign, svm_decision, svm_fit, ClassWeights, DEFAULT_TOL};
use proptest::prelude::*;

#[test]
fn smo_matches_exact_dual() {
    for seed in 0..60 {
        let p = support::random_svm_problem(seed);
        let model = svm_fit(&p.gram, &p.labels, p.cost, p.weights, DEFAULT_TOL).unwrap();
        let exact = support::brute_force_dual(&p);
        let got = model.dual_objective(&p.gram);
        assert!(model.converged);
        assert!(got <= exact + 1e-9, "seed {seed}: smo {got} above optimum {exact}");
        assert!(exact - got < 1e-3, "seed {seed}: smo {got}, optimum {exact}");
        assert!(model.kkt_residual(&p.gram) < 1e-3, "seed {seed}");
        assert!(model.feasibility_residual() < 1e-12, "seed {seed}");
    }
}

fn points(n: std::ops::Range<usize>, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, d), n)
}

fn distinct(xs: &[Vec<f64>]) -> bool {
    xs.iter()
        .enumerate()
        .all(|(i, a)| xs[..i].iter().all(|b| a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>() > 1e-2))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn ridge_interpolates_at_zero_ridge(
        xs in points(2..12, 4),
        targets in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 12),
        l in 1usize..4,
    ) {
        prop_assume!(distinct(&xs));
        let gram = gram_matrix(&xs, None, &KernelConfig::ntk(l, 0)).unwrap();
        let n = xs.len();
        let cond = {
            let ev = DMatrix::from_row_slice(n, n, gram.values()).symmetric_eigen().eigenvalues;
            ev.max() / ev.min()
        };
        prop_assume!(cond < 1e6);
        let y = &targets[..n];
        let model = ridge_fit(&gram, y, 0.0).unwrap();
        let pred = ridge_predict(&model, &gram).unwrap();
        for (p, t) in pred.iter().zip(y) {
            for (a, b) in p.iter().zip(t) {
                prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn ridge_argmax_invariant_to_gram_scaling(
        xs in points(4..10, 3),
        zs in points(1..5, 3),
        c in 0.1f64..20.0,
    ) {
        let cfg = KernelConfig::ntk(2, 0);
        let gram = gram_matrix(&xs, None, &cfg).unwrap();
        let cross = gram_matrix(&xs, Some(&zs), &cfg).unwrap();
        let y: Vec<Vec<f64>> = (0..xs.len()).map(|i| {
            let mut r = vec![0.0; 3];
            r[i % 3] = 1.0;
            r
        }).collect();
        let ridge = 0.1;
        let a = ridge_predict(&ridge_fit(&gram, &y, ridge).unwrap(), &cross).unwrap();
        let b = ridge_predict(&ridge_fit(&gram.scaled(c), &y, c * ridge).unwrap(), &cross.scaled(c)).unwrap();
        prop_assert_eq!(argmax_rows(&a), argmax_rows(&b));
        for (ra, rb) in a.iter().zip(&b) {
            for (u, v) in ra.iter().zip(rb) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn svm_sign_invariant_to_gram_and_cost_scaling(
        xs in points(4..12, 3),
        zs in points(1..8, 3),
        c in 0.1f64..10.0,
        cost in 0.1f64..10.0,
    ) {
        let cfg = KernelConfig::ntk(1, 0);
        let gram = gram_matrix(&xs, None, &cfg).unwrap();
        let cross = gram_matrix(&xs, Some(&zs), &cfg).unwrap();
        let labels: Vec<f64> = (0..xs.len()).map(|i| if xs[i][0] + 0.3 * xs[i][1] > 0.0 { 1.0 } else { -1.0 }).collect();
        prop_assume!(labels.iter().any(|&y| y > 0.0) && labels.iter().any(|&y| y < 0.0));
        let tol = 1e-8;
        let a = svm_fit(&gram, &labels, cost, ClassWeights::BALANCED, tol).unwrap();
        let b = svm_fit(&gram.scaled(c), &labels, cost / c, ClassWeights::BALANCED, tol).unwrap();
        let fa = svm_decision(&a, &cross).unwrap();
        let fb = svm_decision(&b, &cross.scaled(c)).unwrap();
        // only points decided with a clear margin are compared
        for (u, v) in fa.iter().zip(&fb) {
            if u.abs() > 1e-4 {
                prop_assert_eq!(predict_sign(&[*u]), predict_sign(&[*v]));
            }
        }
    }

    #[test]
    fn every_svm_model_satisfies_kkt(seed in 0u64..10_000) {
        let p = support::random_svm_problem(seed);
        let m = svm_fit(&p.gram, &p.labels, p.cost, p.weights, DEFAULT_TOL).unwrap();
        prop_assert!(m.feasibility_residual() < 1e-12);
        prop_assert!(m.kkt_residual(&p.gram) < DEFAULT_TOL);
    }
}

#[test]
fn large_cost_separates_training_data() {
    let xs: Vec<Vec<f64>> = (0..20)
        .map(|i| {
            let t = i as f64 * 0.31;
            vec![t.cos(), t.sin(), 0.5]
        })
        .collect();
    let labels: Vec<f64> = xs.iter().map(|x| if x[0] > 0.0 { 1.0 } else { -1.0 }).collect();
    let gram = gram_matrix(&xs, None, &KernelConfig::ntk(2, 0)).unwrap();
    let mut errors = Vec::new();
    for cost in [0.01, 1.0, 100.0, 10_000.0] {
        let m = svm_fit(&gram, &labels, cost, ClassWeights::BALANCED, DEFAULT_TOL).unwrap();
        let f = svm_decision(&m, &gram).unwrap();
        errors.push(predict_sign(&f).iter().zip(&labels).filter(|(a, b)| a != b).count());
    }
    assert_eq!(*errors.last().unwrap(), 0, "{errors:?}");
}
