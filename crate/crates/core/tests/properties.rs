//! Property tests for the exact invariants of each building block.

use hybridae::ensemble::weighted_vote;
use hybridae::hessae::build_embedding;
use hybridae::lasso::{lasso_pgd, soft_threshold, LassoConfig};
use hybridae::neural::{backprop_ae, finite_difference_gradient, Autoencoder, ParamSet, SparsityConfig};
use hybridae::rng;
use hybridae::svm::{kkt_audit, smo_solve, KernelSpec};
use hybridae::wlppd::{eigen_residual, knn_affinity, local_scatter, locality_double_sum, solve_projection};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn sized_matrix(rows: std::ops::Range<usize>, cols: std::ops::Range<usize>, lo: f64, hi: f64) -> impl Strategy<Value = Array2<f64>> {
    (rows, cols).prop_flat_map(move |(r, c)| matrix(r, c, lo, hi))
}

fn sample_variance(c: ndarray::ArrayView1<f64>) -> f64 {
    let m = c.mean().unwrap();
    c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (c.len() - 1) as f64
}

fn spd(a: &Array2<f64>) -> Array2<f64> {
    a.t().dot(a) + Array2::<f64>::eye(a.ncols()) * 0.1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn backprop_matches_central_differences(
        x in sized_matrix(2..8, 2..6, 0.0, 1.0),
        hidden in 1usize..5,
        seed in any::<u64>(),
        rho in 0.02f64..0.3,
        beta in 0.1f64..5.0,
        lambda in 1e-5f64..1e-1,
    ) {
        let mut r = rng::seeded(seed);
        let ae = Autoencoder::new(x.ncols(), hidden, &mut r);
        let cfg = SparsityConfig { rho, beta, lambda };
        let flat = ae.flatten();
        let (_, g) = backprop_ae(x.view(), &ae.encoder, &ae.decoder, &cfg).unwrap();
        let mut probe = ae.clone();
        let numeric = finite_difference_gradient(
            |p| {
                probe.assign(p);
                probe.loss(x.view(), &cfg).unwrap()
            },
            &flat,
            1e-5,
        );
        for (a, b) in g.flatten().iter().zip(&numeric) {
            let diff = (a - b).abs();
            prop_assert!(diff <= 1e-10 || diff <= 1e-5 * a.abs().max(b.abs()), "analytic {a} numeric {b}");
        }
    }

    #[test]
    fn embedding_keeps_the_highest_variance_subset(
        concat in sized_matrix(3..10, 2..9, -2.0, 2.0),
        split in 0.0f64..1.0,
        pick in 0.0f64..1.0,
    ) {
        let width = concat.ncols();
        let n = 1 + ((width - 1) as f64 * split) as usize;
        let d = 1 + ((width - 1) as f64 * pick) as usize;
        let unit = build_embedding(concat.view(), n.min(width - 1), d).unwrap();
        let var: Vec<f64> = concat.columns().into_iter().map(sample_variance).collect();
        let best = (0u32..1 << width)
            .filter(|m| m.count_ones() as usize == d)
            .map(|m| (0..width).filter(|i| m >> i & 1 == 1).map(|i| var[i]).sum::<f64>())
            .fold(f64::MIN, f64::max);
        prop_assert_eq!(unit.selected.len(), d);
        let got: f64 = unit.selected.iter().map(|&i| var[i]).sum();
        prop_assert!(got >= best - 1e-12);
        for pair in unit.selected.windows(2) {
            prop_assert!(var[pair[0]] >= var[pair[1]]);
        }
    }

    #[test]
    fn soft_threshold_minimizes_the_proximal_objective(u in -3.0f64..3.0, tau in 0.0f64..2.0, probe in -4.0f64..4.0) {
        let f = |w: f64| 0.5 * (w - u) * (w - u) + tau * w.abs();
        let w = soft_threshold(u, tau);
        prop_assert!(f(w) <= f(probe) + 1e-12);
        prop_assert!(f(w) <= f(w + 1e-4) && f(w) <= f(w - 1e-4));
        if u.abs() <= tau {
            prop_assert_eq!(w, 0.0);
        }
    }

    #[test]
    fn unpenalized_lasso_solves_least_squares(x in matrix(30, 3, -1.0, 1.0), y in prop::collection::vec(-1.0f64..1.0, 30)) {
        let xn = DMatrix::from_fn(30, 3, |i, j| x[[i, j]]);
        let gram = xn.transpose() * &xn;
        prop_assume!(gram.clone().symmetric_eigenvalues().min() > 0.5);
        let y = Array1::from(y);
        let fit = lasso_pgd(x.view(), y.view(), &LassoConfig { kappa: 0.0, max_iters: 200_000, tol: 1e-13 }).unwrap();
        let exact = gram.lu().solve(&(xn.transpose() * DVector::from_iterator(30, y.iter().copied()))).unwrap();
        for j in 0..3 {
            prop_assert!((fit.w[j] - exact[j]).abs() <= 1e-6, "{} vs {}", fit.w[j], exact[j]);
        }
    }

    #[test]
    fn projection_columns_solve_the_eigenproblem(
        (a, b, c) in (2usize..6).prop_flat_map(|d| (matrix(d, d, -1.0, 1.0), matrix(d, d, -1.0, 1.0), matrix(d, d, -1.0, 1.0))),
        gamma in 0.0f64..1.0,
    ) {
        let (s_lw, s_lb, xlx) = (spd(&a), spd(&b), spd(&c));
        let d = s_lw.nrows();
        let p = solve_projection(&s_lw, &s_lb, &xlx, gamma, d, 1e-6).unwrap();
        for (j, &lambda) in p.eigenvalues.iter().enumerate() {
            prop_assert!(eigen_residual(&s_lw, &s_lb, &xlx, gamma, 1e-6, lambda, p.w.column(j)) <= 1e-8);
        }
    }

    #[test]
    fn locality_sum_equals_the_laplacian_trace(x in sized_matrix(6..20, 2..5, -1.0, 1.0), w in matrix(4, 2, -1.0, 1.0)) {
        let w = w.slice(ndarray::s![..x.ncols(), ..]).to_owned();
        let g = knn_affinity(x.view(), 3).unwrap();
        let double = locality_double_sum(&g, x.view(), w.view());
        let trace = 2.0 * w.t().dot(&g.xlx(x.view())).dot(&w).diag().sum();
        prop_assert!((double - trace).abs() <= 1e-8 * double.abs().max(1.0));
    }

    #[test]
    fn unit_ratio_scatter_is_classic_lda(x in matrix(24, 2, -1.0, 1.0)) {
        let n = x.nrows();
        let labels: Vec<usize> = (0..n).map(|i| 1 + i % 3).collect();
        let s = local_scatter(x.view(), &labels, 3, 1.0, 1.0).unwrap();
        let mu = x.mean_axis(Axis(0)).unwrap();
        let mut sb = Array2::<f64>::zeros((2, 2));
        let mut sw = Array2::<f64>::zeros((2, 2));
        for c in 1..=3 {
            let rows: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            let xc = x.select(Axis(0), &rows);
            let mc = xc.mean_axis(Axis(0)).unwrap();
            let dm = (&mc - &mu).insert_axis(Axis(1));
            sb = sb + dm.dot(&dm.t()) * rows.len() as f64;
            let centred = &xc - &mc;
            sw = sw + centred.t().dot(&centred);
        }
        for (got, want) in s.s_lb.iter().zip(&sb).chain(s.s_lw.iter().zip(&sw)) {
            prop_assert!((got - want).abs() <= 1e-10);
        }
    }

    #[test]
    fn vote_matches_direct_enumeration(
        units in prop::collection::vec((0.0f64..1.0, 1usize..6), 1..8),
        n_classes in 5usize..7,
        scale in 0.1f64..10.0,
    ) {
        let w: Vec<f64> = units.iter().map(|u| u.0).collect();
        let preds: Vec<usize> = units.iter().map(|u| u.1).collect();
        let (scores, label) = weighted_vote(&preds, n_classes, |i, _| w[i]);
        let direct: Vec<f64> = (1..=n_classes)
            .map(|c| (0..preds.len()).filter(|&i| preds[i] == c).map(|i| w[i]).sum())
            .collect();
        let max = direct.iter().copied().fold(f64::MIN, f64::max);
        prop_assert_eq!(label, 1 + direct.iter().position(|&s| s == max).unwrap());
        prop_assert_eq!(scores.len(), n_classes);
        // rounding may reorder classes whose scores differ only in the last bits
        let runner_up = direct.iter().enumerate().filter(|&(c, _)| c + 1 != label).map(|(_, &s)| s).fold(f64::MIN, f64::max);
        if max - runner_up > 1e-9 || max == runner_up {
            prop_assert_eq!(weighted_vote(&preds, n_classes, |i, _| w[i] * scale).1, label);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn smo_solutions_satisfy_kkt(
        x in sized_matrix(8..30, 2..4, -1.0, 1.0),
        c in prop::sample::select(vec![0.1, 1.0, 10.0]),
        rbf in any::<bool>(),
    ) {
        let y: Vec<f64> = x.rows().into_iter().map(|r| if r[0] + 0.3 * r[1] > 0.0 { 1.0 } else { -1.0 }).collect();
        prop_assume!(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0));
        let kernel = if rbf { KernelSpec::Rbf { gamma: 0.5 } } else { KernelSpec::Linear };
        let sol = smo_solve(x.view(), &y, c, kernel).unwrap();
        let rep = kkt_audit(x.view(), &y, &sol, c, kernel, 1e-3);
        prop_assert!(rep.passed, "max violation {}", rep.max_violation);
    }
}
