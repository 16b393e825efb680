//! Exact property checks against independent oracles. Each check returns a
//! pass flag and a one-line detail.

use hybridae::ensemble::weighted_vote;
use hybridae::hessae::build_embedding;
use hybridae::lasso::{lasso_pgd, soft_threshold, LassoConfig};
use hybridae::neural::{backprop_ae, finite_difference_gradient, Autoencoder, ParamSet, SparsityConfig};
use hybridae::rng;
use hybridae::svm::{kkt_audit, smo_solve, train_multiclass, BinarySvm, KernelSpec};
use hybridae::wlppd::{eigen_residual, knn_affinity, local_scatter, locality_double_sum, solve_projection};
use nalgebra::{DMatrix, DVector};
use ndarray::{array, Array1, Array2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(id: u32, name: &str, passed: bool, detail: String) -> Self {
        Self { id, name: name.into(), passed, detail }
    }

    pub fn line(&self) -> String {
        format!("[{}] {:>2} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.id, self.name, self.detail)
    }
}

pub fn run_all() -> Vec<CheckResult> {
    vec![
        gradient_check(),
        embedding_optimality(),
        soft_threshold_and_least_squares(),
        projection_identities(),
        svm_kkt(),
        vote_enumeration(),
    ]
}

fn uniform(r: &mut rng::Rng, shape: (usize, usize), lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| r.random_range(lo..hi))
}

/// Backpropagation against central differences on random autoencoders with
/// the KL and L2 terms active.
pub fn gradient_check() -> CheckResult {
    let mut worst = 0.0f64;
    let mut r = rng::seeded(70);
    for _ in 0..50 {
        let d = r.random_range(2..7);
        let h = r.random_range(1..6);
        let n = r.random_range(2..9);
        let mut ae = Autoencoder::new(d, h, &mut r);
        let flat: Vec<f64> = (0..ae.flatten().len()).map(|_| r.random_range(-1.0..1.0)).collect();
        ae.assign(&flat);
        let x = uniform(&mut r, (n, d), 0.0, 1.0);
        let cfg = SparsityConfig {
            rho: r.random_range(0.02..0.3),
            beta: r.random_range(0.1..5.0),
            lambda: r.random_range(1e-5..1e-1),
        };
        let (_, g) = backprop_ae(x.view(), &ae.encoder, &ae.decoder, &cfg).expect("shapes agree");
        let mut probe = ae.clone();
        let numeric = finite_difference_gradient(
            |p| {
                probe.assign(p);
                probe.loss(x.view(), &cfg).expect("shapes agree")
            },
            &flat,
            1e-5,
        );
        for (a, b) in g.flatten().iter().zip(&numeric) {
            let diff = (a - b).abs();
            if diff > 1e-10 {
                worst = worst.max(diff / a.abs().max(b.abs()));
            }
        }
    }
    CheckResult::new(7, "backprop vs finite differences", worst <= 1e-5, format!("50 autoencoders, worst relative error {worst:.2e}"))
}

/// Variance-ranked selection against enumeration of every index subset.
pub fn embedding_optimality() -> CheckResult {
    let mut r = rng::seeded(80);
    let mut failures = 0;
    for _ in 0..100 {
        let n = r.random_range(1..5);
        let d = r.random_range(1..(9 - n));
        let rows = r.random_range(3..10);
        let concat = uniform(&mut r, (rows, n + d), -2.0, 2.0);
        let unit = build_embedding(concat.view(), n, d).expect("valid sizes");
        let var: Vec<f64> = concat
            .columns()
            .into_iter()
            .map(|c| {
                let m = c.mean().unwrap();
                c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (rows - 1) as f64
            })
            .collect();
        let width = n + d;
        let best = (0u32..1 << width)
            .filter(|mask| mask.count_ones() as usize == d)
            .map(|mask| (0..width).filter(|i| mask >> i & 1 == 1).map(|i| var[i]).sum::<f64>())
            .fold(f64::MIN, f64::max);
        let got: f64 = unit.selected.iter().map(|&i| var[i]).sum();
        if got < best - 1e-12 {
            failures += 1;
        }
    }
    CheckResult::new(8, "embedding selection optimality", failures == 0, format!("100 instances, {failures} suboptimal"))
}

/// The proximal map against a grid minimization, and the unpenalized lasso
/// against the normal equations.
pub fn soft_threshold_and_least_squares() -> CheckResult {
    let mut r = rng::seeded(90);
    let step = 1e-4;
    let mut worst_grid = 0.0f64;
    for _ in 0..1000 {
        let u = r.random_range(-3.0..3.0);
        let tau = r.random_range(0.0..2.0);
        let objective = |w: f64| 0.5 * (w - u) * (w - u) + tau * w.abs();
        let mut best = (f64::INFINITY, 0.0);
        let mut w = -4.0;
        while w <= 4.0 {
            let f = objective(w);
            if f < best.0 {
                best = (f, w);
            }
            w += step;
        }
        worst_grid = worst_grid.max((soft_threshold(u, tau) - best.1).abs());
    }

    let mut worst_ls = 0.0f64;
    for _ in 0..5 {
        let x = uniform(&mut r, (40, 4), -1.0, 1.0);
        let y = Array1::from_shape_fn(40, |_| r.random_range(-1.0..1.0));
        let fit = lasso_pgd(x.view(), y.view(), &LassoConfig { kappa: 0.0, max_iters: 200_000, tol: 1e-13 })
            .expect("well posed");
        let xn = DMatrix::from_fn(40, 4, |i, j| x[[i, j]]);
        let yn = DVector::from_iterator(40, y.iter().copied());
        let exact = (xn.transpose() * &xn).lu().solve(&(xn.transpose() * yn)).expect("full rank");
        for j in 0..4 {
            worst_ls = worst_ls.max((fit.w[j] - exact[j]).abs());
        }
    }
    CheckResult::new(
        9,
        "soft threshold and least squares",
        worst_grid <= step && worst_ls <= 1e-6,
        format!("1000 grid cases, worst gap {worst_grid:.1e} (grid step {step:.0e}); kappa = 0 vs normal equations {worst_ls:.1e}"),
    )
}

fn spd(r: &mut rng::Rng, d: usize) -> Array2<f64> {
    let a = uniform(r, (d, d), -1.0, 1.0);
    a.t().dot(&a) + Array2::<f64>::eye(d) * 0.1
}

/// Eigen residuals, the graph trace identity, and full-ratio scatter
/// against the classic LDA formulas.
pub fn projection_identities() -> CheckResult {
    let mut r = rng::seeded(100);
    let mut worst_res = 0.0f64;
    for _ in 0..20 {
        let d = r.random_range(2..7);
        let (s_lw, s_lb, xlx) = (spd(&mut r, d), spd(&mut r, d), spd(&mut r, d));
        let p = solve_projection(&s_lw, &s_lb, &xlx, 0.1, d, 1e-6).expect("solvable");
        for (j, &lambda) in p.eigenvalues.iter().enumerate() {
            worst_res = worst_res.max(eigen_residual(&s_lw, &s_lb, &xlx, 0.1, 1e-6, lambda, p.w.column(j)));
        }
    }

    let mut worst_trace = 0.0f64;
    for _ in 0..20 {
        let n = r.random_range(6..20);
        let d = r.random_range(2..5);
        let x = uniform(&mut r, (n, d), -1.0, 1.0);
        let w = uniform(&mut r, (d, 2), -1.0, 1.0);
        let g = knn_affinity(x.view(), 3).expect("enough rows");
        let double = locality_double_sum(&g, x.view(), w.view());
        let trace = 2.0 * w.t().dot(&g.xlx(x.view())).dot(&w).diag().sum();
        worst_trace = worst_trace.max((double - trace).abs() / double.abs().max(1.0));
    }

    let mut worst_lda = 0.0f64;
    for _ in 0..10 {
        let n = 30;
        let x = uniform(&mut r, (n, 2), -1.0, 1.0);
        let labels: Vec<usize> = (0..n).map(|i| 1 + i % 3).collect();
        let s = local_scatter(x.view(), &labels, 3, 1.0, 1.0).expect("valid");
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
        let gap = (&s.s_lb - &sb).iter().chain((&s.s_lw - &sw).iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        worst_lda = worst_lda.max(gap);
    }
    CheckResult::new(
        10,
        "projection identities",
        worst_res <= 1e-8 && worst_trace <= 1e-8 && worst_lda <= 1e-10,
        format!("eigen residual {worst_res:.1e}, trace identity {worst_trace:.1e}, LDA scatter {worst_lda:.1e}"),
    )
}

/// KKT audit of every pairwise model on random multiclass problems, plus XOR.
pub fn svm_kkt() -> CheckResult {
    let mut r = rng::seeded(110);
    let mut audited = 0;
    let mut failed = 0;
    let mut worst = 0.0f64;
    for trial in 0..6 {
        let n = 45;
        let x = uniform(&mut r, (n, 3), -1.0, 1.0);
        let labels: Vec<usize> = (0..n).map(|i| 1 + (x[[i, 0]] + 0.5 * x[[i, 1]] > 0.0) as usize + (x[[i, 2]] > 0.3) as usize).collect();
        let kernel = if trial % 2 == 0 { KernelSpec::Rbf { gamma: 0.5 } } else { KernelSpec::Linear };
        let c = [0.1, 1.0, 10.0][trial % 3];
        for a in 1..=3 {
            for b in (a + 1)..=3 {
                let rows: Vec<usize> = (0..n).filter(|&i| labels[i] == a || labels[i] == b).collect();
                if rows.iter().all(|&i| labels[i] == labels[rows[0]]) {
                    continue;
                }
                let xs = x.select(Axis(0), &rows);
                let y: Vec<f64> = rows.iter().map(|&i| if labels[i] == a { 1.0 } else { -1.0 }).collect();
                let sol = smo_solve(xs.view(), &y, c, kernel).expect("solvable");
                let rep = kkt_audit(xs.view(), &y, &sol, c, kernel, 1e-3);
                audited += 1;
                worst = worst.max(rep.max_violation);
                if !rep.passed {
                    failed += 1;
                }
            }
        }
    }
    let xor = array![[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
    let y = [1.0, 1.0, -1.0, -1.0];
    let k = KernelSpec::Rbf { gamma: 1.0 };
    let sol = smo_solve(xor.view(), &y, 10.0, k).expect("solvable");
    let m = BinarySvm::from_dual(xor.view(), &y, &sol, 10.0, k);
    let binary_hits = (0..4).filter(|&i| m.predict(xor.row(i)).map(|p| p.0 as f64 == y[i]).unwrap_or(false)).count();
    let multi = train_multiclass(xor.view(), &[1, 1, 2, 2], 2, 10.0, k).expect("two classes");
    let multi_hits = multi.predict(xor.view()).map(|p| p == vec![1, 1, 2, 2]).unwrap_or(false);
    CheckResult::new(
        11,
        "SVM KKT audit and XOR",
        failed == 0 && binary_hits == 4 && multi_hits,
        format!("{audited} models audited, {failed} failed, worst violation {worst:.1e}; XOR {binary_hits}/4"),
    )
}

/// The weighted vote against a direct argmax over classes, and argmax
/// invariance under positive weight scaling.
pub fn vote_enumeration() -> CheckResult {
    let mut r = rng::seeded(120);
    let mut mismatches = 0;
    let mut scale_breaks = 0;
    for _ in 0..1000 {
        let k = r.random_range(1..8);
        let n_classes = r.random_range(2..6);
        let w: Vec<f64> = (0..k).map(|_| r.random_range(0.0..1.0)).collect();
        let preds: Vec<usize> = (0..k).map(|_| r.random_range(1..=n_classes)).collect();
        let (_, label) = weighted_vote(&preds, n_classes, |i, _| w[i]);
        // score every class from scratch; the first class reaching the maximum wins
        let scores: Vec<f64> = (1..=n_classes)
            .map(|c| (0..k).filter(|&i| preds[i] == c).map(|i| w[i]).sum())
            .collect();
        let max = scores.iter().copied().fold(f64::MIN, f64::max);
        let expect = 1 + scores.iter().position(|&s| s == max).unwrap();
        if label != expect {
            mismatches += 1;
        }
        let s = r.random_range(0.1..10.0);
        if weighted_vote(&preds, n_classes, |i, _| w[i] * s).1 != label {
            scale_breaks += 1;
        }
    }
    CheckResult::new(
        12,
        "weighted vote enumeration",
        mismatches == 0 && scale_breaks == 0,
        format!("1000 cases, {mismatches} mismatches, {scale_breaks} scaling changes"),
    )
}
