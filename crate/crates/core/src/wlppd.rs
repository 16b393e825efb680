//! Weighted locality-preserving discriminant projection.
//!
//! Each random feature subspace gets a projection from the generalized
//! eigenproblem `(S_LB - gamma X L X^T + eps I)^-1 S_LW w = lambda w`, where
//! the scatter matrices are computed over outlier-trimmed neighborhoods of
//! the class and global centers, and `L` is the Laplacian of a symmetric kNN
//! graph. The subspace projections are lifted back to the full feature space
//! and averaged with weights `alpha`.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{ratio_count, stratified_holdout_split, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{from_na, real_eigenpairs, sq_dist, to_na};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalScatter {
    pub s_lb: Array2<f64>,
    pub s_lw: Array2<f64>,
    /// Mean of the `k_m` samples nearest the global mean.
    pub mu_lb: Array1<f64>,
    /// Per class, the mean of its members inside the global local part.
    pub mu_lbc: Vec<Option<Array1<f64>>>,
    /// Per class, the mean of its `k_mc` most central members.
    pub mu_lwc: Vec<Option<Array1<f64>>>,
    pub k_m: usize,
    pub k_mc: Vec<usize>,
    pub n_lc: Vec<usize>,
}

/// Indices of the `k` rows nearest to `centre`, distance ties to the lower index.
fn nearest_rows(x: ArrayView2<f64>, rows: &[usize], centre: ArrayView1<f64>, k: usize) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = rows.iter().map(|&i| (sq_dist(x.row(i), centre), i)).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, i)| i).collect()
}

fn mean_of(x: ArrayView2<f64>, rows: &[usize]) -> Array1<f64> {
    let mut m = Array1::zeros(x.ncols());
    for &i in rows {
        m += &x.row(i);
    }
    m / rows.len() as f64
}

fn add_outer(target: &mut Array2<f64>, v: ArrayView1<f64>, weight: f64) {
    let d = v.len();
    for a in 0..d {
        if v[a] == 0.0 {
            continue;
        }
        for b in 0..d {
            // product first so that entries (a, b) and (b, a) round identically
            target[[a, b]] += (v[a] * v[b]) * weight;
        }
    }
}

/// Local between/within-class scatter. `labels` are 1-based.
pub fn local_scatter(
    x: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    r_b: f64,
    r_w: f64,
) -> Result<LocalScatter> {
    for (name, r) in [("r_b", r_b), ("r_w", r_w)] {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::param(format!("{name} = {r} not in (0, 1]")));
        }
    }
    let (n, d) = x.dim();
    if labels.len() != n {
        return Err(Error::shape("label count differs from sample count"));
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 || l > n_classes {
            return Err(Error::param(format!("label {l} outside 1..={n_classes}")));
        }
        groups[l - 1].push(i);
    }

    let mut s_lw = Array2::zeros((d, d));
    let mut mu_lwc = vec![None; n_classes];
    let mut k_mc = vec![0; n_classes];
    for (c, g) in groups.iter().enumerate() {
        if g.is_empty() {
            continue;
        }
        let k = ratio_count(r_w, g.len());
        if k == 0 {
            return Err(Error::param(format!(
                "r_w = {r_w} leaves no samples of class {} ({} members)",
                c + 1,
                g.len()
            )));
        }
        let centre = mean_of(x, g);
        let local = nearest_rows(x, g, centre.view(), k);
        let mu = mean_of(x, &local);
        for &i in &local {
            add_outer(&mut s_lw, (&x.row(i) - &mu).view(), 1.0);
        }
        k_mc[c] = k;
        mu_lwc[c] = Some(mu);
    }

    let k_m = ratio_count(r_b, n);
    if k_m == 0 {
        return Err(Error::param(format!("r_b = {r_b} leaves no samples")));
    }
    let all: Vec<usize> = (0..n).collect();
    let centre = mean_of(x, &all);
    let local = nearest_rows(x, &all, centre.view(), k_m);
    let mu_lb = mean_of(x, &local);
    let mut s_lb = Array2::zeros((d, d));
    let mut mu_lbc = vec![None; n_classes];
    let mut n_lc = vec![0; n_classes];
    for c in 0..n_classes {
        let members: Vec<usize> = local.iter().copied().filter(|&i| labels[i] == c + 1).collect();
        if members.is_empty() {
            continue;
        }
        let mu = mean_of(x, &members);
        add_outer(&mut s_lb, (&mu - &mu_lb).view(), members.len() as f64);
        n_lc[c] = members.len();
        mu_lbc[c] = Some(mu);
    }
    Ok(LocalScatter { s_lb, s_lw, mu_lb, mu_lbc, mu_lwc, k_m, k_mc, n_lc })
}

/// Symmetric kNN graph stored as an edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnGraph {
    pub n: usize,
    pub k_nn: usize,
    /// Undirected edges `(i, j)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize)>,
    pub degree: Vec<usize>,
}

/// `A_ij = 1` iff `x_i` is among the `k_nn` nearest of `x_j` or vice versa.
pub fn knn_affinity(x: ArrayView2<f64>, k_nn: usize) -> Result<KnnGraph> {
    let n = x.nrows();
    if k_nn == 0 || k_nn >= n {
        return Err(Error::param(format!("k_nn = {k_nn} must be in 1..{n}")));
    }
    let mut edges = Vec::with_capacity(n * k_nn);
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        scored.clear();
        let xi = x.row(i);
        scored.extend((0..n).filter(|&j| j != i).map(|j| (sq_dist(xi, x.row(j)), j)));
        let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        scored.select_nth_unstable_by(k_nn - 1, by_dist);
        for &(_, j) in &scored[..k_nn] {
            edges.push((i.min(j), i.max(j)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    let mut degree = vec![0; n];
    for &(i, j) in &edges {
        degree[i] += 1;
        degree[j] += 1;
    }
    Ok(KnnGraph { n, k_nn, edges, degree })
}

impl KnnGraph {
    pub fn affinity(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n, self.n));
        for &(i, j) in &self.edges {
            a[[i, j]] = 1.0;
            a[[j, i]] = 1.0;
        }
        a
    }

    pub fn laplacian(&self) -> Array2<f64> {
        let mut l = -self.affinity();
        for (i, &deg) in self.degree.iter().enumerate() {
            l[[i, i]] = deg as f64;
        }
        l
    }

    /// `X L X^T` for samples stored as rows of `x`, i.e. the sum of
    /// `(x_i - x_j)(x_i - x_j)^T` over edges.
    pub fn xlx(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let d = x.ncols();
        let mut out = Array2::zeros((d, d));
        for &(i, j) in &self.edges {
            add_outer(&mut out, (&x.row(i) - &x.row(j)).view(), 1.0);
        }
        out
    }

    /// `X D X^T`, the degree-weighted second moment.
    pub fn xdx(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let d = x.ncols();
        let mut out = Array2::zeros((d, d));
        for (i, &deg) in self.degree.iter().enumerate() {
            add_outer(&mut out, x.row(i), deg as f64);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    /// `d x k`, unit-norm columns.
    pub w: Array2<f64>,
    pub eigenvalues: Vec<f64>,
    /// How many leading columns satisfy `w^T M w > 0`.
    pub n_feasible: usize,
}

/// Solve `(S_LB - gamma XLX + eps I)^-1 S_LW w = lambda w` and keep `k` pairs.
///
/// Pairs with `w^T M w > 0` (where the trace constraint can hold with a
/// positive constant) come first by ascending `lambda`; the others follow,
/// also by ascending `lambda`.
pub fn solve_projection(
    s_lw: &Array2<f64>,
    s_lb: &Array2<f64>,
    xlx: &Array2<f64>,
    gamma: f64,
    k: usize,
    epsilon: f64,
) -> Result<Projection> {
    let d = s_lw.nrows();
    for m in [s_lw, s_lb, xlx] {
        if m.dim() != (d, d) {
            return Err(Error::shape("scatter matrices must share one square shape"));
        }
    }
    if k == 0 || k > d {
        return Err(Error::param(format!("projection dimension {k} not in 1..={d}")));
    }
    let mut m = s_lb - &(xlx * gamma);
    for i in 0..d {
        m[[i, i]] += epsilon;
    }
    let m_na = to_na(&m);
    let a = m_na
        .clone()
        .lu()
        .solve(&to_na(s_lw))
        .ok_or_else(|| Error::Numerical("S_LB - gamma XLX + eps I is singular".into()))?;
    let pairs = real_eigenpairs(&a, 1e-8)?;
    let mut scored: Vec<(bool, f64, DVector<f64>)> = pairs
        .into_iter()
        .map(|(lambda, v)| {
            let feasible = v.dot(&(&m_na * &v)) > 0.0;
            (feasible, lambda, v)
        })
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.total_cmp(&b.1)));
    if scored.len() < k {
        return Err(Error::Numerical(format!(
            "only {} real eigenpairs, {k} requested",
            scored.len()
        )));
    }
    scored.truncate(k);
    let n_feasible = scored.iter().filter(|p| p.0).count();
    let eigenvalues = scored.iter().map(|p| p.1).collect();
    let w = DMatrix::from_fn(d, k, |r, c| scored[c].2[r]);
    Ok(Projection { w: from_na(&w), eigenvalues, n_feasible })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WlppdConfig {
    pub r_b: f64,
    pub r_w: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub k_nn: usize,
    /// Number of random feature subspaces `P`.
    pub subspaces: usize,
    /// Subspace dimension as a fraction of the input dimension (rounded up).
    pub subspace_ratio: f64,
    /// Output dimension as a fraction of the subspace dimension (rounded up).
    pub output_ratio: f64,
    /// Choose `alpha` on a simplex grid by validation accuracy instead of
    /// using uniform weights.
    pub alpha_search: bool,
    pub alpha_step: f64,
}

impl Default for WlppdConfig {
    fn default() -> Self {
        Self {
            r_b: 0.9,
            r_w: 0.9,
            gamma: 0.1,
            epsilon: 1e-6,
            k_nn: 5,
            subspaces: 5,
            subspace_ratio: 0.8,
            output_ratio: 1.0,
            alpha_search: false,
            alpha_step: 0.1,
        }
    }
}

impl WlppdConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("r_b", self.r_b),
            ("r_w", self.r_w),
            ("subspace_ratio", self.subspace_ratio),
            ("output_ratio", self.output_ratio),
        ] {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::param(format!("{name} = {r} not in (0, 1]")));
            }
        }
        if !(self.gamma >= 0.0) || !(self.epsilon >= 0.0) {
            return Err(Error::param("gamma and epsilon must be non-negative"));
        }
        if self.k_nn == 0 || self.subspaces == 0 {
            return Err(Error::param("k_nn and the subspace count must be positive"));
        }
        if self.alpha_search && !(self.alpha_step > 0.0 && self.alpha_step <= 1.0) {
            return Err(Error::param("alpha_step must be in (0, 1]"));
        }
        Ok(())
    }

    pub fn subspace_dim(&self, d: usize) -> usize {
        ((self.subspace_ratio * d as f64) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn output_dim(&self, d: usize) -> usize {
        let sd = self.subspace_dim(d);
        (((self.output_ratio * sd as f64) - 1e-9).ceil() as usize).clamp(1, sd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subspace {
    /// Sorted input columns used by this subspace.
    pub features: Vec<usize>,
    pub projection: Projection,
}

impl Subspace {
    /// The projection lifted to the full input dimension, zeros elsewhere.
    pub fn lifted(&self, d: usize) -> Array2<f64> {
        let k = self.projection.w.ncols();
        let mut out = Array2::zeros((d, k));
        for (r, &f) in self.features.iter().enumerate() {
            out.row_mut(f).assign(&self.projection.w.row(r));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projector {
    /// Combined `d x k` map.
    pub w: Array2<f64>,
    pub subspaces: Vec<Subspace>,
    pub alpha: Vec<f64>,
    pub gamma: f64,
    pub epsilon: f64,
}

impl Projector {
    pub fn identity(d: usize) -> Self {
        Self { w: Array2::eye(d), subspaces: Vec::new(), alpha: Vec::new(), gamma: 0.0, epsilon: 0.0 }
    }

    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn project(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape(format!(
                "projector expects {} features, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(x.dot(&self.w))
    }
}

/// `sum_i alpha_i W_i` over lifted subspace maps.
pub fn combine(lifted: &[Array2<f64>], alpha: &[f64]) -> Array2<f64> {
    let mut w = Array2::zeros(lifted[0].dim());
    for (l, &a) in lifted.iter().zip(alpha) {
        w.scaled_add(a, l);
    }
    w
}

fn draw_subspaces(d: usize, cfg: &WlppdConfig, seed: u64) -> Vec<Vec<usize>> {
    let dim = cfg.subspace_dim(d);
    (0..cfg.subspaces)
        .map(|p| {
            let mut r = rng::seeded(rng::derive(seed, p as u64));
            let mut f: Vec<usize> = (0..d).collect();
            f.shuffle(&mut r);
            f.truncate(dim);
            f.sort_unstable();
            f
        })
        .collect()
}

fn fit_subspaces(data: &Dataset, cfg: &WlppdConfig, features: &[Vec<usize>]) -> Result<Vec<Subspace>> {
    let k = cfg.output_dim(data.n_features());
    let k_nn = cfg.k_nn.min(data.n_samples().saturating_sub(1));
    features
        .iter()
        .map(|f| {
            let x = data.features.select(Axis(1), f);
            let sc = local_scatter(x.view(), &data.labels, data.n_classes, cfg.r_b, cfg.r_w)?;
            let graph = knn_affinity(x.view(), k_nn)?;
            let projection = solve_projection(&sc.s_lw, &sc.s_lb, &graph.xlx(x.view()), cfg.gamma, k, cfg.epsilon)?;
            Ok(Subspace { features: f.clone(), projection })
        })
        .collect()
}

/// Fit with uniform subspace weights.
pub fn fit_wlppd(data: &Dataset, cfg: &WlppdConfig, seed: u64) -> Result<Projector> {
    cfg.validate()?;
    if data.present_classes() < 2 {
        return Err(Error::SingleClass);
    }
    let d = data.n_features();
    let subspaces = fit_subspaces(data, cfg, &draw_subspaces(d, cfg, seed))?;
    let lifted: Vec<Array2<f64>> = subspaces.iter().map(|s| s.lifted(d)).collect();
    let alpha = vec![1.0 / subspaces.len() as f64; subspaces.len()];
    Ok(Projector { w: combine(&lifted, &alpha), subspaces, alpha, gamma: cfg.gamma, epsilon: cfg.epsilon })
}

/// All weight vectors on the simplex with entries in multiples of `step`,
/// in lexicographic order.
pub fn simplex_grid(parts: usize, step: f64) -> Vec<Vec<f64>> {
    fn rec(pos: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur[pos] = v;
            rec(pos + 1, left - v, cur, out);
        }
    }
    if parts == 0 {
        return Vec::new();
    }
    let units = (1.0 / step).round() as usize;
    let mut raw = Vec::new();
    rec(0, units, &mut vec![0; parts], &mut raw);
    raw.into_iter().map(|r| r.into_iter().map(|u| u as f64 / units as f64).collect()).collect()
}

/// Fit with `alpha` chosen on the simplex grid. Subspaces are fitted on an
/// 80% split, every grid point is scored by `evaluate(train_projected,
/// validation_projected)`, and the winning weights are applied to subspaces
/// refitted on all of `data`. Ties keep the earlier grid point.
pub fn fit_wlppd_alpha_search<F>(
    data: &Dataset,
    cfg: &WlppdConfig,
    seed: u64,
    mut evaluate: F,
) -> Result<(Projector, Vec<(Vec<f64>, f64)>)>
where
    F: FnMut(&Dataset, &Dataset) -> Result<f64>,
{
    cfg.validate()?;
    if data.present_classes() < 2 {
        return Err(Error::SingleClass);
    }
    let d = data.n_features();
    let features = draw_subspaces(d, cfg, seed);
    let (fit_part, val_part) = stratified_holdout_split(data, 0.2, rng::derive(seed, 500))?;
    let subspaces = fit_subspaces(&fit_part, cfg, &features)?;
    let lifted: Vec<Array2<f64>> = subspaces.iter().map(|s| s.lifted(d)).collect();

    let mut scores = Vec::new();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for alpha in simplex_grid(subspaces.len(), cfg.alpha_step) {
        let w = combine(&lifted, &alpha);
        let names: Vec<String> = (1..=w.ncols()).map(|i| format!("p{i}")).collect();
        let tr = fit_part.with_features(fit_part.features.dot(&w), names.clone())?;
        let va = val_part.with_features(val_part.features.dot(&w), names)?;
        let acc = evaluate(&tr, &va)?;
        if best.as_ref().is_none_or(|b| acc > b.1) {
            best = Some((alpha.clone(), acc));
        }
        scores.push((alpha, acc));
    }
    let (alpha, _) = best.ok_or_else(|| Error::param("empty alpha grid"))?;

    let subspaces = fit_subspaces(data, cfg, &features)?;
    let lifted: Vec<Array2<f64>> = subspaces.iter().map(|s| s.lifted(d)).collect();
    let w = combine(&lifted, &alpha);
    Ok((Projector { w, subspaces, alpha, gamma: cfg.gamma, epsilon: cfg.epsilon }, scores))
}

/// `|| A^-1 S w - lambda w ||_2` with `A = S_LB - gamma XLX + eps I`.
pub fn eigen_residual(
    s_lw: &Array2<f64>,
    s_lb: &Array2<f64>,
    xlx: &Array2<f64>,
    gamma: f64,
    epsilon: f64,
    lambda: f64,
    w: ArrayView1<f64>,
) -> f64 {
    let d = s_lw.nrows();
    let mut m = s_lb - &(xlx * gamma);
    for i in 0..d {
        m[[i, i]] += epsilon;
    }
    let sw = to_na(&s_lw.dot(&w).insert_axis(Axis(1)).to_owned());
    let Some(lhs) = to_na(&m).lu().solve(&sw) else {
        return f64::INFINITY;
    };
    (0..d).map(|i| (lhs[(i, 0)] - lambda * w[i]).powi(2)).sum::<f64>().sqrt()
}

/// Brute-force `sum_ij A_ij || W^T x_i - W^T x_j ||^2` over the dense affinity.
pub fn locality_double_sum(graph: &KnnGraph, x: ArrayView2<f64>, w: ArrayView2<f64>) -> f64 {
    let z = x.dot(&w);
    let a = graph.affinity();
    let mut total = 0.0;
    for i in 0..graph.n {
        for j in 0..graph.n {
            if a[[i, j]] != 0.0 {
                total += a[[i, j]] * sq_dist(z.row(i), z.row(j));
            }
        }
    }
    total
}
