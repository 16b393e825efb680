//! Tabular classification data: loading, min-max scaling, stratified hold-out
//! splits and bagging/random-subspace draws.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Labeled sample matrix. Rows are samples, labels are 1-based class indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub feature_ids: Vec<String>,
    /// Original label text for class `c` at position `c - 1`.
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let feature_ids = (1..=features.ncols()).map(|j| format!("f{j}")).collect();
        let class_names = (1..=n_classes).map(|c| c.to_string()).collect();
        Self::with_names(features, labels, n_classes, feature_ids, class_names)
    }

    pub fn with_names(
        features: Array2<f64>,
        labels: Vec<usize>,
        n_classes: usize,
        feature_ids: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::shape(format!(
                "{} rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if feature_ids.len() != features.ncols() {
            return Err(Error::shape("feature id count differs from column count"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l == 0 || l > n_classes) {
            return Err(Error::param(format!("label {bad} outside 1..={n_classes}")));
        }
        for ((row, column), v) in features.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row, column });
            }
        }
        Ok(Self { features, labels, n_classes, feature_ids, class_names })
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Sample count per class, index `c - 1`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l - 1] += 1;
        }
        counts
    }

    /// Row indices grouped by class, index `c - 1`, ascending within a class.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.n_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l - 1].push(i);
        }
        groups
    }

    /// Number of classes with at least one sample.
    pub fn present_classes(&self) -> usize {
        self.class_counts().iter().filter(|&&c| c > 0).count()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            n_classes: self.n_classes,
            feature_ids: self.feature_ids.clone(),
            class_names: self.class_names.clone(),
        }
    }

    pub fn select_features(&self, cols: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(1), cols),
            labels: self.labels.clone(),
            n_classes: self.n_classes,
            feature_ids: cols.iter().map(|&c| self.feature_ids[c].clone()).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// Same labels, new feature matrix.
    pub fn with_features(&self, features: Array2<f64>, feature_ids: Vec<String>) -> Result<Dataset> {
        Dataset::with_names(
            features,
            self.labels.clone(),
            self.n_classes,
            feature_ids,
            self.class_names.clone(),
        )
    }
}

/// Which column of a table holds the class label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelColumn {
    /// Zero-based column position.
    Index(usize),
    Name(String),
    Last,
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("last") {
            Ok(LabelColumn::Last)
        } else if let Ok(i) = s.parse::<usize>() {
            Ok(LabelColumn::Index(i))
        } else {
            Ok(LabelColumn::Name(s.to_string()))
        }
    }
}

impl std::fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelColumn::Index(i) => write!(f, "{i}"),
            LabelColumn::Name(n) => write!(f, "{n}"),
            LabelColumn::Last => write!(f, "last"),
        }
    }
}

/// Load a comma-delimited numeric table with one label column.
///
/// A first row is treated as a header when any of its feature cells fails to
/// parse as a number. Class labels are remapped to `1..=C` in sorted order of
/// the original labels (numeric order when every label is numeric).
pub fn load_table(path: impl AsRef<Path>, label: &LabelColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(file);

    let mut records: Vec<csv::StringRecord> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::EmptyTable);
    }
    let width = records[0].len();
    if width < 2 {
        return Err(Error::param("table needs at least one feature column and a label column"));
    }

    let first = &records[0];
    let header_guess = first.iter().any(|c| c.parse::<f64>().is_err());
    let label_idx = match label {
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => return Err(Error::LabelColumn(i.to_string())),
        LabelColumn::Last => width - 1,
        LabelColumn::Name(name) => {
            if !header_guess {
                return Err(Error::LabelColumn(format!("{name} (table has no header)")));
            }
            first
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::LabelColumn(name.clone()))?
        }
    };
    // a header is a first row whose feature cells are not all numeric
    let has_header = first
        .iter()
        .enumerate()
        .any(|(j, c)| j != label_idx && c.parse::<f64>().is_err());

    let feature_cols: Vec<usize> = (0..width).filter(|&j| j != label_idx).collect();
    let feature_ids: Vec<String> = if has_header {
        feature_cols.iter().map(|&j| first[j].to_string()).collect()
    } else {
        feature_cols.iter().map(|&j| format!("f{}", j + 1)).collect()
    };

    let body = if has_header { &records[1..] } else { &records[..] };
    if body.is_empty() {
        return Err(Error::EmptyTable);
    }

    let n = feature_cols.len();
    let mut features = Array2::<f64>::zeros((body.len(), n));
    let mut raw_labels = Vec::with_capacity(body.len());
    for (i, rec) in body.iter().enumerate() {
        let row = i + usize::from(has_header);
        for (k, &j) in feature_cols.iter().enumerate() {
            let cell = &rec[j];
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row,
                column: j,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, column: j });
            }
            features[[i, k]] = v;
        }
        raw_labels.push(rec[label_idx].to_string());
    }

    let (labels, class_names) = remap_labels(&raw_labels);
    if class_names.len() < 2 {
        return Err(Error::SingleClass);
    }
    Dataset::with_names(features, labels, class_names.len(), feature_ids, class_names)
}

fn remap_labels(raw: &[String]) -> (Vec<usize>, Vec<String>) {
    let all_numeric = raw.iter().all(|l| l.parse::<f64>().is_ok());
    let mut names: Vec<String> = raw.to_vec();
    names.sort();
    names.dedup();
    if all_numeric {
        names.sort_by(|a, b| {
            let (x, y) = (a.parse::<f64>().unwrap(), b.parse::<f64>().unwrap());
            x.total_cmp(&y).then_with(|| a.cmp(b))
        });
    }
    let lookup: BTreeMap<&str, usize> =
        names.iter().enumerate().map(|(i, n)| (n.as_str(), i + 1)).collect();
    let labels = raw.iter().map(|l| lookup[l.as_str()]).collect();
    (labels, names)
}

/// Per-feature minimum and maximum of the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Array1<f64>,
    pub max: Array1<f64>,
}

impl NormStats {
    pub fn fit(x: &Array2<f64>) -> Self {
        let min = x.fold_axis(Axis(0), f64::INFINITY, |&a, &b| a.min(b));
        let max = x.fold_axis(Axis(0), f64::NEG_INFINITY, |&a, &b| a.max(b));
        Self { min, max }
    }

    /// Scale to `[0, 1]` with the stored range, clipping out-of-range values.
    /// Constant features map to 0.
    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.min.len() {
            return Err(Error::shape(format!(
                "normalizer fitted on {} features, got {}",
                self.min.len(),
                x.ncols()
            )));
        }
        let mut out = x.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (lo, hi) = (self.min[j], self.max[j]);
            let span = hi - lo;
            col.mapv_inplace(|v| if span > 0.0 { ((v - lo) / span).clamp(0.0, 1.0) } else { 0.0 });
        }
        Ok(out)
    }
}

/// Min-max scale `train` to `[0, 1]` and apply the same map to `test`.
pub fn normalize_minmax(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset, NormStats)> {
    if train.n_samples() == 0 {
        return Err(Error::EmptyTable);
    }
    let stats = NormStats::fit(&train.features);
    let tr = train.with_features(stats.apply(&train.features)?, train.feature_ids.clone())?;
    let te = test.with_features(stats.apply(&test.features)?, test.feature_ids.clone())?;
    Ok((tr, te, stats))
}

/// Row indices of a hold-out split, each list ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn apply(&self, data: &Dataset) -> (Dataset, Dataset) {
        (data.select_rows(&self.train), data.select_rows(&self.test))
    }
}

/// Stratified hold-out indices. Each class contributes
/// `round(N_c * test_fraction)` test rows, but always keeps one row in train.
pub fn stratified_holdout_indices(data: &Dataset, test_fraction: f64, seed: u64) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::param(format!("test fraction {test_fraction} not in (0, 1)")));
    }
    let mut rng = rng::seeded(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, mut members) in data.class_indices().into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let wanted = (members.len() as f64 * test_fraction).round() as usize;
        let n_test = wanted.min(members.len() - 1);
        if n_test == 0 {
            warn!(
                "class {} has {} sample(s); none assigned to the test split",
                c + 1,
                members.len()
            );
        }
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

pub fn stratified_holdout_split(
    data: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let split = stratified_holdout_indices(data, test_fraction, seed)?;
    Ok(split.apply(data))
}

/// One bagging draw: a row sample and a feature subspace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BagSample {
    pub sample_indices: Vec<usize>,
    pub feature_indices: Vec<usize>,
    /// Seed of the successful draw.
    pub seed: u64,
}

const MAX_BAG_ATTEMPTS: u64 = 10;

pub(crate) fn ratio_count(ratio: f64, total: usize) -> usize {
    // the epsilon absorbs representation error such as 0.7 * 100 = 69.999..
    ((ratio * total as f64) + 1e-9).floor() as usize
}

/// Draw `floor(delta_rows * N)` rows without replacement, stratified by class,
/// and `floor(delta_features * n)` distinct features uniformly at random.
pub fn bagging_sample(
    data: &Dataset,
    delta_rows: f64,
    delta_features: f64,
    seed: u64,
) -> Result<BagSample> {
    for d in [delta_rows, delta_features] {
        if !(d > 0.0 && d <= 1.0) {
            return Err(Error::param(format!("sampling ratio {d} not in (0, 1]")));
        }
    }
    let n_rows = ratio_count(delta_rows, data.n_samples());
    let n_feats = ratio_count(delta_features, data.n_features());
    if n_rows == 0 || n_feats == 0 {
        return Err(Error::param("sampling ratio yields an empty bag"));
    }
    for attempt in 0..MAX_BAG_ATTEMPTS {
        let s = seed.wrapping_add(attempt);
        let bag = draw_bag(data, n_rows, n_feats, s);
        let classes: std::collections::BTreeSet<usize> =
            bag.sample_indices.iter().map(|&r| data.labels[r]).collect();
        if classes.len() >= 2 {
            return Ok(bag);
        }
    }
    Err(Error::Sampling(format!(
        "no draw with two or more classes after {MAX_BAG_ATTEMPTS} attempts"
    )))
}

fn draw_bag(data: &Dataset, n_rows: usize, n_feats: usize, seed: u64) -> BagSample {
    let mut rng = rng::seeded(seed);
    let groups = data.class_indices();
    let total = data.n_samples() as f64;

    // proportional allocation, remainders to the largest fractional parts
    let exact: Vec<f64> = groups.iter().map(|g| g.len() as f64 * n_rows as f64 / total).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = n_rows - alloc.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &c in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if alloc[c] < groups[c].len() {
            alloc[c] += 1;
            left -= 1;
        }
    }

    let mut rows = Vec::with_capacity(n_rows);
    for (g, &k) in groups.iter().zip(&alloc) {
        let mut g = g.clone();
        g.shuffle(&mut rng);
        rows.extend_from_slice(&g[..k]);
    }
    rows.sort_unstable();

    let mut feats: Vec<usize> = (0..data.n_features()).collect();
    feats.shuffle(&mut rng);
    feats.truncate(n_feats);
    feats.sort_unstable();

    BagSample { sample_indices: rows, feature_indices: feats, seed }
}

/// Small-sample stand-in for a private 90 x 32, three-class dataset: Gaussian
/// class clusters whose centers are `separation` apart along random
/// directions. Used for smoke tests only.
pub fn synthetic_small_sample(seed: u64, separation: f64) -> Dataset {
    const PER_CLASS: usize = 30;
    const N_FEATURES: usize = 32;
    const N_CLASSES: usize = 3;
    let mut rng = rng::seeded(seed);
    let centers: Vec<Vec<f64>> = (0..N_CLASSES)
        .map(|_| {
            let v: Vec<f64> = (0..N_FEATURES).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm * separation).collect()
        })
        .collect();
    let mut features = Array2::zeros((PER_CLASS * N_CLASSES, N_FEATURES));
    let mut labels = Vec::with_capacity(PER_CLASS * N_CLASSES);
    for (c, center) in centers.iter().enumerate() {
        for i in 0..PER_CLASS {
            let row = c * PER_CLASS + i;
            for j in 0..N_FEATURES {
                let z: f64 = StandardNormal.sample(&mut rng);
                features[[row, j]] = center[j] + z;
            }
            labels.push(c + 1);
        }
    }
    Dataset::new(features, labels, N_CLASSES).expect("synthetic data is well formed")
}
