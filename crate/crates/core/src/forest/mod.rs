//! Random forest classification with balanced class weights, impurity based
//! feature importance and cross-validated recursive feature elimination.

mod rfe;
mod tree;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use rfe::{rfe_rank, rfe_rank_single, RfeRanking};
pub use tree::{root_split, DecisionTree, Node, SplitCandidate};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_TREES: usize = 100;

/// Dense row-major matrix of finite feature values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::Data(format!(
                "matrix of {n_rows}x{n_cols} needs {} values, got {}",
                n_rows * n_cols,
                data.len()
            )));
        }
        Ok(Matrix { n_rows, n_cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_cols {
                return Err(Error::Data(format!(
                    "row {i} has {} values, expected {n_cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            n_rows: rows.len(),
            n_cols,
            data,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_cols.max(1)).take(self.n_rows)
    }

    /// Rows picked by index, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix {
            n_rows: rows.len(),
            n_cols: self.n_cols,
            data,
        }
    }

    /// Columns picked by index, in the given order.
    pub fn select_cols(&self, cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.n_rows * cols.len());
        for r in 0..self.n_rows {
            data.extend(cols.iter().map(|&c| self.get(r, c)));
        }
        Matrix {
            n_rows: self.n_rows,
            n_cols: cols.len(),
            data,
        }
    }

    /// Side-by-side concatenation of two matrices with equal row counts.
    pub fn hstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.n_rows != other.n_rows {
            return Err(Error::Data(format!(
                "cannot join {} rows with {} rows",
                self.n_rows, other.n_rows
            )));
        }
        let mut data = Vec::with_capacity(self.n_rows * (self.n_cols + other.n_cols));
        for r in 0..self.n_rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Matrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols + other.n_cols,
            data,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    Uniform,
    /// `w_k = n / (K * n_k)`.
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate features per split; `None` means `ceil(sqrt(p))`.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub class_weighting: ClassWeighting,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: DEFAULT_TREES,
            max_features: None,
            min_samples_split: 2,
            class_weighting: ClassWeighting::Balanced,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn resolved_max_features(&self, n_features: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub format_version: u32,
    pub n_features: usize,
    pub n_classes: usize,
    pub class_weights: Vec<f64>,
    pub seed: u64,
    pub params: ForestParams,
    pub trees: Vec<DecisionTree>,
}

/// Per-feature mean decrease in impurity, normalized to sum one (or all zero
/// when no tree ever split).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance(pub Vec<f64>);

/// Balanced class weights `n / (K * n_k)`.
pub fn balanced_class_weights(y: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &c in y {
        counts[c] += 1;
    }
    let n = y.len() as f64;
    counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { n / (n_classes as f64 * c as f64) })
        .collect()
}

fn check_training_data(x: &Matrix, y: &[usize]) -> Result<usize> {
    if x.n_rows() == 0 || x.n_cols() == 0 {
        return Err(Error::Data("empty feature table".into()));
    }
    if y.len() != x.n_rows() {
        return Err(Error::Data(format!(
            "{} labels for {} feature rows",
            y.len(),
            x.n_rows()
        )));
    }
    if let Some(pos) = x.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "non-finite feature at row {}, column {}",
            pos / x.n_cols(),
            pos % x.n_cols()
        )));
    }
    let n_classes = y.iter().max().map_or(0, |m| m + 1);
    let mut present = vec![false; n_classes];
    for &c in y {
        present[c] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Data("training labels contain a single class".into()));
    }
    Ok(n_classes.max(2))
}

/// Fits a forest. Each tree draws its bootstrap sample and feature orders
/// from its own sub-seed, so the result does not depend on the thread count.
pub fn fit(x: &Matrix, y: &[usize], params: &ForestParams, seed: u64) -> Result<RandomForest> {
    let n_classes = check_training_data(x, y)?;
    if params.n_trees == 0 {
        return Err(Error::Config("forest needs at least one tree".into()));
    }
    let class_weights = match params.class_weighting {
        ClassWeighting::Balanced => balanced_class_weights(y, n_classes),
        ClassWeighting::Uniform => vec![1.0; n_classes],
    };
    let n = x.n_rows();
    let max_features = params.resolved_max_features(x.n_cols());
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed, t as u64);
            let mut count = vec![0u32; n];
            if params.bootstrap {
                for _ in 0..n {
                    count[rng.random_range(0..n)] += 1;
                }
            } else {
                count.fill(1);
            }
            let weight: Vec<f64> = (0..n).map(|i| count[i] as f64 * class_weights[y[i]]).collect();
            let builder = tree::TreeBuilder {
                x,
                y,
                n_classes,
                weight: &weight,
                count: &count,
                max_features,
                min_samples_split: params.min_samples_split,
            };
            builder.build(&mut rng)
        })
        .collect();
    Ok(RandomForest {
        format_version: MODEL_FORMAT_VERSION,
        n_features: x.n_cols(),
        n_classes,
        class_weights,
        seed,
        params: params.clone(),
        trees,
    })
}

impl RandomForest {
    fn check_width(&self, width: usize) -> Result<()> {
        if width != self.n_features {
            return Err(Error::Data(format!(
                "model expects {} features, got {width}",
                self.n_features
            )));
        }
        Ok(())
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_width(row.len())?;
        let mut acc = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (a, p) in acc.iter_mut().zip(t.leaf_probabilities(row)) {
                *a += p;
            }
        }
        let k = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        Ok(acc)
    }

    /// Per-class probabilities for every row, averaged over trees.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<Vec<f64>>> {
        self.check_width(x.n_cols())?;
        (0..x.n_rows())
            .into_par_iter()
            .map(|r| self.predict_row(x.row(r)))
            .collect()
    }

    /// Probability of class 1 for each row.
    pub fn predict_positive(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.predict_proba(x)?.into_iter().map(|p| p[1]).collect())
    }

    pub fn feature_importance(&self) -> FeatureImportance {
        let mut acc = vec![0.0; self.n_features];
        for t in &self.trees {
            let per = t.impurity_decrease_by_feature(self.n_features);
            let total: f64 = per.iter().sum();
            if total > 0.0 {
                for (a, v) in acc.iter_mut().zip(&per) {
                    *a += v / total;
                }
            }
        }
        let total: f64 = acc.iter().sum();
        if total > 0.0 {
            acc.iter_mut().for_each(|a| *a /= total);
        }
        FeatureImportance(acc)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: RandomForest = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format {
                offset: 0,
                message: format!("unsupported model format version {}", model.format_version),
            });
        }
        for (t, tree) in model.trees.iter().enumerate() {
            for node in &tree.nodes {
                match node {
                    Node::Split {
                        feature, left, right, ..
                    } if *feature >= model.n_features || *left >= tree.nodes.len() || *right >= tree.nodes.len() => {
                        return Err(Error::Format {
                            offset: 0,
                            message: format!("tree {t} has an invalid split node"),
                        });
                    }
                    _ => {}
                }
            }
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn xor(n: usize, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = crate::seed::rng(seed, 0);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            y.push(usize::from((a > 0.0) != (b > 0.0)));
            rows.push(vec![a, b]);
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    fn accuracy(model: &RandomForest, x: &Matrix, y: &[usize]) -> f64 {
        let p = model.predict_positive(x).unwrap();
        p.iter().zip(y).filter(|(p, &c)| usize::from(**p > 0.5) == c).count() as f64 / y.len() as f64
    }

    #[test]
    fn single_binary_feature_is_learned_exactly() {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![(i % 2) as f64]).collect();
        let y: Vec<usize> = (0..200).map(|i| i % 2).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let model = fit(&x, &y, &ForestParams::default(), 3).unwrap();
        assert_eq!(model.trees.len(), 100);
        assert_eq!(accuracy(&model, &x, &y), 1.0);
    }

    #[test]
    fn xor_is_fit() {
        let (x, y) = xor(400, 11);
        let model = fit(&x, &y, &ForestParams::default(), 5).unwrap();
        assert!(accuracy(&model, &x, &y) >= 0.95);
    }

    #[test]
    fn errors_on_single_class_and_empty() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(fit(&x, &[0, 0], &ForestParams::default(), 0).is_err());
        let empty = Matrix::new(0, 0, vec![]).unwrap();
        assert!(fit(&empty, &[], &ForestParams::default(), 0).is_err());
        let nan = Matrix::from_rows(&[vec![f64::NAN], vec![2.0]]).unwrap();
        assert!(fit(&nan, &[0, 1], &ForestParams::default(), 0).is_err());
    }

    #[test]
    fn prediction_is_mean_of_trees() {
        let (x, y) = xor(120, 2);
        let model = fit(
            &x,
            &y,
            &ForestParams {
                n_trees: 15,
                ..Default::default()
            },
            9,
        )
        .unwrap();
        let (probe, _) = xor(30, 77);
        let got = model.predict_proba(&probe).unwrap();
        for (r, row) in got.iter().enumerate() {
            let mut oracle = [0.0; 2];
            for t in &model.trees {
                let leaf = t.leaf_probabilities(probe.row(r));
                oracle[0] += leaf[0] / 15.0;
                oracle[1] += leaf[1] / 15.0;
            }
            assert!((row[0] - oracle[0]).abs() < 1e-12);
            assert!((row[1] - oracle[1]).abs() < 1e-12);
            assert!((row[0] + row[1] - 1.0).abs() < 1e-9);
        }
        assert!(model.predict_row(&[1.0]).is_err());
    }

    #[test]
    fn leaves_sum_to_one_and_splits_are_valid() {
        let (x, y) = xor(200, 4);
        let model = fit(&x, &y, &ForestParams::default(), 1).unwrap();
        for t in &model.trees {
            for node in &t.nodes {
                match node {
                    Node::Split { feature, .. } => assert!(*feature < 2),
                    Node::Leaf { probabilities } => {
                        assert!((probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9)
                    }
                }
            }
        }
    }

    #[test]
    fn planted_feature_is_most_important_and_constant_is_zero() {
        let mut rng = crate::seed::rng(8, 0);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..300 {
            let label = rng.random_bool(0.4);
            let mut row: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            row[2] = if label { 1.0 } else { 0.0 } + 0.6 * rng.random::<f64>();
            row[5] = 3.0;
            rows.push(row);
            y.push(usize::from(label));
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let imp = fit(&x, &y, &ForestParams::default(), 2).unwrap().feature_importance().0;
        let best = (0..6).max_by(|&a, &b| imp[a].total_cmp(&imp[b])).unwrap();
        assert_eq!(best, 2);
        assert_eq!(imp[5], 0.0);
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(imp.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn bit_identical_across_thread_counts() {
        let (x, y) = xor(200, 6);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| fit(&x, &y, &ForestParams::default(), 21).unwrap())
        };
        let (a, b) = (run(1), run(8));
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn balanced_weights_match_duplication_at_root() {
        // 30 negatives, 10 positives; triplicating positives equalizes counts
        let mut rng = crate::seed::rng(14, 0);
        let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random(), rng.random()]).collect();
        let y: Vec<usize> = (0..40).map(|i| usize::from(i < 10)).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let w = balanced_class_weights(&y, 2);
        let weighted: Vec<f64> = y.iter().map(|&c| w[c]).collect();
        let a = root_split(&x, &y, 2, &weighted).unwrap();

        let mut dup_rows = rows.clone();
        let mut dup_y = y.clone();
        for row in rows.iter().take(10) {
            for _ in 0..2 {
                dup_rows.push(row.clone());
                dup_y.push(1);
            }
        }
        let dx = Matrix::from_rows(&dup_rows).unwrap();
        let b = root_split(&dx, &dup_y, 2, &vec![1.0; 60]).unwrap();
        assert_eq!((a.feature, a.threshold), (b.feature, b.threshold));
        assert!((a.parent_impurity - b.parent_impurity).abs() < 1e-9);
        assert!((a.left_impurity - b.left_impurity).abs() < 1e-9);
        assert!((a.right_impurity - b.right_impurity).abs() < 1e-9);
        assert!((a.relative_decrease() - b.relative_decrease()).abs() < 1e-9);
    }

    #[test]
    fn model_json_round_trip_and_validation() {
        let (x, y) = xor(60, 1);
        let model = fit(
            &x,
            &y,
            &ForestParams {
                n_trees: 5,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        let back = RandomForest::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        let mut bad = model.clone();
        bad.format_version = 99;
        assert!(RandomForest::from_json(&bad.to_json().unwrap()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn monotone_transform_keeps_tree_structure(seed in 0u64..1000, col in 0usize..2, bootstrap: bool) {
            let (x, y) = xor(80, seed);
            let params = ForestParams { n_trees: 10, bootstrap, ..Default::default() };
            let base = fit(&x, &y, &params, seed).unwrap();
            let rows: Vec<Vec<f64>> = x
                .rows()
                .map(|r| {
                    let mut r = r.to_vec();
                    r[col] = (3.0 * r[col]).exp() + 2.0;
                    r
                })
                .collect();
            let tx = Matrix::from_rows(&rows).unwrap();
            let moved = fit(&tx, &y, &params, seed).unwrap();
            for (a, b) in base.trees.iter().zip(&moved.trees) {
                prop_assert_eq!(a.nodes.len(), b.nodes.len());
                for (na, nb) in a.nodes.iter().zip(&b.nodes) {
                    match (na, nb) {
                        (
                            Node::Split { feature: fa, left: la, right: ra, .. },
                            Node::Split { feature: fb, left: lb, right: rb, .. },
                        ) => prop_assert_eq!((fa, la, ra), (fb, lb, rb)),
                        (Node::Leaf { probabilities: pa }, Node::Leaf { probabilities: pb }) => {
                            prop_assert_eq!(pa, pb)
                        }
                        _ => prop_assert!(false, "node kinds differ"),
                    }
                }
            }
            // Without resampling every training row is in-sample for every
            // tree, so its path cannot move across a relabeled threshold.
            if !bootstrap {
                prop_assert_eq!(base.predict_proba(&x).unwrap(), moved.predict_proba(&tx).unwrap());
            }
        }
    }
}
